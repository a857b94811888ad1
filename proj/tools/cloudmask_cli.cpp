// Command-line front end. Exit codes: 0 success, 1 usage or configuration
// error, 2 I/O or processing failure.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "cloudmask/cloudmask.hpp"

namespace fs = std::filesystem;
using namespace cloudmask;

namespace {

constexpr int kUsage = 1;
constexpr int kFailure = 2;

/// Finds the table whose vocabulary a category raster was written with.
RuleTable table_for_tag(const std::string& tag, const std::optional<fs::path>& rules) {
  if (rules) {
    RuleTable t = RuleTable::parse(detail::read_text_file(*rules));
    if (t.vocabulary().name() != tag)
      throw config_error("rule table '" + t.name() + "' does not match category map '" + tag + "'");
    return t;
  }
  if (default_rgb_table().vocabulary().name() == tag) return default_rgb_table();
  for (SiamSubsystem s : {SiamSubsystem::L7, SiamSubsystem::S4, SiamSubsystem::AV4, SiamSubsystem::V4})
    if (default_siam_table(s).vocabulary().name() == tag) return default_siam_table(s);
  throw config_error("no shipped rule table for category map '" + tag + "'; pass --rules");
}

ColorNameMap read_categories(const fs::path& path, const std::optional<fs::path>& rules) {
  const LabelRaster lr = read_label_raster(path);
  return from_label_raster(lr, table_for_tag(lr.tag, rules));
}

PipelineSetup setup_from(const std::optional<fs::path>& config) {
  if (!config) return load_pipeline_setup(PipelineConfig{});
  if (!fs::is_regular_file(*config)) throw config_error("config file not found: " + config->string());
  return load_pipeline_setup(
      parse_pipeline_config(detail::read_text_file(*config), config->parent_path()));
}

DetectionConfig detection_from(const std::optional<fs::path>& path) {
  if (!path) return {};
  if (!fs::is_regular_file(*path)) throw config_error("detection config not found: " + path->string());
  return parse_detection_config(detail::read_text_file(*path));
}

/// cloud / cloud-shadow / clear-sky, the three-class legend of the
/// accuracy protocol.
std::uint32_t three_class(std::uint32_t code) {
  if (code == 1 || code == 2) return 0;
  if (code == 4) return 1;
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cloud and cloud-shadow masking for multispectral imagery"};
  app.require_subcommand(1);
  unsigned threads = default_thread_count();
  app.add_option("--threads", threads, "Worker threads for tiled stages")->check(CLI::PositiveNumber);

  // calibrate
  fs::path cal_in, cal_out;
  std::optional<fs::path> cal_profile;
  auto* cal = app.add_subcommand("calibrate", "Convert a DN image to TOA reflectance");
  cal->add_option("--input", cal_in, "Input image header")->required();
  cal->add_option("--output", cal_out, "Output image header")->required();
  cal->add_option("--profile", cal_profile, "Sensor profile overriding per-band constants");

  // stretch
  fs::path st_in, st_out;
  std::optional<fs::path> st_lut;
  auto* st = app.add_subcommand("stretch", "Colour-constancy stretch of the R, G, B bands");
  st->add_option("--input", st_in, "Input image header or RGB pixmap")->required();
  st->add_option("--output", st_out, "Output image header (3 bands, DN)")->required();
  st->add_option("--lut", st_lut, "Write the per-band lookup tables here");

  // quantize
  fs::path qz_in, qz_out;
  std::optional<fs::path> qz_rules, qz_pseudo;
  std::string qz_mode = "auto";
  bool qz_no_stretch = false;
  auto* qz = app.add_subcommand("quantize", "Map pixels onto spectral categories");
  qz->add_option("--input", qz_in, "Input image header or RGB pixmap")->required();
  qz->add_option("--output", qz_out, "Output category raster header")->required();
  qz->add_option("--rules", qz_rules, "Rule table file (default: shipped table)");
  qz->add_option("--mode", qz_mode, "rgb, siam or auto (siam for calibrated input)")
      ->check(CLI::IsMember({"auto", "rgb", "siam"}));
  qz->add_flag("--no-stretch", qz_no_stretch, "RGB input is already byte-stretched");
  qz->add_option("--pseudocolor", qz_pseudo, "Write a pseudocolour pixmap");

  // segment
  fs::path sg_in, sg_out;
  std::optional<fs::path> sg_rules, sg_table;
  int sg_conn = 8;
  std::size_t sg_tile = 512;
  double sg_res = 30.0;
  auto* sg = app.add_subcommand("segment", "Connected-component labelling of a category map");
  sg->add_option("--input", sg_in, "Category raster header")->required();
  sg->add_option("--output", sg_out, "Segment raster header")->required();
  sg->add_option("--rules", sg_rules, "Rule table the category map was made with");
  sg->add_option("--connectivity", sg_conn, "4 or 8")->check(CLI::IsMember({4, 8}));
  sg->add_option("--tile-size", sg_tile, "Tile size in pixels")->check(CLI::PositiveNumber);
  sg->add_option("--resolution", sg_res, "Pixel size in metres")->check(CLI::PositiveNumber);
  sg->add_option("--table", sg_table, "Write the segment table (CSV)");

  // detect
  fs::path dt_img, dt_cat, dt_out = "cloudmask-out";
  std::optional<fs::path> dt_rgb, dt_rules, dt_cfg;
  int dt_conn = 8;
  auto* dt = app.add_subcommand("detect", "Run the spatial detectors on category maps");
  dt->add_option("--image", dt_img, "Image the categories were computed from")->required();
  dt->add_option("--categories", dt_cat, "Primary category raster (SIAM, or RGB when uncalibrated)")
      ->required();
  dt->add_option("--rgb-categories", dt_rgb, "RGB category raster fused with a SIAM map");
  dt->add_option("--rules", dt_rules, "Rule table of the primary map");
  dt->add_option("--detection", dt_cfg, "Detection config file");
  dt->add_option("--connectivity", dt_conn, "4 or 8")->check(CLI::IsMember({4, 8}));
  dt->add_option("--output-dir", dt_out, "Output directory");

  // validate
  fs::path vl_map, vl_truth;
  std::optional<fs::path> vl_csv;
  std::optional<std::size_t> vl_n;
  double vl_p = 0.85, vl_delta = 0.02, vl_alpha = 0.03;
  std::uint64_t vl_seed = 1;
  bool vl_all = false, vl_census = false;
  auto* vl = app.add_subcommand("validate", "Accuracy assessment of a mask against a reference mask");
  vl->add_option("--mapped", vl_map, "Mapped scene mask header")->required();
  vl->add_option("--reference", vl_truth, "Reference scene mask header")->required();
  vl->add_option("--per-class", vl_n, "Reference units per class (default: required sample size)");
  vl->add_option("--target", vl_p, "Target overall accuracy p");
  vl->add_option("--half-width", vl_delta, "Half-width delta");
  vl->add_option("--alpha", vl_alpha, "Significance alpha");
  vl->add_option("--seed", vl_seed, "Sampling seed");
  vl->add_flag("--all-classes", vl_all, "Use raw mask codes instead of cloud/cloud-shadow/clear-sky");
  vl->add_flag("--census", vl_census, "Use every pixel instead of a stratified sample");
  vl->add_option("--csv", vl_csv, "Write the machine-readable report here");

  // synth
  std::optional<fs::path> sy_spec;
  std::optional<std::uint64_t> sy_random;
  fs::path sy_out = "synth-out";
  auto* sy = app.add_subcommand("synth", "Generate a synthetic scene with ray-cast truth");
  auto* sy_spec_opt = sy->add_option("--spec", sy_spec, "Scene spec file");
  sy->add_option("--random", sy_random, "Random scene from this seed")->excludes(sy_spec_opt);
  sy->add_option("--output-dir", sy_out, "Output directory");

  // pipeline
  fs::path pl_in;
  std::optional<fs::path> pl_cfg, pl_out;
  auto* pl = app.add_subcommand("pipeline", "Run every stage end to end");
  pl->add_option("--input", pl_in, "Input image header or RGB pixmap")->required();
  pl->add_option("--config", pl_cfg, "Pipeline config file");
  pl->add_option("--output-dir", pl_out, "Output directory (overrides the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (*cal) {
      MultiSpectralImage img = read_image(cal_in);
      if (cal_profile) apply_sensor_profile(img, parse_sensor_profile(detail::read_text_file(*cal_profile)));
      write_image(calibrate_to_toarf(img, threads), cal_out);
    } else if (*st) {
      const StretchResult r = color_constancy_stretch(read_image(st_in));
      write_image(r.image, st_out);
      if (st_lut) {
        std::string text;
        for (const auto& [role, lut] : r.luts) text += "# band " + std::string(role_name(role)) + "\n" + lut.dump();
        detail::write_text_file(*st_lut, text);
      }
    } else if (*qz) {
      const MultiSpectralImage img = read_image(qz_in);
      const bool siam = qz_mode == "siam" || (qz_mode == "auto" && img.units() == Units::TOARF);
      ColorNameMap map;
      if (siam) {
        const SiamSubsystem sub = select_subsystem(img.roles());
        const RuleTable table =
            qz_rules ? RuleTable::parse(detail::read_text_file(*qz_rules)) : default_siam_table(sub);
        map = quantize_ms(img, table.domain().rgb ? sub : table.domain().subsystem, table, threads);
      } else {
        const RuleTable table =
            qz_rules ? RuleTable::parse(detail::read_text_file(*qz_rules)) : default_rgb_table();
        map = quantize_rgb(qz_no_stretch ? img : color_constancy_stretch(img).image, table, threads);
      }
      write_label_raster(to_label_raster(map), qz_out);
      if (qz_pseudo) write_ppm(*qz_pseudo, pseudocolor(map));
    } else if (*sg) {
      const ColorNameMap map = read_categories(sg_in, sg_rules);
      const SegmentMap seg =
          label_connected_components_tiled(map.ids, parse_connectivity(sg_conn), sg_tile, threads);
      write_label_raster(to_label_raster(seg), sg_out);
      if (sg_table)
        detail::write_text_file(*sg_table,
                                segment_table_csv(build_segment_graph(seg, map, sg_res), map.vocab()));
    } else if (*dt) {
      const MultiSpectralImage img = read_image(dt_img);
      const DetectionConfig cfg = detection_from(dt_cfg);
      const ColorNameMap map = read_categories(dt_cat, dt_rules);
      std::optional<ColorNameMap> rgb;
      if (dt_rgb) rgb = read_categories(*dt_rgb, std::nullopt);
      const bool siam_primary = !map.vocab().name().starts_with("rgbiam");
      const double res = img.metadata().spatial_resolution_m;
      const SegmentMap seg = label_connected_components(map, parse_connectivity(dt_conn));
      const SegmentGraph g = build_segment_graph(seg, map, res);
      const auto ev = siam_primary ? fuse_evidence(&map, rgb ? &*rgb : nullptr, cfg)
                                   : fuse_evidence(nullptr, &map, cfg);
      const ObjectSet core = detect_core_clouds(seg, g, ev, cfg, res, &map.vocab());
      const ObjectSet clouds = grow_cloud_annulus(core, seg, g, map, cfg, res);
      const ObjectSet smoke = detect_smoke(seg, g, map, cfg, res);
      const bool toarf = img.units() == Units::TOARF;
      CirrusResult cirrus;
      HazeResult haze;
      if (toarf) {
        cirrus = detect_cirrus(img, map, cfg);
        haze = detect_haze(img, map, cfg);
      }
      const ShadowResult shadows = match_shadows(clouds, map, toarf ? &img : nullptr, img.metadata(), cfg);
      Plane<std::uint8_t> snow(map.width(), map.height(), 0);
      const CategorySet snow_set(map.vocab(), cfg.snow_categories);
      for (std::size_t i = 0; i < snow.size(); ++i) snow[i] = snow_set.contains(map.ids[i]);
      const CloudSceneMask mask = assemble_scene_mask(
          {map.width(), map.height(), &clouds, toarf ? &cirrus : nullptr, &smoke, &shadows,
           toarf ? &haze : nullptr, &snow});
      fs::create_directories(dt_out);
      write_label_raster(to_label_raster(mask), dt_out / "mask.hdr");
      detail::write_text_file(dt_out / "objects.csv", object_report_csv(mask));
    } else if (*vl) {
      const LabelRaster mapped = read_label_raster(vl_map);
      const LabelRaster truth = read_label_raster(vl_truth);
      if (!mapped.labels.same_shape(truth.labels)) throw config_error("mapped and reference masks differ in size");
      std::vector<std::string> labels;
      Plane<std::uint32_t> m = mapped.labels, t = truth.labels;
      if (vl_all) {
        for (std::uint32_t c = 0; c <= 10; ++c) labels.emplace_back(scene_class_name(static_cast<std::uint8_t>(c)));
      } else {
        labels = {"cloud", "cloud-shadow", "clear-sky"};
        for (auto& v : m.data()) v = three_class(v);
        for (auto& v : t.data()) v = three_class(v);
      }
      std::vector<ReferenceUnit> units;
      std::string header;
      if (vl_census) {
        for (std::size_t r = 0; r < t.height(); ++r)
          for (std::size_t c = 0; c < t.width(); ++c) units.push_back({r, c, t(r, c)});
        header = "reference: every pixel\n";
      } else {
        SamplingSpec spec{vl_p, vl_delta, vl_alpha, labels.size()};
        const std::size_t n = vl_n ? *vl_n : required_sample_size(spec);
        const ReferenceSample s = sample_reference_units(t, n, vl_seed);
        units = s.units;
        header = "reference: " + std::to_string(n) + " units per class, seed " + std::to_string(vl_seed) + "\n";
        for (std::uint32_t c : s.exhausted)
          header += "class " + (c < labels.size() ? labels[c] : std::to_string(c)) +
                    " has fewer pixels than requested; all taken\n";
      }
      const ConfusionMatrix cm = confusion_matrix(m, units, labels);
      std::cout << header << accuracy_report_text(cm);
      if (vl_csv) detail::write_text_file(*vl_csv, accuracy_report_csv(cm));
    } else if (*sy) {
      SceneSpec spec;
      if (sy_spec) spec = parse_scene_spec(detail::read_text_file(*sy_spec));
      else if (sy_random) spec = random_scene_spec(*sy_random);
      else throw config_error("synth needs --spec or --random");
      const SyntheticScene scene = gen_scene(spec);
      fs::create_directories(sy_out);
      write_image(scene.image, sy_out / "image.hdr");
      LabelRaster truth{LabelKind::Mask, "scene-classes", Plane<std::uint32_t>(spec.width, spec.height)};
      for (std::size_t i = 0; i < truth.labels.size(); ++i) truth.labels[i] = scene.truth.classes[i];
      write_label_raster(truth, sy_out / "truth.hdr");
      std::string csv = "id,height_m,cloud_px,shadow_px,visible_shadow_px\n";
      for (const TruthCloud& c : scene.truth.clouds)
        csv += std::to_string(c.id) + "," + detail::format_double(c.height_m) + "," +
               std::to_string(c.cloud_px) + "," + std::to_string(c.shadow_px) + "," +
               std::to_string(c.visible_shadow_px) + "\n";
      detail::write_text_file(sy_out / "truth_clouds.csv", csv);
      detail::write_text_file(sy_out / "spec.txt", scene_spec_text(spec));
    } else if (*pl) {
      PipelineSetup setup = setup_from(pl_cfg);
      const MultiSpectralImage img = read_image(pl_in);
      const PipelineResult r = run_pipeline(img, setup, threads);
      write_pipeline_outputs(r, pl_out ? *pl_out : setup.config.output_dir);
    }
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return 0;
}
