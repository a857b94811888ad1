// End-to-end chaining of the stages: calibration, colour-constancy stretch,
// quantisation, labelling, detection and scene-mask assembly, plus the
// configuration files that drive it.
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cloudmask/calibrate.hpp"
#include "cloudmask/detect.hpp"
#include "cloudmask/quantize.hpp"
#include "cloudmask/raster.hpp"
#include "cloudmask/segment.hpp"

namespace cloudmask {

// ---------------------------------------------------------------------------
// Sensor profile

/// Per-role calibration constants. Text form:
///   name=<profile>
///   <ROLE>.gain=..  <ROLE>.offset=..  <ROLE>.esun=..  <ROLE>.k1=..  <ROLE>.k2=..
///   <ROLE>.wavelength_um=..
struct SensorProfile {
  std::string name;
  std::map<BandRole, BandCalibration> bands;

  void validate() const {
    for (const auto& [role, c] : bands) {
      const std::string n(role_name(role));
      if (!(c.gain > 0.0)) throw config_error("sensor profile: gain must be > 0 for " + n);
      if (role == BandRole::TIR) {
        if (!(c.k1 > 0.0 && c.k2 > 0.0)) throw config_error("sensor profile: TIR needs k1 and k2");
      } else if (!(c.esun > 0.0)) {
        throw config_error("sensor profile: esun must be > 0 for " + n);
      }
    }
  }
};

inline SensorProfile parse_sensor_profile(const std::string& text) {
  SensorProfile p;
  std::istringstream in(text);
  try {
    for (const auto& [key, value] : detail::parse_key_values(in, "sensor profile")) {
      if (key == "name") {
        p.name = value;
        continue;
      }
      const auto dot = key.find('.');
      const auto role = dot == std::string::npos ? std::nullopt : parse_role(key.substr(0, dot));
      if (!role) throw config_error("sensor profile: unknown key '" + key + "'");
      BandCalibration& c = p.bands[*role];
      const std::string field = key.substr(dot + 1);
      const double v = detail::parse_double(value, key);
      if (field == "gain") c.gain = v;
      else if (field == "offset") c.offset = v;
      else if (field == "esun") c.esun = v;
      else if (field == "k1") c.k1 = v;
      else if (field == "k2") c.k2 = v;
      else if (field == "wavelength_um") c.center_wavelength_um = v;
      else throw config_error("sensor profile: unknown field '" + field + "'");
    }
  } catch (const io_error& e) {
    throw config_error(e.what());
  }
  p.validate();
  return p;
}

/// Overwrites the calibration constants of every band the profile names.
inline void apply_sensor_profile(MultiSpectralImage& img, const SensorProfile& p) {
  for (Band& b : img.bands())
    if (auto it = p.bands.find(b.role); it != p.bands.end()) b.calibration = it->second;
  if (!p.name.empty()) img.profile_name() = p.name;
}

/// True when every band carries the constants calibration needs and the
/// metadata allows the Earth-Sun and cosine corrections.
inline bool calibration_complete(const MultiSpectralImage& img) {
  const SceneMetadata& m = img.metadata();
  if (!(m.sun_zenith_deg >= 0.0 && m.sun_zenith_deg < 90.0)) return false;
  if (m.acquisition_doy < 1 || m.acquisition_doy > 366) return false;
  if (img.bands().empty()) return false;
  for (const Band& b : img.bands()) {
    const BandCalibration& c = b.calibration;
    if (!(c.gain > 0.0)) return false;
    if (b.role == BandRole::TIR ? !(c.k1 > 0.0 && c.k2 > 0.0) : !(c.esun > 0.0)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Pipeline configuration

struct PipelineConfig {
  std::optional<std::filesystem::path> sensor_profile;
  std::optional<std::filesystem::path> rgb_rules;
  std::map<SiamSubsystem, std::filesystem::path> siam_rules;
  std::optional<std::filesystem::path> detection;
  Connectivity connectivity = Connectivity::Eight;
  std::size_t tile_size = 512;
  std::filesystem::path output_dir = "cloudmask-out";
  std::uint64_t seed = 1;
};

/// key=value; keys sensor_profile, rules.rgb, rules.L7|S4|AV4|V4, detection,
/// connectivity (4|8), tile_size, output_dir, seed. Relative paths resolve
/// against `base_dir`.
inline PipelineConfig parse_pipeline_config(const std::string& text,
                                            const std::filesystem::path& base_dir = {}) {
  PipelineConfig cfg;
  std::istringstream in(text);
  auto resolve = [&](const std::string& v) {
    std::filesystem::path p(v);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  };
  try {
    for (const auto& [key, value] : detail::parse_key_values(in, "pipeline config")) {
      if (key == "sensor_profile") cfg.sensor_profile = resolve(value);
      else if (key == "rules.rgb") cfg.rgb_rules = resolve(value);
      else if (key.rfind("rules.", 0) == 0) {
        const auto s = parse_subsystem(key.substr(6));
        if (!s) throw config_error("pipeline config: unknown rule-table key '" + key + "'");
        cfg.siam_rules[*s] = resolve(value);
      } else if (key == "detection") cfg.detection = resolve(value);
      else if (key == "connectivity")
        cfg.connectivity = parse_connectivity(static_cast<int>(detail::parse_int(value, key)));
      else if (key == "tile_size") {
        const auto t = detail::parse_int(value, key);
        if (t < 1) throw config_error("pipeline config: tile_size must be >= 1");
        cfg.tile_size = static_cast<std::size_t>(t);
      } else if (key == "output_dir") cfg.output_dir = resolve(value);
      else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(detail::parse_int(value, key));
      else throw config_error("pipeline config: unknown key '" + key + "'");
    }
  } catch (const io_error& e) {
    throw config_error(e.what());
  }
  return cfg;
}

/// Everything a configuration references, parsed and validated.
struct PipelineSetup {
  PipelineConfig config;
  std::optional<SensorProfile> profile;
  RuleTable rgb_table = default_rgb_table();
  std::map<SiamSubsystem, RuleTable> siam_tables;
  DetectionConfig detection;

  const RuleTable& siam_table(SiamSubsystem s) const {
    auto it = siam_tables.find(s);
    return it != siam_tables.end() ? it->second : default_siam_table(s);
  }
};

/// Reads and validates every referenced file before any processing.
/// Missing or malformed files raise config_error.
inline PipelineSetup load_pipeline_setup(const PipelineConfig& cfg) {
  PipelineSetup s;
  s.config = cfg;
  auto read = [](const std::filesystem::path& p) {
    if (!std::filesystem::is_regular_file(p)) throw config_error("referenced file not found: " + p.string());
    return detail::read_text_file(p);
  };
  if (cfg.sensor_profile) s.profile = parse_sensor_profile(read(*cfg.sensor_profile));
  if (cfg.rgb_rules) {
    s.rgb_table = RuleTable::parse(read(*cfg.rgb_rules));
    if (!s.rgb_table.domain().rgb) throw config_error("rules.rgb must declare the rgb domain");
  }
  for (const auto& [sub, path] : cfg.siam_rules) {
    RuleTable t = RuleTable::parse(read(path));
    if (t.domain().rgb || t.domain().subsystem != sub)
      throw config_error("rule table " + path.string() + " does not declare domain " +
                         std::string(subsystem_name(sub)));
    s.siam_tables.emplace(sub, std::move(t));
  }
  if (cfg.detection) s.detection = parse_detection_config(read(*cfg.detection));
  s.detection.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Run

enum class PipelinePath { Calibrated, CalibratedFromDN, RgbOnly };

inline std::string_view pipeline_path_name(PipelinePath p) {
  switch (p) {
    case PipelinePath::Calibrated: return "calibrated (SIAM + RGBIAM), input already TOARF";
    case PipelinePath::CalibratedFromDN: return "calibrated (SIAM + RGBIAM), input calibrated from DN";
    case PipelinePath::RgbOnly: return "uncalibrated (RGBIAM only)";
  }
  return "unknown";
}

struct PipelineResult {
  PipelinePath path = PipelinePath::RgbOnly;
  std::optional<SiamSubsystem> subsystem;
  std::optional<MultiSpectralImage> toarf;
  std::optional<StretchResult> stretch;
  std::optional<ColorNameMap> siam;
  std::optional<ColorNameMap> rgb;
  SegmentMap segments;
  SegmentGraph graph;
  ObjectSet clouds;
  ObjectSet smoke;
  CirrusResult cirrus;
  HazeResult haze;
  ShadowResult shadows;
  Plane<std::uint8_t> snow;
  CloudSceneMask mask;

  /// The map the segments and detectors work on.
  const ColorNameMap& primary_map() const { return siam ? *siam : *rgb; }
};

/// Calibrated input (TOARF, or DN with complete constants) takes the
/// SIAM + RGBIAM path; anything else takes the RGBIAM-only path.
inline PipelineResult run_pipeline(const MultiSpectralImage& input, const PipelineSetup& setup,
                                   unsigned threads = 1) {
  validate(input.metadata());
  PipelineResult res;
  MultiSpectralImage img = input;
  if (setup.profile) apply_sensor_profile(img, *setup.profile);

  const DetectionConfig& dc = setup.detection;
  const double res_m = img.metadata().spatial_resolution_m;
  const bool has_rgb = img.roles().contains_all(RoleSet{BandRole::R, BandRole::G, BandRole::B});

  if (img.units() == Units::TOARF) {
    res.path = PipelinePath::Calibrated;
    res.toarf = std::move(img);
  } else if (calibration_complete(img)) {
    res.path = PipelinePath::CalibratedFromDN;
    res.toarf = calibrate_to_toarf(img, threads);
  } else {
    res.path = PipelinePath::RgbOnly;
    if (!has_rgb) throw config_error("uncalibrated input needs R, G and B bands");
  }

  if (res.toarf) {
    res.subsystem = select_subsystem(res.toarf->roles());
    res.siam = quantize_ms(*res.toarf, *res.subsystem, setup.siam_table(*res.subsystem), threads);
  }
  if (has_rgb) {
    res.stretch = color_constancy_stretch(res.toarf ? *res.toarf : img);
    res.rgb = quantize_rgb(res.stretch->image, setup.rgb_table, threads);
  }

  const ColorNameMap& map = res.primary_map();
  res.segments = label_connected_components_tiled(map.ids, setup.config.connectivity,
                                                  setup.config.tile_size, threads);
  res.graph = build_segment_graph(res.segments, map, res_m);

  const Plane<Evidence> evidence =
      fuse_evidence(res.siam ? &*res.siam : nullptr, res.rgb ? &*res.rgb : nullptr, dc);
  const ObjectSet core = detect_core_clouds(res.segments, res.graph, evidence, dc, res_m, &map.vocab());
  res.clouds = grow_cloud_annulus(core, res.segments, res.graph, map, dc, res_m);
  res.smoke = detect_smoke(res.segments, res.graph, map, dc, res_m);

  if (res.toarf) {
    res.cirrus = detect_cirrus(*res.toarf, map, dc);
    res.haze = detect_haze(*res.toarf, map, dc);
  } else {
    res.cirrus.mask = Plane<std::uint8_t>(map.width(), map.height(), 0);
    res.haze.level = Plane<std::uint8_t>(map.width(), map.height(), 0);
  }
  const SceneMetadata& meta = res.toarf ? res.toarf->metadata() : img.metadata();
  res.shadows = match_shadows(res.clouds, map, res.toarf ? &*res.toarf : nullptr, meta, dc);

  const CategorySet snow(map.vocab(), dc.snow_categories);
  res.snow = Plane<std::uint8_t>(map.width(), map.height(), 0);
  for (std::size_t i = 0; i < res.snow.size(); ++i) res.snow[i] = snow.contains(map.ids[i]);

  DetectorOutputs d{map.width(), map.height(), &res.clouds, &res.cirrus, &res.smoke,
                    &res.shadows, &res.haze, &res.snow};
  res.mask = assemble_scene_mask(d);
  return res;
}

inline std::string pipeline_report(const PipelineResult& r) {
  std::ostringstream os;
  os << "path: " << pipeline_path_name(r.path) << "\n";
  os << "subsystem: " << (r.subsystem ? std::string(subsystem_name(*r.subsystem)) : "none") << "\n";
  os << "rgb color names: " << (r.rgb ? "yes" : "no") << "\n";
  os << "segments: " << r.segments.count << "\n";
  os << "cloud objects: " << r.clouds.size() << "\n";
  std::size_t matched = 0;
  for (const ShadowMatch& m : r.shadows.matches) matched += m.matched();
  os << "clouds with matched shadow: " << matched << "\n";
  os << "smoke objects: " << r.smoke.size() << "\n";
  os << "cirrus: "
     << (r.cirrus.method == CirrusMethod::CirrusBand ? "cirrus band"
         : r.cirrus.method == CirrusMethod::Thermal  ? "thermal"
                                                     : "unavailable")
     << "\n";
  os << "haze: " << (r.haze.available ? "available" : "unavailable") << "\n";
  std::array<std::size_t, 11> counts{};
  for (std::uint8_t c : r.mask.classes.data()) ++counts[c];
  os << "pixels per class:\n";
  for (std::size_t c = 0; c < counts.size(); ++c)
    os << "  " << scene_class_name(static_cast<std::uint8_t>(c)) << ": " << counts[c] << "\n";
  return os.str();
}

/// Writes mask.hdr (+ payload), objects.csv, pseudocolor.ppm and report.txt.
inline void write_pipeline_outputs(const PipelineResult& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw io_error("cannot create output directory " + dir.string() + ": " + ec.message());
  write_label_raster(to_label_raster(r.mask), dir / "mask.hdr");
  detail::write_text_file(dir / "objects.csv", object_report_csv(r.mask));
  write_ppm(dir / "pseudocolor.ppm", pseudocolor(r.primary_map()));
  detail::write_text_file(dir / "report.txt", pipeline_report(r));
}

}  // namespace cloudmask
