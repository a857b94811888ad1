// Stage 3: evidence fusion and the spatial-context detectors (core cloud,
// cloud annulus, cirrus, haze, smoke plume, projected cloud shadow) plus
// assembly of the final per-pixel scene mask.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cloudmask/quantize.hpp"
#include "cloudmask/raster.hpp"
#include "cloudmask/segment.hpp"

namespace cloudmask {

// ---------------------------------------------------------------------------
// Configuration

struct DetectionConfig {
  std::vector<std::string> siam_cloud_evidence{"core cloud", "thick cloud"};
  std::vector<std::string> rgb_cloud_evidence{"white"};
  std::vector<std::string> annulus_categories{"thin cloud over water",
                                              "thin cloud over vegetation", "light gray"};
  std::vector<std::string> thin_cloud_categories{"thin cloud over water",
                                                 "thin cloud over vegetation"};
  std::vector<std::string> smoke_categories{
      "thin smoke plume over water", "thick smoke plume over water",
      "smoke plume over vegetation", "smoke plume over bare soil or built-up"};
  std::vector<std::string> shadow_categories{"water or shadow", "vegetation in shadow",
                                             "vegetation in water or shadow", "black",
                                             "dark gray"};
  std::vector<std::string> snow_categories{"snow water-ice"};
  /// Segments whose own category belongs to one of these families never join
  /// a cloud on XOR evidence alone. Empty keeps plain symmetric-difference
  /// candidacy.
  std::vector<std::string> xor_veto_families{"vegetation", "bare-soil/built-up", "water-or-shadow"};

  /// Unset means four pixels at the image's native resolution.
  std::optional<double> min_cloud_area_m2;
  /// Compactness bounds, normalised by the pixel-grid maximum pi/4.
  double min_compactness = 0.05;
  double max_compactness = 1.0;

  double cirrus_threshold = 0.01;
  double cold_cloud_delta_k = 4.0;

  double haze_threshold = 0.06;
  double haze_red_weight = 0.5;
  double haze_water_nir = 0.05;

  double min_smoke_elongation = 2.0;
  std::optional<double> min_smoke_area_m2;

  double height_min_m = 500.0;
  double height_max_m = 12000.0;
  double height_step_m = 250.0;
  double shadow_score_threshold = 0.3;
  double lapse_rate_k_per_m = 0.0065;
  double thermal_window_m = 2000.0;

  double min_cloud_area(double resolution_m) const {
    return min_cloud_area_m2.value_or(4.0 * resolution_m * resolution_m);
  }
  double min_smoke_area(double resolution_m) const {
    return min_smoke_area_m2.value_or(4.0 * resolution_m * resolution_m);
  }

  void validate() const {
    auto finite = [](double v) { return std::isfinite(v); };
    for (double v : {min_compactness, max_compactness, cirrus_threshold, cold_cloud_delta_k,
                     haze_threshold, haze_red_weight, haze_water_nir, min_smoke_elongation,
                     height_min_m, height_max_m, height_step_m, shadow_score_threshold,
                     lapse_rate_k_per_m, thermal_window_m})
      if (!finite(v)) throw config_error("detection thresholds must be finite");
    if (!(height_min_m < height_max_m)) throw config_error("height_min_m must be < height_max_m");
    if (!(height_min_m > 0.0)) throw config_error("height_min_m must be > 0");
    if (!(height_step_m > 0.0)) throw config_error("height_step_m must be > 0");
    if (!(lapse_rate_k_per_m > 0.0)) throw config_error("lapse_rate_k_per_m must be > 0");
    for (const std::string& f : xor_veto_families)
      if (!parse_family(f)) throw config_error("unknown category family '" + f + "'");
    if (min_cloud_area_m2 && !(std::isfinite(*min_cloud_area_m2) && *min_cloud_area_m2 >= 0.0))
      throw config_error("min_cloud_area_m2 must be finite and >= 0");
    if (min_smoke_area_m2 && !(std::isfinite(*min_smoke_area_m2) && *min_smoke_area_m2 >= 0.0))
      throw config_error("min_smoke_area_m2 must be finite and >= 0");
  }
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const std::string item = trim(s.substr(start, comma == std::string::npos ? std::string::npos
                                                                               : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string join_list(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

}  // namespace detail

/// key=value text; list values are comma-separated category names.
inline DetectionConfig parse_detection_config(const std::string& text) {
  DetectionConfig cfg;
  std::istringstream in(text);
  const auto kv = detail::parse_key_values(in, "detection config");
  std::map<std::string, std::vector<std::string>*> lists = {
      {"siam_cloud_evidence", &cfg.siam_cloud_evidence},
      {"rgb_cloud_evidence", &cfg.rgb_cloud_evidence},
      {"annulus_categories", &cfg.annulus_categories},
      {"thin_cloud_categories", &cfg.thin_cloud_categories},
      {"smoke_categories", &cfg.smoke_categories},
      {"shadow_categories", &cfg.shadow_categories},
      {"snow_categories", &cfg.snow_categories},
      {"xor_veto_families", &cfg.xor_veto_families}};
  std::map<std::string, double*> nums = {
      {"min_compactness", &cfg.min_compactness},
      {"max_compactness", &cfg.max_compactness},
      {"cirrus_threshold", &cfg.cirrus_threshold},
      {"cold_cloud_delta_k", &cfg.cold_cloud_delta_k},
      {"haze_threshold", &cfg.haze_threshold},
      {"haze_red_weight", &cfg.haze_red_weight},
      {"haze_water_nir", &cfg.haze_water_nir},
      {"min_smoke_elongation", &cfg.min_smoke_elongation},
      {"height_min_m", &cfg.height_min_m},
      {"height_max_m", &cfg.height_max_m},
      {"height_step_m", &cfg.height_step_m},
      {"shadow_score_threshold", &cfg.shadow_score_threshold},
      {"lapse_rate_k_per_m", &cfg.lapse_rate_k_per_m},
      {"thermal_window_m", &cfg.thermal_window_m}};
  try {
    for (const auto& [key, value] : kv) {
      if (auto it = lists.find(key); it != lists.end()) *it->second = detail::split_list(value);
      else if (auto jt = nums.find(key); jt != nums.end())
        *jt->second = detail::parse_double(value, key);
      else if (key == "min_cloud_area_m2") cfg.min_cloud_area_m2 = detail::parse_double(value, key);
      else if (key == "min_smoke_area_m2") cfg.min_smoke_area_m2 = detail::parse_double(value, key);
      else throw config_error("detection config: unknown key '" + key + "'");
    }
  } catch (const io_error& e) {
    throw config_error(std::string("detection config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Category sets

/// Membership flags over one vocabulary. Names absent from the vocabulary
/// are ignored, so one configuration serves every vocabulary.
class CategorySet {
 public:
  CategorySet() = default;
  CategorySet(const CategoryVocabulary& vocab, const std::vector<std::string>& names)
      : flags_(vocab.size(), false) {
    for (const std::string& n : names)
      if (auto id = vocab.find(n)) flags_[*id] = true;
  }
  static CategorySet of_family(const CategoryVocabulary& vocab, Family f) {
    CategorySet s;
    s.flags_.assign(vocab.size(), false);
    for (const Category& c : vocab.categories()) s.flags_[c.id] = c.family == f;
    return s;
  }
  bool contains(CategoryId id) const { return id < flags_.size() && flags_[id]; }
  bool empty() const { return std::none_of(flags_.begin(), flags_.end(), [](bool b) { return b; }); }

 private:
  std::vector<bool> flags_;
};

// ---------------------------------------------------------------------------
// Evidence fusion

enum class Evidence : std::uint8_t { None = 0, And = 1, Xor = 2 };

/// AND where both sources flag cloud evidence, XOR (OR minus AND) where
/// exactly one does. With a single source its evidence is AND and XOR is
/// empty.
inline Plane<Evidence> fuse_evidence(const ColorNameMap* siam, const ColorNameMap* rgb,
                                     const DetectionConfig& cfg) {
  if (!siam && !rgb) throw config_error("fuse_evidence needs at least one category map");
  if (siam && rgb && !siam->ids.same_shape(rgb->ids))
    throw config_error("category maps are misaligned");
  const ColorNameMap& any = siam ? *siam : *rgb;
  Plane<Evidence> out(any.width(), any.height(), Evidence::None);
  const CategorySet siam_set = siam ? CategorySet(siam->vocab(), cfg.siam_cloud_evidence) : CategorySet{};
  const CategorySet rgb_set = rgb ? CategorySet(rgb->vocab(), cfg.rgb_cloud_evidence) : CategorySet{};
  for (std::size_t i = 0; i < out.size(); ++i) {
    const bool a = siam && siam_set.contains(siam->ids[i]);
    const bool b = rgb && rgb_set.contains(rgb->ids[i]);
    if (siam && rgb) out[i] = a && b ? Evidence::And : (a != b ? Evidence::Xor : Evidence::None);
    else out[i] = (a || b) ? Evidence::And : Evidence::None;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Objects

struct ImageObject {
  std::uint32_t id = 0;
  std::vector<SegmentId> segments;
  std::size_t area_px = 0;
  double area_m2 = 0.0;
  std::size_t perimeter_px = 0;
  double compactness = 0.0;
  double elongation = 1.0;
  BoundingBox bbox;
};

/// Objects made of whole segments, plus a per-pixel object label (0 = none).
struct ObjectSet {
  std::vector<ImageObject> objects;
  Plane<std::uint32_t> label;

  std::size_t size() const { return objects.size(); }
};

namespace detail {

/// Connected components of the segment graph restricted to `member`
/// segments; components containing at least one `seed` become objects.
/// Graph neighbours already cover inclusion (a contained segment is adjacent
/// to its container).
inline std::vector<std::vector<SegmentId>> closure_components(const SegmentGraph& g,
                                                              const std::vector<bool>& seed,
                                                              const std::vector<bool>& member) {
  std::vector<std::vector<SegmentId>> out;
  std::vector<bool> seen(g.size() + 1, false);
  for (SegmentId s = 1; s <= g.size(); ++s) {
    if (!member[s] || seen[s]) continue;
    std::vector<SegmentId> comp{s}, stack{s};
    seen[s] = true;
    bool has_seed = seed[s];
    while (!stack.empty()) {
      const SegmentId x = stack.back();
      stack.pop_back();
      std::vector<SegmentId> nb = g.neighbours(x);
      if (SegmentId c = g.container(x)) nb.push_back(c);
      for (SegmentId y : nb)
        if (member[y] && !seen[y]) {
          seen[y] = true;
          has_seed = has_seed || seed[y];
          comp.push_back(y);
          stack.push_back(y);
        }
    }
    if (has_seed) {
      std::sort(comp.begin(), comp.end());
      out.push_back(std::move(comp));
    }
  }
  return out;
}

/// Materialises objects from segment groups and measures their geometry.
inline ObjectSet build_objects(const SegmentMap& seg, const SegmentGraph& g,
                               std::vector<std::vector<SegmentId>> groups, double resolution_m) {
  ObjectSet set;
  set.label = Plane<std::uint32_t>(seg.width(), seg.height(), 0);
  std::vector<std::uint32_t> seg_to_obj(g.size() + 1, 0);
  for (std::size_t k = 0; k < groups.size(); ++k) {
    ImageObject o;
    o.id = static_cast<std::uint32_t>(k + 1);
    o.segments = std::move(groups[k]);
    bool first = true;
    for (SegmentId s : o.segments) {
      seg_to_obj[s] = o.id;
      const SegmentRecord& r = g.record(s);
      o.area_px += r.area_px;
      if (first) o.bbox = r.bbox;
      first = false;
      o.bbox.row_min = std::min(o.bbox.row_min, r.bbox.row_min);
      o.bbox.col_min = std::min(o.bbox.col_min, r.bbox.col_min);
      o.bbox.row_max = std::max(o.bbox.row_max, r.bbox.row_max);
      o.bbox.col_max = std::max(o.bbox.col_max, r.bbox.col_max);
    }
    o.area_m2 = static_cast<double>(o.area_px) * resolution_m * resolution_m;
    o.elongation = elongation(o.bbox);
    set.objects.push_back(std::move(o));
  }
  for (std::size_t i = 0; i < seg.ids.size(); ++i) set.label[i] = seg_to_obj[seg.ids[i]];
  const std::size_t w = seg.width(), h = seg.height();
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const std::uint32_t id = set.label(r, c);
      if (id == 0) continue;
      set.objects[id - 1].perimeter_px += exposed_edges(
          w, h, r, c, [&](std::size_t rr, std::size_t cc) { return set.label(rr, cc) == id; });
    }
  for (ImageObject& o : set.objects) o.compactness = compactness(o.area_px, o.perimeter_px);
  return set;
}

/// Keeps objects passing `keep`, renumbering survivors 1..n.
template <typename Keep>
ObjectSet filter_objects(ObjectSet set, Keep&& keep) {
  std::vector<std::uint32_t> remap(set.objects.size() + 1, 0);
  std::vector<ImageObject> kept;
  for (ImageObject& o : set.objects)
    if (keep(o)) {
      remap[o.id] = static_cast<std::uint32_t>(kept.size() + 1);
      o.id = remap[o.id];
      kept.push_back(std::move(o));
    }
  set.objects = std::move(kept);
  for (auto& l : set.label.data()) l = remap[l];
  return set;
}

inline ObjectSet geometric_filter(ObjectSet set, const DetectionConfig& cfg, double resolution_m) {
  const double min_area = cfg.min_cloud_area(resolution_m);
  const double bound = std::numbers::pi / 4.0;
  return filter_objects(std::move(set), [&](const ImageObject& o) {
    const double c = o.compactness / bound;
    return o.area_m2 >= min_area && c >= cfg.min_compactness && c <= cfg.max_compactness;
  });
}

inline std::vector<bool> segments_in(const SegmentGraph& g, const CategorySet& cats) {
  std::vector<bool> f(g.size() + 1, false);
  for (const SegmentRecord& r : g.records()) f[r.id] = cats.contains(r.category);
  return f;
}

}  // namespace detail

/// Seeds are segments more than half covered by AND evidence; segments more
/// than half covered by AND or XOR evidence join a seed through adjacency or
/// inclusion, transitively. Objects failing the area and compactness bounds
/// are dropped. With `vocab` (the vocabulary of the map the graph was built
/// on) XOR-only segments in a vetoed family stay out.
inline ObjectSet detect_core_clouds(const SegmentMap& seg, const SegmentGraph& g,
                                    const Plane<Evidence>& evidence, const DetectionConfig& cfg,
                                    double resolution_m,
                                    const CategoryVocabulary* vocab = nullptr) {
  if (!evidence.same_shape(seg.ids)) throw config_error("evidence and segment maps are misaligned");
  std::vector<std::size_t> and_px(g.size() + 1, 0), xor_px(g.size() + 1, 0);
  for (std::size_t i = 0; i < seg.ids.size(); ++i) {
    if (evidence[i] == Evidence::And) ++and_px[seg.ids[i]];
    else if (evidence[i] == Evidence::Xor) ++xor_px[seg.ids[i]];
  }
  std::vector<bool> veto(kFamilyNames.size(), false);
  for (const std::string& f : cfg.xor_veto_families)
    if (auto fam = parse_family(f)) veto[static_cast<std::size_t>(*fam)] = true;
  std::vector<bool> seed(g.size() + 1, false), member(g.size() + 1, false);
  for (const SegmentRecord& r : g.records()) {
    seed[r.id] = 2 * and_px[r.id] > r.area_px;
    const bool vetoed = vocab && veto[static_cast<std::size_t>(vocab->family(r.category))];
    member[r.id] = seed[r.id] || (!vetoed && 2 * (and_px[r.id] + xor_px[r.id]) > r.area_px);
  }
  auto objs = detail::build_objects(seg, g, detail::closure_components(g, seed, member), resolution_m);
  return detail::geometric_filter(std::move(objs), cfg, resolution_m);
}

/// Grows cloud objects into touching thin-cloud segments (transitively) and
/// re-applies the geometric filter. Objects bridged by annulus segments merge.
inline ObjectSet grow_cloud_annulus(const ObjectSet& clouds, const SegmentMap& seg,
                                    const SegmentGraph& g, const ColorNameMap& map,
                                    const DetectionConfig& cfg, double resolution_m) {
  std::vector<bool> seed(g.size() + 1, false);
  for (const ImageObject& o : clouds.objects)
    for (SegmentId s : o.segments) seed[s] = true;
  std::vector<bool> member = detail::segments_in(g, CategorySet(map.vocab(), cfg.annulus_categories));
  for (SegmentId s = 1; s <= g.size(); ++s) member[s] = member[s] || seed[s];
  auto objs = detail::build_objects(seg, g, detail::closure_components(g, seed, member), resolution_m);
  return detail::geometric_filter(std::move(objs), cfg, resolution_m);
}

/// Smoke-category segments merged by adjacency/inclusion, kept when the
/// merged plume is elongated and large enough.
inline ObjectSet detect_smoke(const SegmentMap& seg, const SegmentGraph& g, const ColorNameMap& map,
                              const DetectionConfig& cfg, double resolution_m) {
  const std::vector<bool> smoke = detail::segments_in(g, CategorySet(map.vocab(), cfg.smoke_categories));
  auto objs = detail::build_objects(seg, g, detail::closure_components(g, smoke, smoke), resolution_m);
  const double min_area = cfg.min_smoke_area(resolution_m);
  return detail::filter_objects(std::move(objs), [&](const ImageObject& o) {
    return o.elongation >= cfg.min_smoke_elongation && o.area_m2 >= min_area;
  });
}

// ---------------------------------------------------------------------------
// Cirrus and haze

enum class CirrusMethod : std::uint8_t { CirrusBand, Thermal, Unavailable };

struct CirrusResult {
  Plane<std::uint8_t> mask;
  CirrusMethod method = CirrusMethod::Unavailable;
  bool available() const { return method != CirrusMethod::Unavailable; }
};

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

/// Median TIR over pixels not flagged cloud-family or snow.
inline double clear_sky_tir_median(const MultiSpectralImage& img, const ColorNameMap& map,
                                   const std::vector<bool>* excluded = nullptr) {
  const Plane<float>& tir = img.band(BandRole::TIR).values;
  std::vector<double> v;
  v.reserve(tir.size());
  for (std::size_t i = 0; i < tir.size(); ++i) {
    const Family f = map.vocab().family(map.ids[i]);
    if (f == Family::Cloud || f == Family::SnowIce) continue;
    if (excluded && (*excluded)[i]) continue;
    v.push_back(tir[i]);
  }
  return median(std::move(v));
}

}  // namespace detail

/// With a 1.38 um band: reflectance above the threshold outside snow and
/// water categories. Without it but with TIR: thin-cloud categories colder
/// than the clear-sky median by at least the configured offset.
inline CirrusResult detect_cirrus(const MultiSpectralImage& img, const ColorNameMap& map,
                                  const DetectionConfig& cfg) {
  if (!map.ids.same_shape(img.width(), img.height()))
    throw config_error("category map and image are misaligned");
  CirrusResult res;
  res.mask = Plane<std::uint8_t>(img.width(), img.height(), 0);
  const CategorySet snow(map.vocab(), cfg.snow_categories);
  const CategorySet water = CategorySet::of_family(map.vocab(), Family::WaterOrShadow);
  if (const Band* cirrus = img.find(BandRole::CIRRUS)) {
    res.method = CirrusMethod::CirrusBand;
    for (std::size_t i = 0; i < res.mask.size(); ++i) {
      const CategoryId c = map.ids[i];
      res.mask[i] = cirrus->values[i] > cfg.cirrus_threshold && !snow.contains(c) && !water.contains(c);
    }
  } else if (img.has(BandRole::TIR)) {
    res.method = CirrusMethod::Thermal;
    const CategorySet thin(map.vocab(), cfg.thin_cloud_categories);
    const double t_clear = detail::clear_sky_tir_median(img, map);
    const Plane<float>& tir = img.band(BandRole::TIR).values;
    if (std::isfinite(t_clear))
      for (std::size_t i = 0; i < res.mask.size(); ++i)
        res.mask[i] = thin.contains(map.ids[i]) && tir[i] <= t_clear - cfg.cold_cloud_delta_k;
  }
  return res;
}

struct HazeResult {
  Plane<std::uint8_t> level;
  bool available = false;
};

/// Haze index B - k*R over land pixels that are neither cloud nor water
/// (water from category family and, when present, a dark NIR). Hazy pixels
/// are graded 1..5 by quintile of the index among hazy pixels.
inline HazeResult detect_haze(const MultiSpectralImage& img, const ColorNameMap& map,
                              const DetectionConfig& cfg) {
  HazeResult res;
  res.level = Plane<std::uint8_t>(img.width(), img.height(), 0);
  if (!img.has(BandRole::B) || !img.has(BandRole::R)) return res;
  if (!map.ids.same_shape(img.width(), img.height()))
    throw config_error("category map and image are misaligned");
  res.available = true;
  const Plane<float>& b = img.band(BandRole::B).values;
  const Plane<float>& r = img.band(BandRole::R).values;
  const Band* nir = img.find(BandRole::NIR);
  std::vector<std::pair<double, std::size_t>> hazy;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const Family f = map.vocab().family(map.ids[i]);
    if (f == Family::WaterOrShadow || f == Family::Cloud || f == Family::SnowIce) continue;
    if (nir && nir->values[i] < cfg.haze_water_nir) continue;
    const double h = static_cast<double>(b[i]) - cfg.haze_red_weight * static_cast<double>(r[i]);
    if (h > cfg.haze_threshold) hazy.emplace_back(h, i);
  }
  if (hazy.empty()) return res;
  std::vector<double> sorted;
  sorted.reserve(hazy.size());
  for (const auto& hv : hazy) sorted.push_back(hv.first);
  std::sort(sorted.begin(), sorted.end());
  std::array<double, 4> cuts{};
  for (std::size_t k = 1; k <= 4; ++k) cuts[k - 1] = sorted[sorted.size() * k / 5];
  for (const auto& [h, i] : hazy) {
    int level = 1;
    for (double c : cuts)
      if (h >= c) ++level;
    res.level[i] = static_cast<std::uint8_t>(std::min(level, 5));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Shadow geometry

/// Sun and view angles in degrees. Azimuths are clockwise from image north
/// (up); the view azimuth is sun azimuth + relative azimuth.
struct ShadowGeometry {
  double sun_zenith_deg = 0.0;
  double view_zenith_deg = 0.0;
  double relative_azimuth_deg = 0.0;
  double sun_azimuth_deg = 180.0;
  double cloud_height_m = 1000.0;

  static ShadowGeometry from(const SceneMetadata& m, double height_m) {
    return {m.sun_zenith_deg, m.view_zenith_deg, m.relative_azimuth_deg, m.sun_azimuth_deg,
            height_m};
  }
  /// Length of the shadow cast by a flat cloud relative to its ground point.
  double sun_term_m() const { return cloud_height_m * std::tan(sun_zenith_deg * std::numbers::pi / 180.0); }
  /// Parallax of the imaged cloud relative to its ground point.
  double view_term_m() const { return cloud_height_m * std::tan(view_zenith_deg * std::numbers::pi / 180.0); }
};

/// Ground displacement in metres; rows grow southward, columns eastward.
struct Displacement {
  double east_m = 0.0;
  double north_m = 0.0;

  double row_m() const { return -north_m; }
  double col_m() const { return east_m; }
  double magnitude() const { return std::hypot(east_m, north_m); }
};

/// Displacement from a cloud's imaged position to its shadow: H*tan(sun
/// zenith) toward the anti-solar azimuth, minus H*tan(view zenith) toward the
/// anti-view azimuth.
inline Displacement shadow_offset(const ShadowGeometry& g) {
  if (!(g.sun_zenith_deg >= 0.0 && g.sun_zenith_deg < 90.0))
    throw config_error("sun zenith must lie in [0, 90) degrees");
  if (!(g.view_zenith_deg >= 0.0 && g.view_zenith_deg < 90.0))
    throw config_error("view zenith must lie in [0, 90) degrees");
  if (!(g.cloud_height_m > 0.0)) throw config_error("cloud height must be > 0");
  constexpr double deg = std::numbers::pi / 180.0;
  const double sun_az = g.sun_azimuth_deg * deg;
  const double view_az = (g.sun_azimuth_deg + g.relative_azimuth_deg) * deg;
  const double s = g.sun_term_m(), v = g.view_term_m();
  return Displacement{-s * std::sin(sun_az) + v * std::sin(view_az),
                      -s * std::cos(sun_az) + v * std::cos(view_az)};
}

struct ShadowMatch {
  std::uint32_t cloud_id = 0;
  std::optional<double> height_m;
  std::optional<double> initial_height_m;
  double score = 0.0;
  std::uint32_t shadow_id = 0;
  std::size_t shadow_area_px = 0;

  bool matched() const { return height_m.has_value(); }
};

struct ShadowResult {
  std::vector<ShadowMatch> matches;
  Plane<std::uint32_t> label;  // shadow object id per pixel, 0 = none
};

/// Candidate heights on the grid height_min + k*step inside [lo, hi].
inline std::vector<double> height_sweep(const DetectionConfig& cfg, double lo, double hi) {
  std::vector<double> hs;
  for (std::size_t k = 0;; ++k) {
    const double h = cfg.height_min_m + static_cast<double>(k) * cfg.height_step_m;
    if (h > cfg.height_max_m + 1e-9) break;
    if (h >= lo - 1e-9 && h <= hi + 1e-9) hs.push_back(h);
  }
  return hs;
}

/// For every cloud, sweeps the cloud height, translates the footprint by the
/// projected shadow offset and scores the fraction of translated pixels that
/// land on shadow-candidate categories outside any cloud. The best height
/// (smallest on ties) is kept when its score reaches the threshold. With a
/// thermal band the sweep is restricted to a window around the height
/// implied by the cloud's temperature deficit and the lapse rate.
inline ShadowResult match_shadows(const ObjectSet& clouds, const ColorNameMap& map,
                                  const MultiSpectralImage* img, const SceneMetadata& meta,
                                  const DetectionConfig& cfg) {
  const std::size_t w = map.width(), h = map.height();
  if (!clouds.label.same_shape(map.ids)) throw config_error("cloud objects and map are misaligned");
  ShadowResult res;
  res.label = Plane<std::uint32_t>(w, h, 0);
  const CategorySet shadow_cats(map.vocab(), cfg.shadow_categories);
  Plane<std::uint8_t> candidate(w, h, 0);
  for (std::size_t i = 0; i < candidate.size(); ++i)
    candidate[i] = shadow_cats.contains(map.ids[i]) && clouds.label[i] == 0;

  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> footprint(clouds.size());
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c)
      if (const std::uint32_t id = clouds.label(r, c)) footprint[id - 1].emplace_back(r, c);

  const bool thermal = img && img->has(BandRole::TIR) && img->width() == w && img->height() == h;
  double t_clear = std::numeric_limits<double>::quiet_NaN();
  if (thermal) {
    std::vector<bool> in_cloud(w * h);
    for (std::size_t i = 0; i < in_cloud.size(); ++i) in_cloud[i] = clouds.label[i] != 0;
    t_clear = detail::clear_sky_tir_median(*img, map, &in_cloud);
  }
  const bool geometry_ok = meta.sun_zenith_deg > 0.0 && meta.sun_zenith_deg < 90.0;

  std::uint32_t next_shadow = 0;
  for (const ImageObject& o : clouds.objects) {
    ShadowMatch m;
    m.cloud_id = o.id;
    const auto& fp = footprint[o.id - 1];
    double lo = cfg.height_min_m, hi = cfg.height_max_m;
    if (thermal && std::isfinite(t_clear) && !fp.empty()) {
      const Plane<float>& tir = img->band(BandRole::TIR).values;
      double sum = 0.0;
      for (const auto& [r, c] : fp) sum += tir(r, c);
      const double h0 = (t_clear - sum / static_cast<double>(fp.size())) / cfg.lapse_rate_k_per_m;
      m.initial_height_m = h0;
      const double wlo = std::max(lo, h0 - cfg.thermal_window_m);
      const double whi = std::min(hi, h0 + cfg.thermal_window_m);
      if (wlo <= whi) {
        lo = wlo;
        hi = whi;
      }
    }
    double best_score = 0.0, best_h = 0.0;
    long best_dr = 0, best_dc = 0;
    if (geometry_ok && !fp.empty()) {
      for (double height : height_sweep(cfg, lo, hi)) {
        const Displacement d = shadow_offset(ShadowGeometry::from(meta, height));
        const long dr = std::lround(d.row_m() / meta.spatial_resolution_m);
        const long dc = std::lround(d.col_m() / meta.spatial_resolution_m);
        std::size_t hits = 0;
        for (const auto& [r, c] : fp) {
          const long rr = static_cast<long>(r) + dr, cc = static_cast<long>(c) + dc;
          if (rr < 0 || cc < 0 || rr >= static_cast<long>(h) || cc >= static_cast<long>(w)) continue;
          hits += candidate(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc));
        }
        const double score = static_cast<double>(hits) / static_cast<double>(fp.size());
        if (score > best_score) {
          best_score = score;
          best_h = height;
          best_dr = dr;
          best_dc = dc;
        }
      }
    }
    m.score = best_score;
    if (best_score > 0.0 && best_score >= cfg.shadow_score_threshold) {
      m.height_m = best_h;
      m.shadow_id = ++next_shadow;
      // Translated footprint on candidates, grown by one pixel within
      // candidates to absorb rounding of the offset.
      std::vector<std::pair<std::size_t, std::size_t>> px;
      for (const auto& [r, c] : fp) {
        const long rr = static_cast<long>(r) + best_dr, cc = static_cast<long>(c) + best_dc;
        if (rr < 0 || cc < 0 || rr >= static_cast<long>(h) || cc >= static_cast<long>(w)) continue;
        const auto ur = static_cast<std::size_t>(rr), uc = static_cast<std::size_t>(cc);
        if (candidate(ur, uc) && res.label(ur, uc) == 0) {
          res.label(ur, uc) = m.shadow_id;
          px.emplace_back(ur, uc);
        }
      }
      std::size_t area = px.size();
      for (const auto& [r, c] : px) {
        const std::pair<long, long> nb[4] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
        for (const auto& [a, b] : nb) {
          const long rr = static_cast<long>(r) + a, cc = static_cast<long>(c) + b;
          if (rr < 0 || cc < 0 || rr >= static_cast<long>(h) || cc >= static_cast<long>(w)) continue;
          const auto ur = static_cast<std::size_t>(rr), uc = static_cast<std::size_t>(cc);
          if (candidate(ur, uc) && res.label(ur, uc) == 0) {
            res.label(ur, uc) = m.shadow_id;
            ++area;
          }
        }
      }
      m.shadow_area_px = area;
    }
    res.matches.push_back(m);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Scene mask

enum class SceneClass : std::uint8_t {
  Clear = 0,
  Cloud = 1,
  Cirrus = 2,
  Smoke = 3,
  Shadow = 4,
  Haze1 = 5,
  Haze2 = 6,
  Haze3 = 7,
  Haze4 = 8,
  Haze5 = 9,
  SnowIce = 10
};

inline std::string_view scene_class_name(std::uint8_t code) {
  switch (code) {
    case 0: return "clear";
    case 1: return "cloud";
    case 2: return "cirrus";
    case 3: return "smoke";
    case 4: return "cloud-shadow";
    case 5: return "haze-1";
    case 6: return "haze-2";
    case 7: return "haze-3";
    case 8: return "haze-4";
    case 9: return "haze-5";
    case 10: return "snow-ice";
  }
  return "invalid";
}

enum class AltitudeClass : std::uint8_t { Unknown, Low, Mid, High };

inline std::string_view altitude_name(AltitudeClass a) {
  switch (a) {
    case AltitudeClass::Low: return "low";
    case AltitudeClass::Mid: return "mid";
    case AltitudeClass::High: return "high";
    case AltitudeClass::Unknown: break;
  }
  return "unknown";
}

/// Low below 6 km, mid below 9 km, high above.
inline AltitudeClass altitude_class(std::optional<double> height_m) {
  if (!height_m) return AltitudeClass::Unknown;
  if (*height_m < 6000.0) return AltitudeClass::Low;
  if (*height_m < 9000.0) return AltitudeClass::Mid;
  return AltitudeClass::High;
}

struct CloudRecord {
  std::uint32_t id = 0;
  std::size_t area_px = 0;
  std::optional<double> height_m;
  std::uint32_t shadow_id = 0;
  AltitudeClass altitude = AltitudeClass::Unknown;
};

struct SmokeRecord {
  std::uint32_t id = 0;
  std::size_t area_px = 0;
};

struct CloudSceneMask {
  Plane<std::uint8_t> classes;
  std::vector<CloudRecord> clouds;
  std::vector<SmokeRecord> smoke;
};

/// Everything the detectors produced. Absent layers are treated as empty.
struct DetectorOutputs {
  std::size_t width = 0;
  std::size_t height = 0;
  const ObjectSet* clouds = nullptr;
  const CirrusResult* cirrus = nullptr;
  const ObjectSet* smoke = nullptr;
  const ShadowResult* shadows = nullptr;
  const HazeResult* haze = nullptr;
  const Plane<std::uint8_t>* snow = nullptr;
};

/// Per-pixel precedence cloud > cirrus > smoke > shadow > haze > snow-ice >
/// clear.
inline CloudSceneMask assemble_scene_mask(const DetectorOutputs& d) {
  CloudSceneMask out;
  out.classes = Plane<std::uint8_t>(d.width, d.height, 0);
  auto check = [&](const auto* p) {
    if (p && !p->same_shape(d.width, d.height)) throw config_error("detector layer shape mismatch");
  };
  if (d.clouds) check(&d.clouds->label);
  if (d.cirrus) check(&d.cirrus->mask);
  if (d.smoke) check(&d.smoke->label);
  if (d.shadows) check(&d.shadows->label);
  if (d.haze) check(&d.haze->level);
  check(d.snow);
  for (std::size_t i = 0; i < out.classes.size(); ++i) {
    SceneClass c = SceneClass::Clear;
    if (d.clouds && d.clouds->label[i]) c = SceneClass::Cloud;
    else if (d.cirrus && d.cirrus->mask[i]) c = SceneClass::Cirrus;
    else if (d.smoke && d.smoke->label[i]) c = SceneClass::Smoke;
    else if (d.shadows && d.shadows->label[i]) c = SceneClass::Shadow;
    else if (d.haze && d.haze->level[i]) c = static_cast<SceneClass>(4 + d.haze->level[i]);
    else if (d.snow && (*d.snow)[i]) c = SceneClass::SnowIce;
    out.classes[i] = static_cast<std::uint8_t>(c);
  }
  if (d.clouds)
    for (const ImageObject& o : d.clouds->objects) {
      CloudRecord r{o.id, o.area_px, std::nullopt, 0, AltitudeClass::Unknown};
      if (d.shadows)
        for (const ShadowMatch& m : d.shadows->matches)
          if (m.cloud_id == o.id) {
            r.height_m = m.height_m;
            r.shadow_id = m.shadow_id;
          }
      r.altitude = altitude_class(r.height_m);
      out.clouds.push_back(r);
    }
  if (d.smoke)
    for (const ImageObject& o : d.smoke->objects) out.smoke.push_back({o.id, o.area_px});
  return out;
}

inline LabelRaster to_label_raster(const CloudSceneMask& m) {
  LabelRaster lr{LabelKind::Mask, "scene-classes", Plane<std::uint32_t>(m.classes.width(), m.classes.height())};
  for (std::size_t i = 0; i < m.classes.size(); ++i) lr.labels[i] = m.classes[i];
  return lr;
}

/// id,class,area_px,height_m,shadow_id,altitude_class
inline std::string object_report_csv(const CloudSceneMask& m) {
  std::ostringstream os;
  os << "id,class,area_px,height_m,shadow_id,altitude_class\n";
  for (const CloudRecord& c : m.clouds)
    os << c.id << ",cloud," << c.area_px << ","
       << (c.height_m ? detail::format_double(*c.height_m) : std::string()) << ","
       << (c.shadow_id ? std::to_string(c.shadow_id) : std::string()) << ","
       << altitude_name(c.altitude) << "\n";
  for (const SmokeRecord& s : m.smoke) os << s.id << ",smoke," << s.area_px << ",,,\n";
  return os.str();
}

}  // namespace cloudmask
