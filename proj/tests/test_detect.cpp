#include <gtest/gtest.h>

#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "cloudmask/detect.hpp"

using namespace cloudmask;

namespace {

const RuleTable& l7() { return default_siam_table(SiamSubsystem::L7); }

struct Canvas {
  ColorNameMap map;

  Canvas(std::size_t w, std::size_t h, const std::string& fill, const RuleTable& t = l7()) {
    map.vocabulary = t.vocabulary_ptr();
    map.subsystem = t.domain().name();
    map.ids = Plane<CategoryId>(w, h, t.vocabulary().id(fill));
  }
  Canvas& rect(std::size_t r0, std::size_t c0, std::size_t rows, std::size_t cols, const std::string& name) {
    const CategoryId id = map.vocab().id(name);
    for (std::size_t r = r0; r < r0 + rows; ++r)
      for (std::size_t c = c0; c < c0 + cols; ++c) map.ids(r, c) = id;
    return *this;
  }
};

struct Built {
  SegmentMap seg;
  SegmentGraph graph;
};

Built build(const ColorNameMap& m, double res = 30.0) {
  Built b;
  b.seg = label_connected_components(m, Connectivity::Eight);
  b.graph = build_segment_graph(b.seg, m, res);
  return b;
}

Plane<Evidence> evidence_where(const ColorNameMap& m, const std::map<std::string, Evidence>& by_name) {
  Plane<Evidence> e(m.width(), m.height(), Evidence::None);
  for (std::size_t i = 0; i < e.size(); ++i) {
    auto it = by_name.find(m.vocab()[m.ids[i]].name);
    if (it != by_name.end()) e[i] = it->second;
  }
  return e;
}

DetectionConfig loose() {
  DetectionConfig cfg;
  cfg.min_cloud_area_m2 = 0.0;
  cfg.min_compactness = 0.0;
  return cfg;
}

// Independent 3-D ray trace: shadow ground point minus imaged ground point.
std::pair<double, double> ray_trace(double h, double sz, double vz, double saz, double vaz) {
  constexpr double d = std::numbers::pi / 180.0;
  struct V { double x, y, z; };
  const V p{0, 0, h};
  const V to_sun{std::sin(sz * d) * std::sin(saz * d), std::sin(sz * d) * std::cos(saz * d), std::cos(sz * d)};
  const V to_sensor{std::sin(vz * d) * std::sin(vaz * d), std::sin(vz * d) * std::cos(vaz * d), std::cos(vz * d)};
  auto hit_ground = [&](V dir) {
    const double t = p.z / dir.z;
    return V{p.x - t * dir.x, p.y - t * dir.y, 0.0};
  };
  const V shadow = hit_ground(to_sun), seen = hit_ground(to_sensor);
  return {shadow.x - seen.x, shadow.y - seen.y};
}

}  // namespace

TEST(Fusion, Examples) {
  Canvas siam(3, 1, "core cloud");
  siam.rect(0, 2, 1, 1, "strong vegetation");
  Canvas rgb(3, 1, "white", default_rgb_table());
  rgb.rect(0, 1, 1, 1, "mid green");
  rgb.rect(0, 2, 1, 1, "mid green");
  const Plane<Evidence> e = fuse_evidence(&siam.map, &rgb.map, DetectionConfig{});
  EXPECT_EQ(e[0], Evidence::And);
  EXPECT_EQ(e[1], Evidence::Xor);
  EXPECT_EQ(e[2], Evidence::None);

  const Plane<Evidence> only = fuse_evidence(&siam.map, nullptr, DetectionConfig{});
  EXPECT_EQ(only[0], Evidence::And);
  EXPECT_EQ(only[1], Evidence::And);
  EXPECT_EQ(only[2], Evidence::None);
  EXPECT_THROW(fuse_evidence(nullptr, nullptr, DetectionConfig{}), config_error);
  Canvas small(2, 1, "white", default_rgb_table());
  EXPECT_THROW(fuse_evidence(&siam.map, &small.map, DetectionConfig{}), config_error);
}

TEST(Fusion, AlgebraAndMonotonicity) {
  std::mt19937 rng(3);
  const auto& sv = l7().vocabulary();
  const auto& rv = default_rgb_table().vocabulary();
  Canvas siam(40, 40, "core cloud"), rgb(40, 40, "white", default_rgb_table());
  for (int t = 0; t < 30; ++t) {
    for (auto& x : siam.map.ids.data()) x = static_cast<CategoryId>(rng() % sv.size());
    for (auto& x : rgb.map.ids.data()) x = static_cast<CategoryId>(rng() % rv.size());
    DetectionConfig small;
    DetectionConfig big = small;
    big.siam_cloud_evidence.push_back("thin cloud over water");
    big.rgb_cloud_evidence.push_back("light gray");
    const Plane<Evidence> a = fuse_evidence(&siam.map, &rgb.map, small);
    const Plane<Evidence> b = fuse_evidence(&siam.map, &rgb.map, big);
    const CategorySet ss(sv, small.siam_cloud_evidence), rs(rv, small.rgb_cloud_evidence);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const bool in_or = ss.contains(siam.map.ids[i]) || rs.contains(rgb.map.ids[i]);
      ASSERT_EQ(a[i] != Evidence::None, in_or);
      if (a[i] == Evidence::And) {
        ASSERT_EQ(b[i], Evidence::And);
      }
    }
  }
}

TEST(CoreClouds, SingleSeed) {
  Canvas c(12, 12, "strong vegetation");
  c.rect(3, 3, 4, 4, "core cloud");
  const Built b = build(c.map);
  const ObjectSet o = detect_core_clouds(b.seg, b.graph, evidence_where(c.map, {{"core cloud", Evidence::And}}),
                                         DetectionConfig{}, 30.0, &c.map.vocab());
  ASSERT_EQ(o.size(), 1u);
  EXPECT_EQ(o.objects[0].area_px, 16u);
  EXPECT_EQ(o.label(4, 4), 1u);
  EXPECT_EQ(o.label(0, 0), 0u);
}

TEST(CoreClouds, XorMergesIntoSeed) {
  Canvas c(12, 12, "strong vegetation");
  c.rect(3, 3, 4, 4, "core cloud").rect(3, 7, 4, 2, "thick cloud");
  const Built b = build(c.map);
  const auto ev = evidence_where(c.map, {{"core cloud", Evidence::And}, {"thick cloud", Evidence::Xor}});
  const ObjectSet o = detect_core_clouds(b.seg, b.graph, ev, DetectionConfig{}, 30.0, &c.map.vocab());
  ASSERT_EQ(o.size(), 1u);
  EXPECT_EQ(o.objects[0].area_px, 24u);
}

TEST(CoreClouds, IsolatedXorDropped) {
  Canvas c(12, 12, "strong vegetation");
  c.rect(1, 1, 3, 3, "thick cloud");
  const Built b = build(c.map);
  const ObjectSet o = detect_core_clouds(b.seg, b.graph, evidence_where(c.map, {{"thick cloud", Evidence::Xor}}),
                                         DetectionConfig{}, 30.0, &c.map.vocab());
  EXPECT_EQ(o.size(), 0u);
}

TEST(CoreClouds, VetoedFamilyStaysOut) {
  Canvas c(12, 12, "average bare soil or built-up");
  c.rect(3, 3, 4, 4, "core cloud").rect(0, 0, 12, 3, "bright bare soil or built-up");
  const Built b = build(c.map);
  const auto ev = evidence_where(c.map, {{"core cloud", Evidence::And},
                                         {"bright bare soil or built-up", Evidence::Xor}});
  const ObjectSet vetoed = detect_core_clouds(b.seg, b.graph, ev, DetectionConfig{}, 30.0, &c.map.vocab());
  ASSERT_EQ(vetoed.size(), 1u);
  EXPECT_EQ(vetoed.objects[0].area_px, 16u);
  DetectionConfig plain;
  plain.xor_veto_families.clear();
  EXPECT_EQ(detect_core_clouds(b.seg, b.graph, ev, plain, 30.0, &c.map.vocab()).objects[0].area_px, 16u + 36u);
}

TEST(CoreClouds, SizeAndShapeFilters) {
  Canvas c(20, 20, "strong vegetation");
  c.rect(1, 1, 1, 1, "core cloud").rect(5, 5, 5, 5, "core cloud");
  const Built b = build(c.map);
  const auto ev = evidence_where(c.map, {{"core cloud", Evidence::And}});
  EXPECT_EQ(detect_core_clouds(b.seg, b.graph, ev, DetectionConfig{}, 30.0).size(), 1u);
  DetectionConfig strict;
  strict.min_compactness = 1.01;
  EXPECT_EQ(detect_core_clouds(b.seg, b.graph, ev, strict, 30.0).size(), 0u);
}

TEST(CoreClouds, MatchesClosureOracle) {
  std::mt19937 rng(41);
  const std::vector<std::string> names{"core cloud", "thick cloud", "strong vegetation"};
  for (int t = 0; t < 40; ++t) {
    Canvas c(30, 24, "strong vegetation");
    for (auto& x : c.map.ids.data()) x = c.map.vocab().id(names[rng() % 3]);
    const Built b = build(c.map);
    Plane<Evidence> ev(30, 24);
    for (auto& e : ev.data()) e = static_cast<Evidence>(rng() % 3);
    const ObjectSet o = detect_core_clouds(b.seg, b.graph, ev, loose(), 30.0);

    // Oracle: majority flags per segment, then union-find over 4-adjacent
    // pixel pairs of member segments.
    const SegmentId n = b.seg.count;
    std::vector<std::size_t> area(n + 1), andp(n + 1), orp(n + 1);
    for (std::size_t i = 0; i < ev.size(); ++i) {
      const SegmentId s = b.seg.ids[i];
      ++area[s];
      andp[s] += ev[i] == Evidence::And;
      orp[s] += ev[i] != Evidence::None;
    }
    std::vector<SegmentId> parent(n + 1);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<SegmentId(SegmentId)> find = [&](SegmentId x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
    auto member = [&](SegmentId s) { return 2 * orp[s] > area[s]; };
    for (std::size_t r = 0; r < 24; ++r)
      for (std::size_t col = 0; col < 30; ++col)
        for (auto [dr, dc] : {std::pair{0, 1}, std::pair{1, 0}}) {
          if (r + dr >= 24 || col + dc >= 30) continue;
          const SegmentId a = b.seg.ids(r, col), d = b.seg.ids(r + dr, col + dc);
          if (member(a) && member(d)) parent[find(a)] = find(d);
        }
    std::set<SegmentId> seeded_roots;
    for (SegmentId s = 1; s <= n; ++s)
      if (member(s) && 2 * andp[s] > area[s]) seeded_roots.insert(find(s));
    for (std::size_t i = 0; i < ev.size(); ++i) {
      const SegmentId s = b.seg.ids[i];
      const bool in = member(s) && seeded_roots.count(find(s));
      ASSERT_EQ(o.label[i] != 0, in);
    }
    for (std::size_t i = 0; i < ev.size(); ++i)
      for (std::size_t j = i + 1; j < std::min(ev.size(), i + 40); ++j)
        if (o.label[i] && o.label[j]) {
          ASSERT_EQ(o.label[i] == o.label[j], find(b.seg.ids[i]) == find(b.seg.ids[j]));
        }
  }
}

TEST(Annulus, GrowsIntoTouchingThinCloud) {
  Canvas c(20, 20, "strong vegetation");
  c.rect(5, 5, 4, 4, "core cloud").rect(5, 9, 4, 3, "thin cloud over vegetation");
  c.rect(15, 15, 3, 3, "thin cloud over water");
  const Built b = build(c.map);
  const auto ev = evidence_where(c.map, {{"core cloud", Evidence::And}});
  const ObjectSet core = detect_core_clouds(b.seg, b.graph, ev, DetectionConfig{}, 30.0);
  const ObjectSet grown = grow_cloud_annulus(core, b.seg, b.graph, c.map, DetectionConfig{}, 30.0);
  ASSERT_EQ(grown.size(), 1u);
  EXPECT_EQ(grown.objects[0].area_px, 28u);
  EXPECT_EQ(grown.label(16, 16), 0u);
}

TEST(Annulus, ChainClosure) {
  Canvas c(20, 20, "strong vegetation");
  c.rect(5, 2, 4, 4, "core cloud").rect(5, 6, 4, 3, "thin cloud over vegetation");
  c.rect(5, 9, 4, 3, "thin cloud over water");
  const Built b = build(c.map);
  const auto ev = evidence_where(c.map, {{"core cloud", Evidence::And}});
  const ObjectSet core = detect_core_clouds(b.seg, b.graph, ev, DetectionConfig{}, 30.0);
  const ObjectSet grown = grow_cloud_annulus(core, b.seg, b.graph, c.map, DetectionConfig{}, 30.0);
  ASSERT_EQ(grown.size(), 1u);
  EXPECT_EQ(grown.objects[0].area_px, 16u + 12u + 12u);
}

TEST(Smoke, ElongatedPlumeKept) {
  Canvas c(30, 30, "strong vegetation");
  c.rect(2, 2, 2, 10, "smoke plume over vegetation");
  c.rect(10, 10, 4, 4, "core cloud");
  c.rect(20, 2, 1, 3, "thin smoke plume over water");
  const Built b = build(c.map);
  const ObjectSet s = detect_smoke(b.seg, b.graph, c.map, DetectionConfig{}, 30.0);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_DOUBLE_EQ(s.objects[0].elongation, 5.0);
  EXPECT_EQ(s.label(11, 11), 0u);
  EXPECT_EQ(s.label(20, 2), 0u);
}

TEST(Cirrus, BandRule) {
  SceneMetadata m;
  m.calibrated = Units::TOARF;
  MultiSpectralImage img(3, 1, m);
  Plane<float> ci(3, 1, 0.05f);
  img.add_band(BandRole::CIRRUS, Plane<float>(3, 1, 0.0f));
  Canvas c(3, 1, "strong vegetation");
  c.rect(0, 1, 1, 1, "snow water-ice").rect(0, 2, 1, 1, "deep water");
  CirrusResult none = detect_cirrus(img, c.map, DetectionConfig{});
  EXPECT_EQ(none.method, CirrusMethod::CirrusBand);
  for (auto v : none.mask.data()) EXPECT_EQ(v, 0);

  img.bands()[0].values = ci;
  const CirrusResult r = detect_cirrus(img, c.map, DetectionConfig{});
  EXPECT_EQ(r.mask[0], 1);
  EXPECT_EQ(r.mask[1], 0);
  EXPECT_EQ(r.mask[2], 0);
}

TEST(Cirrus, ThermalFallbackAndUnavailable) {
  SceneMetadata m;
  m.calibrated = Units::TOARF;
  MultiSpectralImage img(5, 1, m);
  Plane<float> t(5, 1, 295.0f);
  t[3] = 292.0f;
  t[4] = 290.0f;
  img.add_band(BandRole::TIR, t);
  Canvas c(5, 1, "strong vegetation");
  c.rect(0, 3, 1, 2, "thin cloud over vegetation");
  const CirrusResult r = detect_cirrus(img, c.map, DetectionConfig{});
  EXPECT_EQ(r.method, CirrusMethod::Thermal);
  EXPECT_EQ(r.mask[3], 0);
  EXPECT_EQ(r.mask[4], 1);

  MultiSpectralImage bare(5, 1, m);
  bare.add_band(BandRole::R, 0.1f);
  const CirrusResult u = detect_cirrus(bare, c.map, DetectionConfig{});
  EXPECT_FALSE(u.available());
}

TEST(Haze, ClearWaterAndQuintiles) {
  SceneMetadata m;
  m.calibrated = Units::TOARF;
  MultiSpectralImage img(7, 1, m);
  Plane<float> b(7, 1), r(7, 1), nir(7, 1, 0.3f);
  b[0] = 0.05f, r[0] = 0.04f;
  b[1] = 0.30f, r[1] = 0.02f;
  for (int k = 0; k < 5; ++k) b[2 + k] = 0.10f + 0.02f * k, r[2 + k] = 0.02f;
  img.add_band(BandRole::B, b);
  img.add_band(BandRole::R, r);
  img.add_band(BandRole::NIR, nir);
  Canvas c(7, 1, "average bare soil or built-up");
  c.rect(0, 1, 1, 1, "turbid water");
  const HazeResult h = detect_haze(img, c.map, DetectionConfig{});
  ASSERT_TRUE(h.available);
  EXPECT_EQ(h.level[0], 0);
  EXPECT_EQ(h.level[1], 0);
  for (int k = 0; k < 5; ++k) EXPECT_EQ(h.level[2 + k], k + 1);

  MultiSpectralImage no_blue(7, 1, m);
  no_blue.add_band(BandRole::R, r);
  EXPECT_FALSE(detect_haze(no_blue, c.map, DetectionConfig{}).available);
}

TEST(ShadowOffset, ZenithSunNadirView) {
  const Displacement d = shadow_offset({0, 0, 0, 150, 3000});
  EXPECT_EQ(d.magnitude(), 0.0);
}

TEST(ShadowOffset, FortyFiveDegrees) {
  const Displacement d = shadow_offset({45, 0, 0, 180, 1000});
  EXPECT_NEAR(d.magnitude(), 1000.0, 1e-9);
  // Sun due south: shadow due north, i.e. up the image.
  EXPECT_NEAR(d.north_m, 1000.0, 1e-9);
  EXPECT_NEAR(d.row_m(), -1000.0, 1e-9);
  EXPECT_NEAR(d.east_m, 0.0, 1e-9);
}

TEST(ShadowOffset, RayTraceOracle) {
  const Displacement d = shadow_offset({30, 20, 90, 180, 2000});
  const auto [x, y] = ray_trace(2000, 30, 20, 180, 270);
  EXPECT_NEAR(d.east_m, x, 1e-6);
  EXPECT_NEAR(d.north_m, y, 1e-6);

  std::mt19937 rng(7);
  std::uniform_real_distribution<double> zen(0, 75), az(0, 360), hh(500, 12000);
  for (int i = 0; i < 1000; ++i) {
    const ShadowGeometry g{zen(rng), zen(rng), az(rng), az(rng), hh(rng)};
    const Displacement e = shadow_offset(g);
    const auto [ox, oy] = ray_trace(g.cloud_height_m, g.sun_zenith_deg, g.view_zenith_deg, g.sun_azimuth_deg,
                                    g.sun_azimuth_deg + g.relative_azimuth_deg);
    ASSERT_NEAR(e.east_m, ox, 1e-6 * std::max(1.0, std::abs(ox)));
    ASSERT_NEAR(e.north_m, oy, 1e-6 * std::max(1.0, std::abs(oy)));
  }
}

TEST(ShadowOffset, LinearInHeightAndExactAtNadir) {
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> zen(0, 80), az(0, 360), hh(100, 6000);
  for (int i = 0; i < 200; ++i) {
    ShadowGeometry g{zen(rng), zen(rng), az(rng), az(rng), hh(rng)};
    const Displacement a = shadow_offset(g);
    g.cloud_height_m *= 2;
    const Displacement b = shadow_offset(g);
    EXPECT_NEAR(b.east_m, 2 * a.east_m, 1e-9 * std::max(1.0, std::abs(b.east_m)));
    EXPECT_NEAR(b.north_m, 2 * a.north_m, 1e-9 * std::max(1.0, std::abs(b.north_m)));
    g.view_zenith_deg = 0;
    const double expect = g.cloud_height_m * std::tan(g.sun_zenith_deg * std::numbers::pi / 180);
    EXPECT_NEAR(shadow_offset(g).magnitude(), expect, 1e-9 * std::max(1.0, expect));
  }
}

TEST(ShadowOffset, Errors) {
  EXPECT_THROW(shadow_offset({90, 0, 0, 180, 1000}), config_error);
  EXPECT_THROW(shadow_offset({30, 0, 0, 180, 0}), config_error);
}

namespace {

struct ShadowScene {
  Canvas canvas{80, 80, "strong vegetation"};
  Built built;
  ObjectSet clouds;
  SceneMetadata meta;

  ShadowScene() {
    meta.sun_zenith_deg = 45;
    meta.sun_azimuth_deg = 180;
    meta.spatial_resolution_m = 100;
    canvas.rect(50, 30, 3, 3, "core cloud");
  }
  void finish() {
    built = build(canvas.map, 100);
    clouds = detect_core_clouds(built.seg, built.graph,
                                evidence_where(canvas.map, {{"core cloud", Evidence::And}}), loose(), 100);
  }
};

}  // namespace

TEST(MatchShadows, RecoversHeight) {
  ShadowScene s;
  s.canvas.rect(20, 30, 3, 3, "water or shadow");  // 30 rows north: H = 3000 m
  s.finish();
  const ShadowResult r = match_shadows(s.clouds, s.canvas.map, nullptr, s.meta, DetectionConfig{});
  ASSERT_EQ(r.matches.size(), 1u);
  ASSERT_TRUE(r.matches[0].matched());
  EXPECT_EQ(*r.matches[0].height_m, 3000.0);
  EXPECT_DOUBLE_EQ(r.matches[0].score, 1.0);
  EXPECT_EQ(r.label(21, 31), r.matches[0].shadow_id);
}

TEST(MatchShadows, NoCandidatesNoMatch) {
  ShadowScene s;
  s.finish();
  const ShadowResult r = match_shadows(s.clouds, s.canvas.map, nullptr, s.meta, DetectionConfig{});
  ASSERT_EQ(r.matches.size(), 1u);
  EXPECT_FALSE(r.matches[0].matched());
  EXPECT_EQ(r.matches[0].shadow_id, 0u);
}

TEST(MatchShadows, TieGoesToSmallestHeight) {
  ShadowScene s;
  s.canvas.rect(10, 30, 14, 3, "water or shadow");  // rows 10..23 cover offsets 27..40
  s.finish();
  DetectionConfig cfg;
  const ShadowResult r = match_shadows(s.clouds, s.canvas.map, nullptr, s.meta, cfg);
  ASSERT_TRUE(r.matches[0].matched());
  double smallest = 0;
  for (double h : height_sweep(cfg, cfg.height_min_m, cfg.height_max_m)) {
    const long dr = std::lround(shadow_offset(ShadowGeometry::from(s.meta, h)).row_m() / 100.0);
    if (50 + dr >= 10 && 52 + dr <= 23) {
      smallest = h;
      break;
    }
  }
  EXPECT_EQ(*r.matches[0].height_m, smallest);
}

TEST(MatchShadows, ThermalWindow) {
  ShadowScene s;
  s.canvas.rect(40, 30, 3, 3, "water or shadow").rect(5, 30, 3, 3, "water or shadow");
  s.finish();
  SceneMetadata m = s.meta;
  m.calibrated = Units::TOARF;
  MultiSpectralImage img(80, 80, m);
  Plane<float> tir(80, 80, 300.0f);
  for (std::size_t r = 50; r < 53; ++r)
    for (std::size_t c = 30; c < 33; ++c) tir(r, c) = 300.0f - 0.0065f * 4500.0f;
  img.add_band(BandRole::TIR, tir);
  // Both shadows score 1; only the one 45 rows north lies in the thermal window.
  EXPECT_EQ(*match_shadows(s.clouds, s.canvas.map, nullptr, m, DetectionConfig{}).matches[0].height_m, 1000.0);
  const ShadowResult r = match_shadows(s.clouds, s.canvas.map, &img, m, DetectionConfig{});
  ASSERT_TRUE(r.matches[0].matched());
  EXPECT_NEAR(*r.matches[0].initial_height_m, 4500.0, 1.0);
  EXPECT_EQ(*r.matches[0].height_m, 4500.0);
}

TEST(SceneMask, Precedence) {
  const std::size_t w = 4, h = 1;
  ObjectSet clouds;
  clouds.label = Plane<std::uint32_t>(w, h, 0);
  clouds.label[0] = 1;
  ImageObject o;
  o.id = 1;
  o.area_px = 1;
  clouds.objects.push_back(o);
  HazeResult haze{Plane<std::uint8_t>(w, h, 3), true};
  Plane<std::uint8_t> snow(w, h, 0);
  snow[1] = snow[3] = 1;
  haze.level[3] = 0;
  ShadowResult sh;
  sh.label = Plane<std::uint32_t>(w, h, 0);
  sh.matches.push_back({1, 7000.0, std::nullopt, 0.9, 1, 1});
  const CloudSceneMask m = assemble_scene_mask({w, h, &clouds, nullptr, nullptr, &sh, &haze, &snow});
  EXPECT_EQ(m.classes[0], 1);
  EXPECT_EQ(m.classes[1], 7);
  EXPECT_EQ(m.classes[3], 10);
  ASSERT_EQ(m.clouds.size(), 1u);
  EXPECT_EQ(m.clouds[0].altitude, AltitudeClass::Mid);
  EXPECT_NE(object_report_csv(m).find("1,cloud,1,7000,1,mid"), std::string::npos);
}

TEST(SceneMask, EmptyIsClear) {
  const CloudSceneMask m = assemble_scene_mask({5, 3});
  for (auto v : m.classes.data()) EXPECT_EQ(v, 0);
  EXPECT_TRUE(m.clouds.empty());
}

TEST(SceneMask, AltitudeBands) {
  EXPECT_EQ(altitude_class(std::nullopt), AltitudeClass::Unknown);
  EXPECT_EQ(altitude_class(500.0), AltitudeClass::Low);
  EXPECT_EQ(altitude_class(5999.0), AltitudeClass::Low);
  EXPECT_EQ(altitude_class(6000.0), AltitudeClass::Mid);
  EXPECT_EQ(altitude_class(7000.0), AltitudeClass::Mid);
  EXPECT_EQ(altitude_class(9000.0), AltitudeClass::High);
  EXPECT_EQ(scene_class_name(4), "cloud-shadow");
}

TEST(Config, ParseAndValidate) {
  const DetectionConfig c = parse_detection_config(
      "siam_cloud_evidence = core cloud, thick cloud, thin cloud over water\n"
      "height_step_m = 100\nmin_cloud_area_m2 = 0\nxor_veto_families =\n");
  EXPECT_EQ(c.siam_cloud_evidence.size(), 3u);
  EXPECT_EQ(c.height_step_m, 100.0);
  EXPECT_EQ(c.min_cloud_area(30.0), 0.0);
  EXPECT_TRUE(c.xor_veto_families.empty());
  EXPECT_EQ(DetectionConfig{}.min_cloud_area(30.0), 3600.0);
  EXPECT_THROW(parse_detection_config("bogus = 1\n"), config_error);
  EXPECT_THROW(parse_detection_config("height_min_m = 13000\n"), config_error);
  EXPECT_THROW(parse_detection_config("height_step_m = abc\n"), config_error);
  EXPECT_THROW(parse_detection_config("xor_veto_families = clouds\n"), config_error);
}

TEST(Config, DefaultsMatchDocumentedValues) {
  const DetectionConfig c;
  EXPECT_EQ(c.height_min_m, 500.0);
  EXPECT_EQ(c.height_max_m, 12000.0);
  EXPECT_EQ(c.height_step_m, 250.0);
  EXPECT_EQ(c.cirrus_threshold, 0.01);
  EXPECT_EQ(c.cold_cloud_delta_k, 4.0);
  EXPECT_EQ(c.haze_threshold, 0.06);
  EXPECT_EQ(c.haze_red_weight, 0.5);
  EXPECT_EQ(c.shadow_score_threshold, 0.3);
  EXPECT_EQ(c.lapse_rate_k_per_m, 0.0065);
  const auto sweep = height_sweep(c, c.height_min_m, c.height_max_m);
  EXPECT_EQ(sweep.size(), 47u);
  EXPECT_EQ(sweep.back(), 12000.0);
}
