#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "cloudmask/detect.hpp"
#include "cloudmask/synth.hpp"

using namespace cloudmask;

namespace {

SceneSpec one_disc(double sun_zenith, double view_zenith, double height) {
  SceneSpec s;
  s.sun_zenith_deg = sun_zenith;
  s.view_zenith_deg = view_zenith;
  CloudSpec c;
  c.center_east_m = 7680.0;
  c.center_north_m = -7680.0;
  c.height_m = height;
  s.clouds.push_back(c);
  return s;
}

struct Centroid {
  double east = 0.0, north = 0.0;
  std::size_t n = 0;
};

Centroid centroid_of(const Plane<std::uint32_t>& ids, std::uint32_t id, double res) {
  Centroid c;
  for (std::size_t r = 0; r < ids.height(); ++r)
    for (std::size_t col = 0; col < ids.width(); ++col)
      if (ids(r, col) == id) {
        c.east += (static_cast<double>(col) + 0.5) * res;
        c.north -= (static_cast<double>(r) + 0.5) * res;
        ++c.n;
      }
  c.east /= static_cast<double>(c.n);
  c.north /= static_cast<double>(c.n);
  return c;
}

using PixelSet = std::set<std::pair<long, long>>;

PixelSet pixels_of(const Plane<std::uint32_t>& ids, std::uint32_t id, long dr = 0, long dc = 0) {
  PixelSet s;
  for (std::size_t r = 0; r < ids.height(); ++r)
    for (std::size_t c = 0; c < ids.width(); ++c)
      if (ids(r, c) == id) s.insert({static_cast<long>(r) + dr, static_cast<long>(c) + dc});
  return s;
}

bool near_any(const PixelSet& s, std::pair<long, long> p) {
  for (long a = -1; a <= 1; ++a)
    for (long b = -1; b <= 1; ++b)
      if (s.count({p.first + a, p.second + b})) return true;
  return false;
}

}  // namespace

TEST(Synth, ZeroCloudsAllClear) {
  SceneSpec s;
  s.width = s.height = 64;
  const SyntheticScene scene = gen_scene(s);
  for (std::uint8_t v : scene.truth.classes.data()) ASSERT_EQ(v, 0);
  EXPECT_TRUE(scene.truth.clouds.empty());
  const Plane<float>& nir = scene.image.band(BandRole::NIR).values;
  for (std::size_t i = 0; i < nir.size(); ++i) {
    const double bg = s.strata[scene.truth.stratum[i]].reflectance[3];
    ASSERT_NEAR(nir[i], bg, 6 * s.noise);
  }
  EXPECT_EQ(scene.image.units(), Units::TOARF);
  EXPECT_TRUE(scene.image.has(BandRole::TIR));
}

TEST(Synth, ShadowCentroidDisplacedAntiSolar) {
  const SceneSpec s = one_disc(30.0, 0.0, 2000.0);
  const SyntheticScene scene = gen_scene(s);
  const Centroid cloud = centroid_of(scene.truth.cloud_id, 1, s.resolution_m);
  const Centroid shadow = centroid_of(scene.truth.shadow_id, 1, s.resolution_m);
  EXPECT_NEAR(cloud.east, 7680.0, 5.0);
  EXPECT_NEAR(cloud.north, -7680.0, 5.0);
  const double de = shadow.east - cloud.east, dn = shadow.north - cloud.north;
  EXPECT_NEAR(std::hypot(de, dn), 1154.7, 5.0);
  // Anti-solar: opposite to the sun azimuth of 150 deg.
  const double az = std::atan2(de, dn) * 180.0 / std::numbers::pi;
  EXPECT_NEAR(az, 150.0 - 180.0, 0.5);
  const Displacement d = shadow_offset(ShadowGeometry::from(scene.image.metadata(), 2000.0));
  EXPECT_NEAR(de, d.east_m, 5.0);
  EXPECT_NEAR(dn, d.north_m, 5.0);
}

TEST(Synth, RayCastShadowIsTranslatedFootprint) {
  for (const auto& [ts, tv, rel, h] : std::vector<std::array<double, 4>>{
           {30, 0, 0, 2000}, {50, 5, 60, 4000}, {22, 7, 200, 9000}, {58, 3, 310, 1500}}) {
    SceneSpec s = one_disc(ts, tv, h);
    s.relative_azimuth_deg = rel;
    s.sun_azimuth_deg = 120.0;
    s.width = s.height = 400;
    s.clouds[0].center_east_m = 12000.0;
    s.clouds[0].center_north_m = -12000.0;
    const SyntheticScene scene = gen_scene(s);
    const Displacement d = shadow_offset(ShadowGeometry::from(scene.image.metadata(), h));
    const long dr = std::lround(d.row_m() / s.resolution_m), dc = std::lround(d.col_m() / s.resolution_m);
    const PixelSet moved = pixels_of(scene.truth.cloud_id, 1, dr, dc);
    const PixelSet shadow = pixels_of(scene.truth.shadow_id, 1);
    ASSERT_FALSE(shadow.empty());
    for (const auto& p : moved) EXPECT_TRUE(near_any(shadow, p)) << ts << " " << tv;
    for (const auto& p : shadow) EXPECT_TRUE(near_any(moved, p)) << ts << " " << tv;
  }
}

TEST(Synth, ShadowAreaMatchesFootprintAtNadir) {
  const SyntheticScene scene = gen_scene(one_disc(40.0, 0.0, 3000.0));
  const TruthCloud& t = scene.truth.clouds.at(0);
  // Boundary band of a 1000 m disc at 60 m: about 2*pi*r/res pixels.
  const double band = 2 * std::numbers::pi * 1000.0 / 60.0;
  EXPECT_NEAR(static_cast<double>(t.shadow_px), static_cast<double>(t.cloud_px), band);
  EXPECT_EQ(t.offframe_shadow_px, 0u);
  EXPECT_TRUE(t.unoccluded());
}

TEST(Synth, SunAtZenithShadowUnderCloud) {
  SceneSpec s = one_disc(0.0, 0.0, 5000.0);
  s.clouds[0].semi_minor_m = 600.0;
  s.clouds[0].rotation_deg = 35.0;
  const SyntheticScene scene = gen_scene(s);
  const CloudSpec& c = s.clouds[0];
  for (std::size_t r = 0; r < s.height; ++r)
    for (std::size_t col = 0; col < s.width; ++col) {
      const bool under = c.contains((static_cast<double>(col) + 0.5) * 60.0, -(static_cast<double>(r) + 0.5) * 60.0);
      ASSERT_EQ(scene.truth.shadow_id(r, col) == 1, under);
      ASSERT_EQ(scene.truth.cloud_id(r, col) == 1, under);
    }
  EXPECT_FALSE(scene.truth.clouds[0].unoccluded());
}

TEST(Synth, CloudsAreBrightAndCold) {
  const SceneSpec s = one_disc(30.0, 0.0, 4000.0);
  const SyntheticScene scene = gen_scene(s);
  const std::size_t r = 128, c = 128;
  ASSERT_EQ(scene.truth.classes(r, c), 1);
  EXPECT_GT(scene.image.band(BandRole::B).values(r, c), 0.5f);
  EXPECT_NEAR(scene.image.band(BandRole::TIR).values(r, c), 297.0 - 0.0065 * 4000.0, 1.5);
}

TEST(Synth, DeterministicUnderSeed) {
  const SceneSpec s = random_scene_spec(11);
  const SyntheticScene a = gen_scene(s), b = gen_scene(s);
  for (const Band& band : a.image.bands()) EXPECT_EQ(band.values, b.image.band(band.role).values);
  EXPECT_EQ(a.truth.classes, b.truth.classes);
  SceneSpec t = s;
  t.seed = 12;
  EXPECT_NE(gen_scene(t).image.band(BandRole::NIR).values, a.image.band(BandRole::NIR).values);
}

TEST(Synth, RandomSpecsWithinRanges) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const SceneSpec s = random_scene_spec(seed);
    EXPECT_NO_THROW(s.validate());
    EXPECT_GE(s.sun_zenith_deg, 20.0);
    EXPECT_LE(s.sun_zenith_deg, 60.0);
    EXPECT_GE(s.clouds.size(), 1u);
    EXPECT_LE(s.clouds.size(), 5u);
    for (const CloudSpec& c : s.clouds) {
      EXPECT_GE(c.height_m, 1000.0);
      EXPECT_LE(c.height_m, 10000.0);
    }
  }
}

TEST(Synth, SpecTextRoundTrip) {
  SceneSpec s = random_scene_spec(3);
  s.clouds[0].tir_k = 250.5;
  const SceneSpec back = parse_scene_spec(scene_spec_text(s));
  EXPECT_EQ(scene_spec_text(back), scene_spec_text(s));
  EXPECT_EQ(back.clouds.size(), s.clouds.size());
  EXPECT_EQ(back.clouds[0].tir_k, std::optional<double>(250.5));
}

TEST(Synth, InvalidSpecs) {
  EXPECT_THROW(parse_scene_spec("width=10\nbogus=1\n"), config_error);
  EXPECT_THROW(parse_scene_spec("cloud.1.height_m=25000\ncloud.1.center_east_m=10\ncloud.1.center_north_m=-10\n"),
               config_error);
  EXPECT_THROW(parse_scene_spec("cloud.1.center_east_m=-5\n"), config_error);
  EXPECT_THROW(parse_scene_spec("noise=-1\n"), config_error);
  EXPECT_THROW(parse_scene_spec("stratum.ice.weight=1\n"), config_error);
  SceneSpec s;
  s.sun_zenith_deg = 90.0;
  EXPECT_THROW(gen_scene(s), config_error);
}
