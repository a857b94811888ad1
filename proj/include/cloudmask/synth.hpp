// Synthetic TOARF scenes with flat elliptical clouds at known heights and
// an independent per-pixel ray-cast truth for cloud and cloud-shadow.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cloudmask/raster.hpp"

namespace cloudmask {

/// Ellipse on the ground plane, lifted to height_m. Centre in metres from
/// the image's north-west corner (east, north; north is negative inside the
/// frame). Rotation of the semi-major axis is counter-clockwise from east.
struct CloudSpec {
  double center_east_m = 0.0;
  double center_north_m = 0.0;
  double semi_major_m = 1000.0;
  double semi_minor_m = 1000.0;
  double rotation_deg = 0.0;
  double height_m = 2000.0;
  /// NIR reflectance at the cloud centre; the other bands scale with it.
  double brightness = 0.66;
  /// Cloud-top temperature; unset means surface base minus a 6.5 K/km lapse.
  std::optional<double> tir_k;

  bool contains(double east, double north) const {
    const double t = rotation_deg * std::numbers::pi / 180.0;
    const double dx = east - center_east_m, dy = north - center_north_m;
    const double u = dx * std::cos(t) + dy * std::sin(t);
    const double v = -dx * std::sin(t) + dy * std::cos(t);
    return (u * u) / (semi_major_m * semi_major_m) + (v * v) / (semi_minor_m * semi_minor_m) <= 1.0;
  }
  /// Squared normalised radius of a ground point (1 on the rim).
  double radius2(double east, double north) const {
    const double t = rotation_deg * std::numbers::pi / 180.0;
    const double dx = east - center_east_m, dy = north - center_north_m;
    const double u = dx * std::cos(t) + dy * std::sin(t);
    const double v = -dx * std::sin(t) + dy * std::cos(t);
    return (u * u) / (semi_major_m * semi_major_m) + (v * v) / (semi_minor_m * semi_minor_m);
  }
};

enum class Stratum : std::uint8_t { Vegetation, Soil, Water };

struct StratumSpec {
  std::array<double, 6> reflectance{};  // B G R NIR MIR1 MIR2
  double tir_k = 296.0;
  double weight = 1.0;
};

struct SceneSpec {
  std::size_t width = 256;
  std::size_t height = 256;
  double resolution_m = 60.0;
  double sun_zenith_deg = 30.0;
  double sun_azimuth_deg = 150.0;
  double view_zenith_deg = 0.0;
  double relative_azimuth_deg = 0.0;
  bool thermal = true;
  std::vector<CloudSpec> clouds;
  std::array<StratumSpec, 3> strata{
      StratumSpec{{0.04, 0.07, 0.04, 0.35, 0.18, 0.08}, 296.0, 0.50},
      StratumSpec{{0.12, 0.15, 0.20, 0.27, 0.33, 0.28}, 300.0, 0.35},
      StratumSpec{{0.07, 0.05, 0.03, 0.015, 0.01, 0.005}, 292.0, 0.15}};
  std::size_t strata_seeds = 24;
  double noise = 0.004;
  double shadow_factor = 0.25;
  std::uint64_t seed = 1;

  void validate() const {
    if (width == 0 || height == 0) throw config_error("scene size must be positive");
    if (!(resolution_m > 0.0)) throw config_error("resolution must be > 0");
    if (!(sun_zenith_deg >= 0.0 && sun_zenith_deg < 90.0)) throw config_error("sun zenith out of range");
    if (!(view_zenith_deg >= 0.0 && view_zenith_deg < 90.0)) throw config_error("view zenith out of range");
    if (!(noise >= 0.0)) throw config_error("noise must be >= 0");
    if (!(shadow_factor >= 0.0 && shadow_factor <= 1.0)) throw config_error("shadow factor must lie in [0,1]");
    if (strata_seeds == 0) throw config_error("strata_seeds must be >= 1");
    double wsum = 0.0;
    for (const StratumSpec& s : strata) {
      if (!(s.weight >= 0.0)) throw config_error("stratum weight must be >= 0");
      wsum += s.weight;
    }
    if (!(wsum > 0.0)) throw config_error("stratum weights sum to zero");
    const double ext_e = static_cast<double>(width) * resolution_m;
    const double ext_n = static_cast<double>(height) * resolution_m;
    for (const CloudSpec& c : clouds) {
      if (!(c.height_m > 0.0 && c.height_m <= 20000.0)) throw config_error("cloud height must lie in (0, 20000] m");
      if (!(c.semi_major_m > 0.0 && c.semi_minor_m > 0.0)) throw config_error("cloud semi-axes must be > 0");
      if (!(c.brightness > 0.0 && c.brightness <= 1.5)) throw config_error("cloud brightness must lie in (0, 1.5]");
      if (!(c.center_east_m >= 0.0 && c.center_east_m <= ext_e && c.center_north_m <= 0.0 &&
            c.center_north_m >= -ext_n))
        throw config_error("cloud centre outside the frame");
    }
  }
};

struct TruthCloud {
  std::uint32_t id = 0;
  double height_m = 0.0;
  std::size_t cloud_px = 0;
  std::size_t shadow_px = 0;          // ray-cast shadow inside the frame
  std::size_t visible_shadow_px = 0;  // not hidden under any cloud
  std::size_t offframe_shadow_px = 0;

  /// At least half of the shadow visible and inside the frame.
  bool unoccluded() const {
    const std::size_t total = shadow_px + offframe_shadow_px;
    return total > 0 && 2 * visible_shadow_px >= total;
  }
};

struct SceneTruth {
  Plane<std::uint8_t> classes;      // 0 clear, 1 cloud, 4 cloud-shadow
  Plane<std::uint32_t> cloud_id;    // apparent cloud, 0 = none
  Plane<std::uint32_t> shadow_id;   // ray-cast shadow, 0 = none (hidden included)
  Plane<std::uint8_t> stratum;
  std::vector<TruthCloud> clouds;
};

struct SyntheticScene {
  MultiSpectralImage image;
  SceneTruth truth;
};

namespace detail {

inline std::array<double, 2> unit_azimuth(double az_deg) {
  const double a = az_deg * std::numbers::pi / 180.0;
  return {std::sin(a), std::cos(a)};  // east, north
}

inline constexpr std::array<double, 6> kCloudSpectrum = {0.62, 0.63, 0.64, 0.66, 0.55, 0.45};
inline constexpr double kSurfaceBaseK = 297.0;
inline constexpr double kLapseKPerM = 0.0065;

}  // namespace detail

/// Renders the scene. Pixel (r, c) has its centre at east (c+0.5)*res,
/// north -(r+0.5)*res. A pixel shows cloud k when the ray toward the sensor
/// crosses height H_k inside ellipse k; it is in the shadow of cloud k when
/// the ray toward the sun does.
inline SyntheticScene gen_scene(const SceneSpec& spec) {
  spec.validate();
  const std::size_t w = spec.width, h = spec.height;
  const double res = spec.resolution_m;
  std::mt19937_64 rng(spec.seed);

  SceneMetadata meta;
  meta.sun_zenith_deg = spec.sun_zenith_deg;
  meta.sun_azimuth_deg = spec.sun_azimuth_deg;
  meta.view_zenith_deg = spec.view_zenith_deg;
  meta.relative_azimuth_deg = spec.relative_azimuth_deg;
  meta.spatial_resolution_m = res;
  meta.calibrated = Units::TOARF;

  SceneTruth truth;
  truth.classes = Plane<std::uint8_t>(w, h, 0);
  truth.cloud_id = Plane<std::uint32_t>(w, h, 0);
  truth.shadow_id = Plane<std::uint32_t>(w, h, 0);
  truth.stratum = Plane<std::uint8_t>(w, h, 0);

  // Voronoi strata.
  std::uniform_real_distribution<double> ue(0.0, static_cast<double>(w)), un(0.0, static_cast<double>(h));
  std::discrete_distribution<int> pick({spec.strata[0].weight, spec.strata[1].weight, spec.strata[2].weight});
  std::vector<std::array<double, 2>> seeds(spec.strata_seeds);
  std::vector<std::uint8_t> seed_class(spec.strata_seeds);
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    seeds[i] = {ue(rng), un(rng)};
    seed_class[i] = static_cast<std::uint8_t>(pick(rng));
  }
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      double best = std::numeric_limits<double>::infinity();
      std::uint8_t cls = 0;
      for (std::size_t i = 0; i < seeds.size(); ++i) {
        const double dx = static_cast<double>(c) + 0.5 - seeds[i][0];
        const double dy = static_cast<double>(r) + 0.5 - seeds[i][1];
        const double d = dx * dx + dy * dy;
        if (d < best) {
          best = d;
          cls = seed_class[i];
        }
      }
      truth.stratum(r, c) = cls;
    }

  const auto us = detail::unit_azimuth(spec.sun_azimuth_deg);
  const auto uv = detail::unit_azimuth(spec.sun_azimuth_deg + spec.relative_azimuth_deg);
  const double ts = std::tan(spec.sun_zenith_deg * std::numbers::pi / 180.0);
  const double tv = std::tan(spec.view_zenith_deg * std::numbers::pi / 180.0);

  for (std::size_t k = 0; k < spec.clouds.size(); ++k)
    truth.clouds.push_back({static_cast<std::uint32_t>(k + 1), spec.clouds[k].height_m, 0, 0, 0, 0});

  // Ray casts. Earlier clouds win where apparent clouds overlap.
  Plane<float> alpha(w, h, 0.0f);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const double e = (static_cast<double>(c) + 0.5) * res;
      const double n = -(static_cast<double>(r) + 0.5) * res;
      for (std::size_t k = 0; k < spec.clouds.size(); ++k) {
        const CloudSpec& cl = spec.clouds[k];
        const double H = cl.height_m;
        if (truth.cloud_id(r, c) == 0) {
          const double ce = e + H * tv * uv[0], cn = n + H * tv * uv[1];
          const double q = cl.radius2(ce, cn);
          if (q <= 1.0) {
            truth.cloud_id(r, c) = static_cast<std::uint32_t>(k + 1);
            alpha(r, c) = static_cast<float>(1.0 - 0.65 * q);
          }
        }
        if (truth.shadow_id(r, c) == 0 && cl.contains(e + H * ts * us[0], n + H * ts * us[1]))
          truth.shadow_id(r, c) = static_cast<std::uint32_t>(k + 1);
      }
    }
  for (std::size_t i = 0; i < w * h; ++i) {
    if (truth.cloud_id[i]) {
      truth.classes[i] = 1;
      ++truth.clouds[truth.cloud_id[i] - 1].cloud_px;
    } else if (truth.shadow_id[i]) {
      truth.classes[i] = 4;
    }
    if (truth.shadow_id[i]) {
      TruthCloud& t = truth.clouds[truth.shadow_id[i] - 1];
      ++t.shadow_px;
      if (!truth.cloud_id[i]) ++t.visible_shadow_px;
    }
  }
  // Shadow area falling outside the frame, by casting on a padded grid.
  for (std::size_t k = 0; k < spec.clouds.size(); ++k) {
    const CloudSpec& cl = spec.clouds[k];
    const double se = cl.center_east_m - cl.height_m * ts * us[0];
    const double sn = cl.center_north_m - cl.height_m * ts * us[1];
    const double rad = std::max(cl.semi_major_m, cl.semi_minor_m);
    const long c0 = static_cast<long>(std::floor((se - rad) / res)) - 1;
    const long c1 = static_cast<long>(std::ceil((se + rad) / res)) + 1;
    const long r0 = static_cast<long>(std::floor((-sn - rad) / res)) - 1;
    const long r1 = static_cast<long>(std::ceil((-sn + rad) / res)) + 1;
    for (long r = r0; r <= r1; ++r)
      for (long c = c0; c <= c1; ++c) {
        if (r >= 0 && c >= 0 && r < static_cast<long>(h) && c < static_cast<long>(w)) continue;
        const double e = (static_cast<double>(c) + 0.5) * res;
        const double n = -(static_cast<double>(r) + 0.5) * res;
        if (cl.contains(e + cl.height_m * ts * us[0], n + cl.height_m * ts * us[1]))
          ++truth.clouds[k].offframe_shadow_px;
      }
  }

  MultiSpectralImage img(w, h, meta);
  std::normal_distribution<double> noise(0.0, 1.0);
  constexpr std::array<BandRole, 6> refl = {BandRole::B, BandRole::G, BandRole::R,
                                           BandRole::NIR, BandRole::MIR1, BandRole::MIR2};
  std::array<Plane<float>, 6> planes;
  for (auto& p : planes) p = Plane<float>(w, h, 0.0f);
  Plane<float> tir(w, h, 0.0f);
  for (std::size_t i = 0; i < w * h; ++i) {
    const StratumSpec& s = spec.strata[truth.stratum[i]];
    const bool shaded = truth.shadow_id[i] != 0;
    const std::uint32_t cid = truth.cloud_id[i];
    double t = s.tir_k;
    for (std::size_t b = 0; b < 6; ++b) {
      double v = s.reflectance[b] * (shaded ? spec.shadow_factor : 1.0);
      if (cid) {
        const CloudSpec& cl = spec.clouds[cid - 1];
        const double cv = detail::kCloudSpectrum[b] * cl.brightness / detail::kCloudSpectrum[3];
        v = alpha[i] * cv + (1.0 - alpha[i]) * v;
      }
      v += spec.noise * noise(rng);
      planes[b][i] = static_cast<float>(std::clamp(v, 0.0, 1.5));
    }
    if (cid) {
      const CloudSpec& cl = spec.clouds[cid - 1];
      t = cl.tir_k.value_or(detail::kSurfaceBaseK - detail::kLapseKPerM * cl.height_m);
    }
    tir[i] = static_cast<float>(t + 50.0 * spec.noise * noise(rng));
  }
  for (std::size_t b = 0; b < 6; ++b) img.add_band(refl[b], std::move(planes[b]));
  if (spec.thermal) img.add_band(BandRole::TIR, std::move(tir));
  return {std::move(img), std::move(truth)};
}

/// Random scene for the acceptance suite: 512 x 512 at 60 m, sun zenith in
/// [20, 60] deg, view zenith in [0, 7] deg, 1 to 5 clouds at 1 to 10 km.
/// Clouds and shadows are kept inside the frame and apart from each other.
inline SceneSpec random_scene_spec(std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ull);
  auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  SceneSpec s;
  s.width = s.height = 512;
  s.resolution_m = 60.0;
  s.seed = seed;
  s.sun_zenith_deg = uni(20.0, 60.0);
  s.sun_azimuth_deg = uni(0.0, 360.0);
  s.view_zenith_deg = uni(0.0, 7.0);
  s.relative_azimuth_deg = uni(0.0, 360.0);
  const int n = std::uniform_int_distribution<int>(1, 5)(rng);
  const double ext = 512 * 60.0, margin = 120.0;
  const auto us = detail::unit_azimuth(s.sun_azimuth_deg);
  const auto uv = detail::unit_azimuth(s.sun_azimuth_deg + s.relative_azimuth_deg);
  const double ts = std::tan(s.sun_zenith_deg * std::numbers::pi / 180.0);
  const double tv = std::tan(s.view_zenith_deg * std::numbers::pi / 180.0);
  struct Disc {
    double e, n, r;
  };
  std::vector<Disc> taken;
  auto inside = [&](const Disc& d) {
    return d.e - d.r >= margin && d.e + d.r <= ext - margin && -d.n - d.r >= margin &&
           -d.n + d.r <= ext - margin;
  };
  for (int k = 0; k < n; ++k) {
    for (int attempt = 0; attempt < 2000; ++attempt) {
      CloudSpec c;
      c.semi_major_m = uni(700.0, 2400.0);
      c.semi_minor_m = c.semi_major_m * uni(0.6, 1.0);
      c.rotation_deg = uni(0.0, 180.0);
      c.height_m = uni(1000.0, 10000.0);
      c.center_east_m = uni(0.0, ext);
      c.center_north_m = -uni(0.0, ext);
      const double r = c.semi_major_m;
      const Disc apparent{c.center_east_m - c.height_m * tv * uv[0],
                          c.center_north_m - c.height_m * tv * uv[1], r};
      const Disc shadow{c.center_east_m - c.height_m * ts * us[0],
                        c.center_north_m - c.height_m * ts * us[1], r};
      if (!inside(apparent) || !inside(shadow)) continue;
      bool clash = false;
      for (const Disc& d : taken)
        for (const Disc& x : {apparent, shadow})
          clash = clash || std::hypot(d.e - x.e, d.n - x.n) < d.r + x.r + margin;
      if (clash) continue;
      taken.push_back(apparent);
      taken.push_back(shadow);
      s.clouds.push_back(c);
      break;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Text form

inline SceneSpec parse_scene_spec(const std::string& text) {
  SceneSpec s;
  std::istringstream in(text);
  const auto kv = detail::parse_key_values(in, "scene spec");
  std::vector<CloudSpec> clouds;
  auto cloud = [&](std::size_t idx) -> CloudSpec& {
    if (idx == 0 || idx > 64) throw config_error("scene spec: cloud index must lie in 1..64");
    if (clouds.size() < idx) clouds.resize(idx);
    return clouds[idx - 1];
  };
  auto stratum = [&](const std::string& name) -> StratumSpec& {
    if (name == "vegetation") return s.strata[0];
    if (name == "soil") return s.strata[1];
    if (name == "water") return s.strata[2];
    throw config_error("scene spec: unknown stratum '" + name + "'");
  };
  try {
    for (const auto& [key, value] : kv) {
      auto num = [&] { return detail::parse_double(value, key); };
      if (key == "width") s.width = static_cast<std::size_t>(detail::parse_int(value, key));
      else if (key == "height") s.height = static_cast<std::size_t>(detail::parse_int(value, key));
      else if (key == "resolution_m") s.resolution_m = num();
      else if (key == "sun_zenith_deg") s.sun_zenith_deg = num();
      else if (key == "sun_azimuth_deg") s.sun_azimuth_deg = num();
      else if (key == "view_zenith_deg") s.view_zenith_deg = num();
      else if (key == "relative_azimuth_deg") s.relative_azimuth_deg = num();
      else if (key == "thermal") s.thermal = value == "true" || value == "1";
      else if (key == "noise") s.noise = num();
      else if (key == "shadow_factor") s.shadow_factor = num();
      else if (key == "strata_seeds") s.strata_seeds = static_cast<std::size_t>(detail::parse_int(value, key));
      else if (key == "seed") s.seed = static_cast<std::uint64_t>(detail::parse_int(value, key));
      else if (key.rfind("cloud.", 0) == 0 || key.rfind("stratum.", 0) == 0) {
        const auto d1 = key.find('.'), d2 = key.find('.', d1 + 1);
        if (d2 == std::string::npos) throw config_error("scene spec: malformed key '" + key + "'");
        const std::string mid = key.substr(d1 + 1, d2 - d1 - 1), field = key.substr(d2 + 1);
        if (key[0] == 'c') {
          CloudSpec& c = cloud(static_cast<std::size_t>(detail::parse_int(mid, key)));
          if (field == "center_east_m") c.center_east_m = num();
          else if (field == "center_north_m") c.center_north_m = num();
          else if (field == "semi_major_m") c.semi_major_m = num();
          else if (field == "semi_minor_m") c.semi_minor_m = num();
          else if (field == "rotation_deg") c.rotation_deg = num();
          else if (field == "height_m") c.height_m = num();
          else if (field == "brightness") c.brightness = num();
          else if (field == "tir_k") c.tir_k = num();
          else throw config_error("scene spec: unknown cloud field '" + field + "'");
        } else {
          StratumSpec& st = stratum(mid);
          if (field == "tir_k") st.tir_k = num();
          else if (field == "weight") st.weight = num();
          else if (field == "reflectance") {
            std::vector<double> v;
            std::string item;
            std::istringstream vs(value);
            while (std::getline(vs, item, ',')) v.push_back(detail::parse_double(detail::trim(item), key));
            if (v.size() != 6) throw config_error("scene spec: reflectance needs 6 values");
            std::copy(v.begin(), v.end(), st.reflectance.begin());
          } else throw config_error("scene spec: unknown stratum field '" + field + "'");
        }
      } else throw config_error("scene spec: unknown key '" + key + "'");
    }
  } catch (const io_error& e) {
    throw config_error(e.what());
  }
  s.clouds = std::move(clouds);
  s.validate();
  return s;
}

inline std::string scene_spec_text(const SceneSpec& s) {
  using detail::format_double;
  std::ostringstream os;
  os << "width=" << s.width << "\nheight=" << s.height << "\nresolution_m=" << format_double(s.resolution_m)
     << "\nsun_zenith_deg=" << format_double(s.sun_zenith_deg)
     << "\nsun_azimuth_deg=" << format_double(s.sun_azimuth_deg)
     << "\nview_zenith_deg=" << format_double(s.view_zenith_deg)
     << "\nrelative_azimuth_deg=" << format_double(s.relative_azimuth_deg)
     << "\nthermal=" << (s.thermal ? "true" : "false") << "\nnoise=" << format_double(s.noise)
     << "\nshadow_factor=" << format_double(s.shadow_factor) << "\nstrata_seeds=" << s.strata_seeds
     << "\nseed=" << s.seed << "\n";
  const char* names[] = {"vegetation", "soil", "water"};
  for (std::size_t i = 0; i < 3; ++i) {
    os << "stratum." << names[i] << ".reflectance=";
    for (std::size_t b = 0; b < 6; ++b) os << (b ? "," : "") << format_double(s.strata[i].reflectance[b]);
    os << "\nstratum." << names[i] << ".tir_k=" << format_double(s.strata[i].tir_k) << "\nstratum."
       << names[i] << ".weight=" << format_double(s.strata[i].weight) << "\n";
  }
  for (std::size_t k = 0; k < s.clouds.size(); ++k) {
    const CloudSpec& c = s.clouds[k];
    const std::string p = "cloud." + std::to_string(k + 1) + ".";
    os << p << "center_east_m=" << format_double(c.center_east_m) << "\n"
       << p << "center_north_m=" << format_double(c.center_north_m) << "\n"
       << p << "semi_major_m=" << format_double(c.semi_major_m) << "\n"
       << p << "semi_minor_m=" << format_double(c.semi_minor_m) << "\n"
       << p << "rotation_deg=" << format_double(c.rotation_deg) << "\n"
       << p << "height_m=" << format_double(c.height_m) << "\n"
       << p << "brightness=" << format_double(c.brightness) << "\n";
    if (c.tir_k) os << p << "tir_k=" << format_double(*c.tir_k) << "\n";
  }
  return os.str();
}

}  // namespace cloudmask
