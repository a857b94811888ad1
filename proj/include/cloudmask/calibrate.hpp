// Stage 0: DN to top-of-atmosphere reflectance, and the self-organising
// histogram stretch that normalises uncalibrated RGB bands before the RGB
// colour-space quantiser.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cloudmask/raster.hpp"

namespace cloudmask {

/// Upper bound admitted for reflective TOARF values (bright cloud tops).
inline constexpr float kMaxToarf = 1.5f;

/// rho = pi * (gain * dn + offset) * d^2 / (esun * cos(sun_zenith)).
inline double toarf_reflectance(double dn, double gain, double offset, double esun,
                                double earth_sun_au, double sun_zenith_deg) {
  const double radiance = gain * dn + offset;
  const double cos_sz = std::cos(sun_zenith_deg * std::numbers::pi / 180.0);
  return std::numbers::pi * radiance * earth_sun_au * earth_sun_au / (esun * cos_sz);
}

/// Inverse Planck with the usual two sensor constants. Non-positive radiance
/// yields 0 K.
inline double brightness_temperature(double radiance, double k1, double k2) {
  if (radiance <= 0.0) return 0.0;
  return k2 / std::log(k1 / radiance + 1.0);
}

/// Converts a DN image to TOARF (reflective bands) and kelvin (TIR).
/// Reflective values are clamped to [0, kMaxToarf].
inline MultiSpectralImage calibrate_to_toarf(const MultiSpectralImage& img,
                                             unsigned threads = 1) {
  if (img.units() != Units::DN) throw config_error("image is already calibrated");
  const SceneMetadata& m = img.metadata();
  if (!(m.sun_zenith_deg >= 0.0 && m.sun_zenith_deg < 90.0))
    throw config_error("sun zenith must lie in [0, 90) degrees");
  if (m.acquisition_doy < 1 || m.acquisition_doy > 366)
    throw config_error("day of year outside 1..366");
  for (const Band& b : img.bands()) {
    const BandCalibration& c = b.calibration;
    const std::string name(role_name(b.role));
    if (!(c.gain > 0.0)) throw config_error("missing gain for band " + name);
    if (b.role == BandRole::TIR) {
      if (!(c.k1 > 0.0 && c.k2 > 0.0)) throw config_error("missing k1/k2 for band TIR");
    } else if (!(c.esun > 0.0)) {
      throw config_error("missing esun for band " + name);
    }
  }

  const double d = earth_sun_distance(m.acquisition_doy);
  MultiSpectralImage out(img.width(), img.height(), m);
  out.metadata().calibrated = Units::TOARF;
  out.profile_name() = img.profile_name();
  for (const Band& b : img.bands()) out.add_band(b.role, 0.0f, b.calibration);

  const auto ts = tiles(img, 256);
  for (std::size_t bi = 0; bi < img.bands().size(); ++bi) {
    const Band& src = img.bands()[bi];
    Band& dst = out.bands()[bi];
    const BandCalibration c = src.calibration;
    for_each_tile(ts, threads, [&](const Tile& t) {
      for (std::size_t r = t.row; r < t.row_end(); ++r)
        for (std::size_t col = t.col; col < t.col_end(); ++col) {
          const double dn = src.values(r, col);
          double v;
          if (src.role == BandRole::TIR) {
            v = brightness_temperature(c.gain * dn + c.offset, c.k1, c.k2);
          } else {
            v = toarf_reflectance(dn, c.gain, c.offset, c.esun, d, m.sun_zenith_deg);
            v = std::clamp(v, 0.0, static_cast<double>(kMaxToarf));
          }
          dst.values(r, col) = static_cast<float>(v);
        }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Histogram modes

inline constexpr std::size_t kHistogramBins = 256;
using Histogram = std::array<std::uint64_t, kHistogramBins>;

struct HistogramMode {
  std::size_t peak_bin = 0;
  std::size_t left_bin = 0;
  std::size_t right_bin = 0;
  double mass_fraction = 0.0;

  friend bool operator==(const HistogramMode&, const HistogramMode&) = default;
};

/// At most three disjoint modes ordered by bin.
struct HistogramModes {
  std::vector<HistogramMode> modes;
};

/// 256-bin histogram of a plane over its observed [min, max].
struct BandHistogram {
  Histogram counts{};
  double min = 0.0;
  double max = 0.0;

  bool constant() const { return !(max > min); }

  std::size_t bin_of(double v) const {
    if (constant()) return 0;
    const double t = std::floor((v - min) / (max - min) * static_cast<double>(kHistogramBins));
    return static_cast<std::size_t>(std::clamp(t, 0.0, static_cast<double>(kHistogramBins - 1)));
  }
  double bin_center(std::size_t bin) const {
    if (constant()) return min;
    return min + (static_cast<double>(bin) + 0.5) * (max - min) / kHistogramBins;
  }
};

inline BandHistogram band_histogram(const Plane<float>& band) {
  BandHistogram h;
  if (band.empty()) return h;
  const auto [lo, hi] = std::minmax_element(band.data().begin(), band.data().end());
  h.min = *lo;
  h.max = *hi;
  for (float v : band.data()) ++h.counts[h.bin_of(v)];
  return h;
}

namespace detail {

inline std::array<double, kHistogramBins> smooth5(const Histogram& raw) {
  std::array<double, kHistogramBins> s{};
  const int n = static_cast<int>(kHistogramBins);
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    int cnt = 0;
    for (int j = std::max(0, i - 2); j <= std::min(n - 1, i + 2); ++j, ++cnt)
      sum += static_cast<double>(raw[j]);
    s[i] = sum / cnt;
  }
  return s;
}

}  // namespace detail

/// Finds up to three dominant modes of a 256-bin histogram.
///
/// Peaks are plateaus of the 5-bin moving average that rise above both
/// neighbours. Adjacent peaks are separated at the smoothed minimum between
/// them; the least massive peak is dropped until at most three remain and
/// each holds at least 1% of the pixels. Reported bounds are trimmed to the
/// non-empty bins of each region and the peak is the raw maximum inside it.
inline HistogramModes detect_histogram_modes(const Histogram& raw) {
  HistogramModes out;
  std::uint64_t total = 0;
  for (auto c : raw) total += c;
  if (total == 0) return out;

  const auto s = detail::smooth5(raw);
  const std::size_t n = kHistogramBins;

  std::vector<std::size_t> peaks;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && s[j + 1] == s[i]) ++j;
    const bool left_lower = i == 0 || s[i - 1] < s[i];
    const bool right_lower = j + 1 == n || s[j + 1] < s[i];
    if (s[i] > 0.0 && left_lower && right_lower) peaks.push_back((i + j) / 2);
    i = j + 1;
  }

  struct Region {
    std::size_t lo, hi;
    std::uint64_t mass;
  };
  auto regions_of = [&](const std::vector<std::size_t>& pk) {
    std::vector<Region> rs(pk.size());
    for (std::size_t k = 0; k < pk.size(); ++k) {
      rs[k].lo = k == 0 ? 0 : rs[k - 1].hi + 1;
      if (k + 1 == pk.size()) {
        rs[k].hi = n - 1;
      } else {
        std::size_t split = pk[k];
        for (std::size_t b = pk[k]; b < pk[k + 1]; ++b)
          if (s[b] < s[split]) split = b;
        rs[k].hi = split;
      }
      rs[k].mass = 0;
      for (std::size_t b = rs[k].lo; b <= rs[k].hi; ++b) rs[k].mass += raw[b];
    }
    return rs;
  };

  auto rs = regions_of(peaks);
  for (;;) {
    std::size_t weakest = 0;
    for (std::size_t k = 1; k < rs.size(); ++k)
      if (rs[k].mass < rs[weakest].mass) weakest = k;
    const bool too_light = static_cast<double>(rs[weakest].mass) < 0.01 * static_cast<double>(total);
    if (rs.size() <= 1 || (rs.size() <= 3 && !too_light)) break;
    peaks.erase(peaks.begin() + static_cast<std::ptrdiff_t>(weakest));
    rs = regions_of(peaks);
  }

  for (const Region& r : rs) {
    std::size_t lo = r.lo, hi = r.hi;
    while (lo < hi && raw[lo] == 0) ++lo;
    while (hi > lo && raw[hi] == 0) --hi;
    std::size_t peak = lo;
    for (std::size_t b = lo; b <= hi; ++b)
      if (raw[b] > raw[peak]) peak = b;
    out.modes.push_back(HistogramMode{peak, lo, hi,
                                      static_cast<double>(r.mass) / static_cast<double>(total)});
  }
  return out;
}

inline HistogramModes detect_histogram_modes(const Plane<float>& band) {
  return detect_histogram_modes(band_histogram(band).counts);
}

// ---------------------------------------------------------------------------
// Colour-constancy stretch

/// Piecewise-linear monotone map from a band's value domain onto [0, 255].
/// Values at or below `low_cut` map to 0, values at or above `high_cut` to
/// 255. A constant band maps everything to 127.
struct StretchLut {
  double low_cut = 0.0;
  double high_cut = 255.0;
  bool constant = false;
  BandHistogram histogram;
  std::optional<std::size_t> low_mode;
  std::optional<std::size_t> central_mode;
  std::optional<std::size_t> high_mode;

  std::uint8_t operator()(double v) const {
    if (constant) return 127;
    const double t = (v - low_cut) / (high_cut - low_cut) * 255.0;
    return static_cast<std::uint8_t>(std::clamp(std::floor(t + 0.5), 0.0, 255.0));
  }

  /// Output for each histogram bin centre.
  std::array<std::uint8_t, kHistogramBins> table() const {
    std::array<std::uint8_t, kHistogramBins> t{};
    for (std::size_t b = 0; b < kHistogramBins; ++b) t[b] = (*this)(histogram.bin_center(b));
    return t;
  }

  std::string dump() const {
    std::ostringstream os;
    os << "# low_cut=" << detail::format_double(low_cut)
       << " high_cut=" << detail::format_double(high_cut) << "\n";
    const auto t = table();
    for (std::size_t b = 0; b < kHistogramBins; ++b)
      os << b << " " << detail::format_double(histogram.bin_center(b)) << " "
         << static_cast<int>(t[b]) << "\n";
    return os.str();
  }
};

/// Builds the stretch for one band from its histogram modes.
///
/// Three modes are read as low, central and high. With two, the heavier one
/// is central and the other sits on its own side. A missing low (high) mode
/// anchors the cut at the observed minimum (maximum); a unimodal band gets a
/// plain min-max stretch.
inline StretchLut fit_stretch(const Plane<float>& band) {
  StretchLut lut;
  lut.histogram = band_histogram(band);
  const BandHistogram& h = lut.histogram;
  if (band.empty() || h.constant()) {
    lut.constant = true;
    lut.low_cut = lut.high_cut = h.min;
    return lut;
  }
  const auto modes = detect_histogram_modes(h.counts).modes;

  std::optional<HistogramMode> low, high;
  if (modes.size() == 3) {
    low = modes[0];
    high = modes[2];
    lut.central_mode = modes[1].peak_bin;
  } else if (modes.size() == 2) {
    const bool first_central = modes[0].mass_fraction >= modes[1].mass_fraction;
    if (first_central) {
      high = modes[1];
      lut.central_mode = modes[0].peak_bin;
    } else {
      low = modes[0];
      lut.central_mode = modes[1].peak_bin;
    }
  } else if (modes.size() == 1) {
    lut.central_mode = modes[0].peak_bin;
  }

  lut.low_cut = h.min;
  lut.high_cut = h.max;
  if (low) {
    lut.low_mode = low->peak_bin;
    double cut = h.min;
    for (float v : band.data())
      if (h.bin_of(v) <= low->right_bin) cut = std::max(cut, static_cast<double>(v));
    lut.low_cut = cut;
  }
  if (high) {
    lut.high_mode = high->peak_bin;
    double cut = h.max;
    for (float v : band.data())
      if (h.bin_of(v) >= high->left_bin) cut = std::min(cut, static_cast<double>(v));
    lut.high_cut = cut;
  }
  if (!(lut.high_cut > lut.low_cut)) {
    lut.low_cut = h.min;
    lut.high_cut = h.max;
  }
  return lut;
}

inline Plane<float> apply_stretch(const Plane<float>& band, const StretchLut& lut) {
  Plane<float> out(band.width(), band.height());
  for (std::size_t i = 0; i < band.size(); ++i) out[i] = lut(band[i]);
  return out;
}

struct StretchResult {
  MultiSpectralImage image;
  std::vector<std::pair<BandRole, StretchLut>> luts;
};

/// Stretches the R, G and B bands of `img` onto bytes. The result holds only
/// those three bands, as DN.
inline StretchResult color_constancy_stretch(const MultiSpectralImage& img) {
  StretchResult res;
  res.image = MultiSpectralImage(img.width(), img.height(), img.metadata());
  res.image.metadata().calibrated = Units::DN;
  res.image.profile_name() = img.profile_name();
  for (BandRole role : {BandRole::R, BandRole::G, BandRole::B}) {
    const Band& b = img.band(role);
    StretchLut lut = fit_stretch(b.values);
    res.image.add_band(role, apply_stretch(b.values, lut));
    res.luts.emplace_back(role, std::move(lut));
  }
  return res;
}

}  // namespace cloudmask
