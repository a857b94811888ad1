// Accuracy assessment: reference sample size, class-stratified random
// sampling of reference pixels, confusion matrix and accuracy metrics.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cloudmask/raster.hpp"

namespace cloudmask {

/// Standard normal quantile by Acklam's rational approximation with one
/// Halley refinement step; absolute error well below 1e-9 on (0,1).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw config_error("normal quantile needs p in (0,1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00, 2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double lo = 0.02425, hi = 1.0 - lo;
  double x;
  if (p < lo) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= hi) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * 3.14159265358979323846) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

/// Chi-square quantile with one degree of freedom at level conf.
inline double chi2_quantile_1df(double conf) {
  if (!(conf > 0.0 && conf < 1.0)) throw config_error("confidence must lie in (0,1)");
  const double z = normal_quantile((1.0 + conf) / 2.0);
  return z * z;
}

struct SamplingSpec {
  double target_accuracy = 0.85;  // p
  double half_width = 0.02;       // delta
  double alpha = 0.03;
  std::size_t classes = 3;

  void validate() const {
    if (!(target_accuracy > 0.0 && target_accuracy <= 1.0))
      throw config_error("target accuracy must lie in (0,1]");
    if (!(half_width > 0.0 && std::isfinite(half_width))) throw config_error("half-width must be > 0");
    if (!(alpha > 0.0 && alpha < 1.0)) throw config_error("alpha must lie in (0,1)");
    if (classes < 1) throw config_error("class count must be >= 1");
  }
  double confidence() const { return 1.0 - alpha / static_cast<double>(classes); }
  /// Quantile as read from a two-decimal table (0.99 -> 6.63).
  double chi2() const { return std::round(chi2_quantile_1df(confidence()) * 100.0) / 100.0; }
};

/// chi2 * p(1-p) / delta^2, rounded half up.
inline std::size_t required_sample_size(const SamplingSpec& s) {
  s.validate();
  const double p = s.target_accuracy;
  const double n = s.chi2() * p * (1.0 - p) / (s.half_width * s.half_width);
  return static_cast<std::size_t>(std::floor(n + 0.5));
}

// ---------------------------------------------------------------------------
// Sampling

struct ReferenceUnit {
  std::size_t row = 0;
  std::size_t col = 0;
  std::uint32_t cls = 0;

  bool operator==(const ReferenceUnit&) const = default;
};

struct ReferenceSample {
  std::vector<ReferenceUnit> units;
  /// Classes with fewer than n pixels, for which every pixel was taken.
  std::vector<std::uint32_t> exhausted;
};

namespace detail {

/// Uniform integer in [0, n) without modulo bias.
inline std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do x = rng();
  while (x >= limit);
  return x % n;
}

}  // namespace detail

/// Draws n pixels per class uniformly without replacement (partial
/// Fisher-Yates over each class's pixels in raster order). Classes in
/// ascending label order; units within a class in draw order.
template <typename T>
ReferenceSample sample_reference_units(const Plane<T>& truth, std::size_t n, std::uint64_t seed) {
  if (truth.empty()) throw config_error("truth mask is empty");
  std::map<std::uint32_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < truth.size(); ++i)
    by_class[static_cast<std::uint32_t>(truth[i])].push_back(i);
  std::mt19937_64 rng(seed);
  ReferenceSample out;
  for (auto& [cls, idx] : by_class) {
    std::size_t take = n;
    if (idx.size() < n) {
      take = idx.size();
      out.exhausted.push_back(cls);
    }
    for (std::size_t k = 0; k < take; ++k) {
      const std::size_t j = k + detail::bounded(rng, idx.size() - k);
      std::swap(idx[k], idx[j]);
      out.units.push_back({idx[k] / truth.width(), idx[k] % truth.width(), cls});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Confusion matrix

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::vector<std::string> labels)
      : labels_(std::move(labels)), counts_(labels_.size() * labels_.size(), 0) {
    if (labels_.empty()) throw config_error("confusion matrix needs at least one class");
  }

  std::size_t classes() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }

  void add(std::size_t mapped, std::size_t reference, std::uint64_t count = 1) {
    if (mapped >= classes() || reference >= classes()) throw config_error("class label outside legend");
    counts_[mapped * classes() + reference] += count;
  }
  std::uint64_t operator()(std::size_t mapped, std::size_t reference) const {
    return counts_.at(mapped * classes() + reference);
  }
  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts_) t += c;
    return t;
  }
  std::uint64_t row_sum(std::size_t m) const {
    std::uint64_t t = 0;
    for (std::size_t r = 0; r < classes(); ++r) t += (*this)(m, r);
    return t;
  }
  std::uint64_t col_sum(std::size_t r) const {
    std::uint64_t t = 0;
    for (std::size_t m = 0; m < classes(); ++m) t += (*this)(m, r);
    return t;
  }

  std::optional<double> overall_accuracy() const {
    const auto t = total();
    if (t == 0) return std::nullopt;
    std::uint64_t d = 0;
    for (std::size_t c = 0; c < classes(); ++c) d += (*this)(c, c);
    return static_cast<double>(d) / static_cast<double>(t);
  }
  std::optional<double> producers_accuracy(std::size_t c) const {
    const auto s = col_sum(c);
    if (s == 0) return std::nullopt;
    return static_cast<double>((*this)(c, c)) / static_cast<double>(s);
  }
  std::optional<double> users_accuracy(std::size_t c) const {
    const auto s = row_sum(c);
    if (s == 0) return std::nullopt;
    return static_cast<double>((*this)(c, c)) / static_cast<double>(s);
  }
  std::optional<double> omission_error(std::size_t c) const {
    auto p = producers_accuracy(c);
    return p ? std::optional<double>(1.0 - *p) : std::nullopt;
  }
  std::optional<double> commission_error(std::size_t c) const {
    auto u = users_accuracy(c);
    return u ? std::optional<double>(1.0 - *u) : std::nullopt;
  }

 private:
  std::vector<std::string> labels_;
  std::vector<std::uint64_t> counts_;
};

/// Cross-tabulates the mapped class at each reference unit against the
/// unit's reference class.
template <typename T>
ConfusionMatrix confusion_matrix(const Plane<T>& mapped, const std::vector<ReferenceUnit>& sample,
                                 std::vector<std::string> labels) {
  ConfusionMatrix cm(std::move(labels));
  for (const ReferenceUnit& u : sample) {
    if (u.row >= mapped.height() || u.col >= mapped.width())
      throw config_error("reference unit outside the mapped raster");
    cm.add(static_cast<std::size_t>(mapped(u.row, u.col)), u.cls);
  }
  return cm;
}

struct AccuracyTargets {
  double overall = 0.85;
  double overall_tolerance = 0.02;
  double per_class = 0.70;
  double per_class_tolerance = 0.05;
};

struct AccuracyVerdict {
  bool overall_pass = false;
  std::vector<bool> class_pass;  // both user's and producer's within target
  bool pass() const {
    return overall_pass && std::all_of(class_pass.begin(), class_pass.end(), [](bool b) { return b; });
  }
};

/// A target "t +/- d" is met when the estimate reaches t - d. Undefined
/// accuracies fail.
inline AccuracyVerdict assess(const ConfusionMatrix& cm, const AccuracyTargets& t = {}) {
  AccuracyVerdict v;
  const auto oa = cm.overall_accuracy();
  v.overall_pass = oa && *oa >= t.overall - t.overall_tolerance;
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    const auto u = cm.users_accuracy(c), p = cm.producers_accuracy(c);
    const double bar = t.per_class - t.per_class_tolerance;
    v.class_pass.push_back(u && p && *u >= bar && *p >= bar);
  }
  return v;
}

namespace detail {
inline std::string fmt_opt(const std::optional<double>& v) {
  return v ? format_double(std::round(*v * 1e6) / 1e6) : std::string("undefined");
}
}  // namespace detail

inline std::string accuracy_report_text(const ConfusionMatrix& cm, const AccuracyTargets& t = {}) {
  const AccuracyVerdict v = assess(cm, t);
  std::ostringstream os;
  os << "confusion matrix (rows = mapped, columns = reference)\n";
  os << "mapped\\reference";
  for (const auto& l : cm.labels()) os << "\t" << l;
  os << "\ttotal\n";
  for (std::size_t m = 0; m < cm.classes(); ++m) {
    os << cm.labels()[m];
    for (std::size_t r = 0; r < cm.classes(); ++r) os << "\t" << cm(m, r);
    os << "\t" << cm.row_sum(m) << "\n";
  }
  os << "total";
  for (std::size_t r = 0; r < cm.classes(); ++r) os << "\t" << cm.col_sum(r);
  os << "\t" << cm.total() << "\n\n";
  os << "overall accuracy: " << detail::fmt_opt(cm.overall_accuracy()) << " (target "
     << detail::format_double(t.overall) << " +/- " << detail::format_double(t.overall_tolerance)
     << ") " << (v.overall_pass ? "PASS" : "FAIL") << "\n";
  for (std::size_t c = 0; c < cm.classes(); ++c)
    os << cm.labels()[c] << ": producer's " << detail::fmt_opt(cm.producers_accuracy(c))
       << ", user's " << detail::fmt_opt(cm.users_accuracy(c)) << ", omission "
       << detail::fmt_opt(cm.omission_error(c)) << ", commission "
       << detail::fmt_opt(cm.commission_error(c)) << " (target "
       << detail::format_double(t.per_class) << " +/- " << detail::format_double(t.per_class_tolerance)
       << ") " << (v.class_pass[c] ? "PASS" : "FAIL") << "\n";
  os << "verdict: " << (v.pass() ? "PASS" : "FAIL") << "\n";
  return os.str();
}

/// class,producers,users,omission,commission with a leading overall row.
inline std::string accuracy_report_csv(const ConfusionMatrix& cm) {
  std::ostringstream os;
  os << "class,producers,users,omission,commission\n";
  os << "overall," << detail::fmt_opt(cm.overall_accuracy()) << ",,,\n";
  for (std::size_t c = 0; c < cm.classes(); ++c)
    os << cm.labels()[c] << "," << detail::fmt_opt(cm.producers_accuracy(c)) << ","
       << detail::fmt_opt(cm.users_accuracy(c)) << "," << detail::fmt_opt(cm.omission_error(c)) << ","
       << detail::fmt_opt(cm.commission_error(c)) << "\n";
  return os.str();
}

}  // namespace cloudmask
