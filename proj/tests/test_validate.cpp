#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <random>
#include <set>

#include "cloudmask/validate.hpp"

using namespace cloudmask;

TEST(NormalQuantile, AgreesWithBoost) {
  const boost::math::normal_distribution<double> n01;
  for (double p = 1e-6; p < 1.0; p += p < 0.01 || p > 0.99 ? 1e-4 : 7.3e-3) {
    ASSERT_NEAR(normal_quantile(p), boost::math::quantile(n01, p), 1e-6) << p;
  }
  EXPECT_DOUBLE_EQ(normal_quantile(0.5), 0.0);
  EXPECT_THROW(normal_quantile(0.0), config_error);
  EXPECT_THROW(normal_quantile(1.0), config_error);
}

TEST(Chi2Quantile, KnownValues) {
  EXPECT_NEAR(chi2_quantile_1df(0.99), 6.63, 0.01);
  EXPECT_NEAR(chi2_quantile_1df(0.95), 1.95996 * 1.95996, 0.005);
  EXPECT_LT(chi2_quantile_1df(1e-9), 1e-12);
  const boost::math::chi_squared_distribution<double> chi(1.0);
  for (double c : {0.5, 0.8, 0.9, 0.975, 0.995, 0.999})
    EXPECT_NEAR(chi2_quantile_1df(c), boost::math::quantile(chi, c), 1e-5);
  EXPECT_THROW(chi2_quantile_1df(1.0), config_error);
}

TEST(SampleSize, ReproducesPublishedValues) {
  SamplingSpec s;
  EXPECT_DOUBLE_EQ(s.confidence(), 0.99);
  EXPECT_DOUBLE_EQ(s.chi2(), 6.63);
  EXPECT_EQ(required_sample_size(s), 2113u);
  s.half_width = 0.05;
  EXPECT_EQ(required_sample_size(s), 338u);
  s.target_accuracy = 1.0;
  EXPECT_EQ(required_sample_size(s), 0u);
}

TEST(SampleSize, Errors) {
  SamplingSpec s;
  s.half_width = 0.0;
  EXPECT_THROW(required_sample_size(s), config_error);
  s = {};
  s.alpha = 1.5;
  EXPECT_THROW(required_sample_size(s), config_error);
  s = {};
  s.classes = 0;
  EXPECT_THROW(required_sample_size(s), config_error);
}

TEST(SampleSize, MonotoneInHalfWidthAndPeakAtHalf) {
  SamplingSpec s;
  std::size_t prev = std::numeric_limits<std::size_t>::max();
  for (double d = 0.005; d < 0.3; d += 0.005) {
    s.half_width = d;
    const std::size_t n = required_sample_size(s);
    EXPECT_LE(n, prev);
    prev = n;
  }
  s.half_width = 0.02;
  s.target_accuracy = 0.5;
  const std::size_t peak = required_sample_size(s);
  for (double p = 0.05; p < 1.0; p += 0.05) {
    s.target_accuracy = p;
    EXPECT_LE(required_sample_size(s), peak);
  }
}

TEST(Sampling, ExactlyNPixelsTakesAll) {
  Plane<std::uint8_t> truth(4, 2, 0);
  truth(1, 0) = truth(1, 1) = truth(1, 2) = 1;
  const ReferenceSample s = sample_reference_units(truth, 3, 9);
  std::set<std::pair<std::size_t, std::size_t>> ones;
  for (const auto& u : s.units)
    if (u.cls == 1) ones.insert({u.row, u.col});
  EXPECT_EQ(ones, (std::set<std::pair<std::size_t, std::size_t>>{{1, 0}, {1, 1}, {1, 2}}));
  EXPECT_TRUE(s.exhausted.empty());
  EXPECT_EQ(s.units.size(), 6u);
}

TEST(Sampling, ShortClassFlagged) {
  Plane<std::uint8_t> truth(3, 3, 2);
  truth(0, 0) = 5;
  const ReferenceSample s = sample_reference_units(truth, 4, 1);
  EXPECT_EQ(s.exhausted, std::vector<std::uint32_t>{5});
  EXPECT_EQ(s.units.size(), 5u);
  EXPECT_THROW(sample_reference_units(Plane<std::uint8_t>(), 3, 1), config_error);
}

TEST(Sampling, Deterministic) {
  Plane<std::uint8_t> truth(30, 20);
  std::mt19937 rng(2);
  for (auto& v : truth.data()) v = static_cast<std::uint8_t>(rng() % 3);
  const ReferenceSample a = sample_reference_units(truth, 25, 77);
  const ReferenceSample b = sample_reference_units(truth, 25, 77);
  EXPECT_EQ(a.units, b.units);
  EXPECT_NE(a.units, sample_reference_units(truth, 25, 78).units);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& u : a.units) {
    EXPECT_EQ(truth(u.row, u.col), u.cls);
    EXPECT_TRUE(seen.insert({u.row, u.col}).second);
  }
}

TEST(Sampling, UniformFrequency) {
  Plane<std::uint8_t> truth(8, 5, 0);
  for (std::size_t c = 0; c < 8; ++c) truth(4, c) = 1;
  const std::size_t n = 6;
  std::vector<int> hits(truth.size(), 0);
  for (std::uint64_t seed = 0; seed < 1000; ++seed)
    for (const auto& u : sample_reference_units(truth, n, seed).units) ++hits[u.row * 8 + u.col];
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double big_n = truth[i] == 1 ? 8.0 : 32.0;
    const double p = n / big_n;
    const double sigma = std::sqrt(1000.0 * p * (1 - p));
    EXPECT_NEAR(hits[i], 1000.0 * p, 3 * sigma) << i;
  }
}

TEST(Confusion, TwoClassExample) {
  ConfusionMatrix cm({"cloud", "clear"});
  cm.add(0, 0, 40);
  cm.add(0, 1, 10);
  cm.add(1, 0, 5);
  cm.add(1, 1, 45);
  EXPECT_DOUBLE_EQ(*cm.overall_accuracy(), 0.85);
  EXPECT_NEAR(*cm.producers_accuracy(0), 40.0 / 45.0, 1e-12);
  EXPECT_DOUBLE_EQ(*cm.users_accuracy(0), 0.8);
  EXPECT_NEAR(*cm.omission_error(0), 5.0 / 45.0, 1e-12);
  EXPECT_NEAR(*cm.commission_error(0), 0.2, 1e-12);
  EXPECT_NEAR(*cm.producers_accuracy(1), 45.0 / 55.0, 1e-12);
  EXPECT_THROW(cm.add(2, 0), config_error);
}

TEST(Confusion, UndefinedDenominators) {
  ConfusionMatrix cm({"a", "b", "c"});
  EXPECT_FALSE(cm.overall_accuracy());
  cm.add(0, 0, 3);
  EXPECT_FALSE(cm.producers_accuracy(2));
  EXPECT_FALSE(cm.users_accuracy(1));
  EXPECT_FALSE(cm.commission_error(1));
  const std::string text = accuracy_report_text(cm);
  EXPECT_NE(text.find("undefined"), std::string::npos);
  EXPECT_NE(text.find("verdict: FAIL"), std::string::npos);
}

TEST(Confusion, PerfectAgreementAndDiagonalProperty) {
  std::mt19937 rng(5);
  for (int t = 0; t < 200; ++t) {
    ConfusionMatrix cm({"a", "b", "c"});
    bool diagonal = true;
    for (int k = 0; k < 6; ++k) {
      const std::size_t m = rng() % 3, r = rng() % 3;
      cm.add(m, r, 1 + rng() % 9);
      diagonal = diagonal && m == r;
    }
    const double oa = *cm.overall_accuracy();
    EXPECT_GE(oa, 0.0);
    EXPECT_LE(oa, 1.0);
    EXPECT_EQ(oa == 1.0, diagonal);
  }
  ConfusionMatrix id({"a", "b"});
  id.add(0, 0, 10);
  id.add(1, 1, 7);
  EXPECT_EQ(*id.users_accuracy(1), 1.0);
  EXPECT_TRUE(assess(id).pass());
}

TEST(Confusion, FromRasterAndSample) {
  Plane<std::uint8_t> mapped(3, 1, 0);
  mapped[2] = 1;
  const std::vector<ReferenceUnit> units{{0, 0, 0}, {0, 1, 1}, {0, 2, 1}};
  const ConfusionMatrix cm = confusion_matrix(mapped, units, {"x", "y"});
  EXPECT_EQ(cm(0, 1), 1u);
  EXPECT_EQ(cm(1, 1), 1u);
  EXPECT_THROW(confusion_matrix(mapped, {{1, 0, 0}}, {"x", "y"}), config_error);
  EXPECT_THROW(confusion_matrix(mapped, {{0, 0, 4}}, {"x", "y"}), config_error);
}

TEST(Targets, ToleranceBand) {
  ConfusionMatrix low({"a", "b"});
  low.add(0, 0, 82);
  low.add(0, 1, 18);
  EXPECT_FALSE(assess(low).overall_pass);

  ConfusionMatrix mid({"a", "b"});
  mid.add(0, 0, 84);
  mid.add(0, 1, 16);
  const AccuracyVerdict v = assess(mid);
  EXPECT_TRUE(v.overall_pass);  // 0.84 counts as 0.85 within 0.02
  EXPECT_FALSE(v.class_pass[1]);
  EXPECT_FALSE(v.pass());

  ConfusionMatrix ok({"a", "b"});
  ok.add(0, 0, 66);
  ok.add(1, 0, 34);
  ok.add(1, 1, 100);
  EXPECT_TRUE(assess(ok).class_pass[0]);  // producer's 0.66 counts as 0.70 within 0.05
  ConfusionMatrix bad({"a", "b"});
  bad.add(0, 0, 64);
  bad.add(1, 0, 36);
  bad.add(1, 1, 100);
  EXPECT_FALSE(assess(bad).class_pass[0]);
}

TEST(Report, CsvLayout) {
  ConfusionMatrix cm({"cloud", "clear"});
  cm.add(0, 0, 40);
  cm.add(0, 1, 10);
  cm.add(1, 0, 5);
  cm.add(1, 1, 45);
  const std::string csv = accuracy_report_csv(cm);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "class,producers,users,omission,commission");
  EXPECT_NE(csv.find("overall,0.85,,,"), std::string::npos);
  EXPECT_NE(csv.find("cloud,0.888889,0.8,0.111111,0.2"), std::string::npos);
}
