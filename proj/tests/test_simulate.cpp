#include <gtest/gtest.h>

#include "spikefluct/simulate.hpp"

using namespace spikefluct;

namespace {

const SpectralMeasure kDelta0 = SpectralMeasure::point_mass(0.0);

ModelSpec example_spec(double theta) {
  ModelSpec s;
  s.theta = theta;
  return s;
}

ModelSpec additive_spec(double theta) {
  ModelSpec s;
  s.polynomial = additive_polynomial();
  s.theta = theta;
  return s;
}

}  // namespace

TEST(Seeding, SubstreamsDistinctAndStable) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t m = 0; m < 4; ++m)
    for (std::uint64_t i = 0; i < 256; ++i) seen.insert(substream_seed(m, i));
  EXPECT_EQ(seen.size(), 4u * 256u);
  EXPECT_EQ(substream_seed(7, 3), substream_seed(7, 3));
  EXPECT_EQ(splitmix64(0), 0xe220a8397b1dcdafULL);
}

TEST(Wigner, RejectsSmallN) {
  WignerSpec w;
  w.n = 8;
  EXPECT_THROW(sample_wigner(w), Error);
}

TEST(Wigner, EntryStatistics) {
  for (const auto& law : {EntryLaw::gue(), EntryLaw::uniform()}) {
    WignerSpec spec{1000, law, 11, 0};
    const auto h = sample_wigner(spec);
    const auto& w = h.matrix();
    const double n = 1000.0;
    double diag_mean = 0.0, off_mean_re = 0.0, off_abs2 = 0.0, off_m4 = 0.0;
    std::size_t off = 0;
    for (std::size_t i = 0; i < 1000; ++i) {
      diag_mean += w(i, i).real();
      EXPECT_EQ(w(i, i).imag(), 0.0);
      for (std::size_t j = i + 1; j < 1000; ++j) {
        off_mean_re += w(i, j).real();
        const double a2 = std::norm(w(i, j));
        off_abs2 += a2;
        off_m4 += a2 * a2;
        ++off;
      }
    }
    diag_mean /= n;
    off_mean_re /= off;
    off_abs2 /= off;
    off_m4 /= off;
    EXPECT_LT(std::abs(diag_mean), 4.0 / std::sqrt(n)) << law.name();
    EXPECT_LT(std::abs(off_mean_re), 4.0 / std::sqrt(off)) << law.name();
    EXPECT_NEAR(off_abs2, 1.0, 0.01) << law.name();
    EXPECT_NEAR(off_m4, law.offdiag_fourth_moment(), 0.03) << law.name();
    const auto eig = hermitian_eigenvalues(h);
    const double norm = std::max(-eig.front(), eig.back()) / std::sqrt(n);
    EXPECT_GT(norm, 1.9);
    EXPECT_LT(norm, 2.2);
  }
}

TEST(Wigner, Deterministic) {
  WignerSpec a{32, EntryLaw::uniform(), 5, 2};
  EXPECT_EQ((sample_wigner(a).matrix() - sample_wigner(a).matrix()).max_abs(), 0.0);
  WignerSpec b = a;
  b.stream = 3;
  EXPECT_GT((sample_wigner(a).matrix() - sample_wigner(b).matrix()).max_abs(), 0.1);
}

TEST(Tail, QuantileRule) {
  ModelSpec s = additive_spec(3.0);
  s.mu_a = SpectralMeasure::uniform(-1.0, 1.0);
  const auto d = s.tail(5);
  ASSERT_EQ(d.size(), 4u);
  const std::vector<double> want{-0.75, -0.25, 0.25, 0.75};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(d[i], want[i], 1e-2);
  EXPECT_TRUE(std::is_sorted(d.begin(), d.end()));
}

TEST(Tail, SampleRuleDeterministic) {
  ModelSpec s = additive_spec(3.0);
  s.mu_a = SpectralMeasure::uniform(-1.0, 1.0);
  s.tail_rule = TailRule::sample;
  EXPECT_EQ(s.tail(50, 1), s.tail(50, 1));
  EXPECT_NE(s.tail(50, 1), s.tail(50, 2));
  for (double x : s.tail(200, 3)) {
    EXPECT_GE(x, -1.0);
    EXPECT_LE(x, 1.0);
  }
}

TEST(Tail, ExplicitRule) {
  ModelSpec s = additive_spec(3.0);
  s.tail_rule = TailRule::explicit_values;
  s.explicit_tail = {0.1, 0.2};
  EXPECT_EQ(s.tail(3), s.explicit_tail);
  EXPECT_THROW(s.tail(4), Error);
  s.explicit_tail = {0.1, 3.5};
  EXPECT_THROW(s.tail(3), Error);
  EXPECT_STREQ(to_string(TailRule::sample), "sample");
}

TEST(BuildModel, SecondGeneratorIsDiagonal) {
  ModelSpec s;
  s.polynomial = NCPolynomial(2, {Monomial{1.0, {1}}});
  s.theta = 2.0;
  const std::vector<double> tail{0.5, -0.5, 0.0, 0.25, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  const auto m = build_model(sample_wigner(WignerSpec{16, EntryLaw::gue(), 1, 0}), s, tail);
  EXPECT_EQ(m.matrix()(0, 0), cplx{2.0});
  for (std::size_t i = 1; i < 16; ++i) EXPECT_EQ(m.matrix()(i, i), cplx{tail[i - 1]});
  EXPECT_EQ(m.matrix()(0, 1), cplx{0.0});
}

TEST(BuildModel, ExampleDirectFormula) {
  const std::size_t n = 20;
  const auto w = sample_wigner(WignerSpec{n, EntryLaw::uniform(), 3, 1});
  const ModelSpec s = example_spec(2.0);
  const auto tail = s.tail(n);
  const auto m = build_model(w, s, tail);
  std::vector<double> d{2.0};
  d.insert(d.end(), tail.begin(), tail.end());
  const auto x = w.matrix() * cplx{1.0 / std::sqrt(double(n))};
  const auto a = ComplexMatrix::diagonal(std::span<const double>(d));
  const auto want = a * x + x * a + x * x;
  EXPECT_LT((m.matrix() - want).max_abs(), 1e-12);
}

TEST(BuildModel, Additive) {
  const std::size_t n = 16;
  const auto w = sample_wigner(WignerSpec{n, EntryLaw::gue(), 3, 1});
  std::vector<double> zeros(n - 1, 0.0);
  const auto m = build_model(w, additive_spec(1.0), zeros);
  auto want = w.matrix() * cplx{1.0 / 4.0};
  want(0, 0) += 1.0;
  EXPECT_LT((m.matrix() - want).max_abs(), 1e-14);
}

TEST(BuildModel, SizeMismatch) {
  const auto w = sample_wigner(WignerSpec{16, EntryLaw::gue(), 3, 1});
  const std::vector<double> tail(3, 0.0);
  EXPECT_THROW(build_model(w, example_spec(2.0), tail), Error);
}

TEST(ExtractOutlier, Counts) {
  const std::vector<double> e{-1.0, 0.0, 1.9, 2.05, 3.0};
  auto r = extract_outlier(e, 2.0, 0.2);
  EXPECT_EQ(r.count, 2u);
  EXPECT_EQ(*r.lambda, 2.05);
  r = extract_outlier(e, 3.0, 0.1);
  EXPECT_EQ(r.count, 1u);
  EXPECT_EQ(*r.lambda, 3.0);
  r = extract_outlier(e, 5.0, 0.1);
  EXPECT_EQ(r.count, 0u);
  EXPECT_FALSE(r.lambda.has_value());
}

TEST(ExtractOutlier, SingleDrawNearPrediction) {
  const auto cf = example_closed_forms(2.0);
  const std::size_t n = 500;
  const ModelSpec s = example_spec(2.0);
  const auto m = build_model(sample_wigner(WignerSpec{n, EntryLaw::gue(), 21, 0}), s, s.tail(n));
  const auto eig = hermitian_eigenvalues(m);
  // Standard deviations of the outliers at this N: about 0.063 below, 0.105 above.
  const auto minus = extract_outlier(eig, cf.minus.rho, 0.45);
  ASSERT_EQ(minus.count, 1u);
  EXPECT_LT(std::abs(*minus.lambda - cf.minus.rho), 0.25);
  EXPECT_EQ(*minus.lambda, eig.front());
  EXPECT_LT(std::abs(eig.back() - cf.plus->rho), 0.42);
  EXPECT_GT(eig[n - 2], -0.05);
  EXPECT_LT(eig[n - 2], 4.1);
}

TEST(RunTrials, ZeroTrials) {
  const auto run = run_trials(example_spec(2.0), WignerSpec{16, EntryLaw::gue(), 1, 0}, 0,
                              example_spec(2.0).tail(16), 4.2, 4.2, 1.0, 0.1);
  EXPECT_TRUE(run.samples.empty());
  EXPECT_EQ(run.excluded_fraction(), 0.0);
}

TEST(RunTrials, RejectsBadWindow) {
  EXPECT_THROW(run_trials(example_spec(2.0), WignerSpec{16}, 1, example_spec(2.0).tail(16), 4.2, 4.2, 1.0, 0.0),
               Error);
}

TEST(RunTrials, ThreadCountIndependent) {
  const auto cf = example_closed_forms(2.0);
  const ModelSpec s = example_spec(2.0);
  const WignerSpec w{64, EntryLaw::uniform(), 9, 0};
  const auto tail = s.tail(64);
  TrialOptions one{1, 1.0}, four{4, 1.0};
  const auto a = run_trials(s, w, 24, tail, cf.minus.rho, cf.minus.rho, cf.minus.c1, 0.45, one);
  const auto b = run_trials(s, w, 24, tail, cf.minus.rho, cf.minus.rho, cf.minus.c1, 0.45, four);
  const auto c = run_trials(s, w, 24, tail, cf.minus.rho, cf.minus.rho, cf.minus.c1, 0.45, one);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_EQ(a.samples, c.samples);
  EXPECT_EQ(a.excluded, b.excluded);
  for (std::size_t t = 0; t < 24; ++t) EXPECT_EQ(a.results[t].stream, t);
}

TEST(RunTrials, TooManyExclusionsFail) {
  const ModelSpec s = example_spec(2.0);
  // A window far from every eigenvalue excludes all trials.
  try {
    run_trials(s, WignerSpec{32, EntryLaw::gue(), 1, 0}, 5, s.tail(32), 40.0, 40.0, 1.0, 0.1);
    FAIL() << "expected a throw";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::simulation);
  }
}

TEST(RunTrials, CenteredSamples) {
  const ModelSpec s = additive_spec(2.0);
  const std::size_t n = 200, trials = 200;
  std::vector<double> zeros(n - 1, 0.0);
  const auto run = run_trials(s, WignerSpec{n, EntryLaw::gue(), 17, 0}, trials, zeros, 2.5, 2.5, 4.0 / 3.0, 0.25,
                              TrialOptions{4, 0.2});
  ASSERT_GT(run.samples.size(), 180u);
  double mean = 0.0, var = 0.0;
  for (double x : run.samples) mean += x;
  mean /= run.samples.size();
  for (double x : run.samples) var += (x - mean) * (x - mean);
  var /= run.samples.size() - 1;
  EXPECT_LT(std::abs(mean), 4.0 * std::sqrt(var / run.samples.size()));
  // Limit variance C2^2 + v = 4/3.
  EXPECT_GT(var, 1.0);
  EXPECT_LT(var, 1.7);
}

TEST(RunTrials, ExclusionsShrinkWithN) {
  const auto cf = example_closed_forms(2.0);
  const ModelSpec s = example_spec(2.0);
  double previous = 1.0;
  for (std::size_t n : {100u, 400u}) {
    const auto run = run_trials(s, WignerSpec{n, EntryLaw::gue(), 5, 0}, 100, s.tail(n), cf.minus.rho, cf.minus.rho,
                                cf.minus.c1, 0.2, TrialOptions{4, 1.0});
    EXPECT_LE(run.excluded_fraction(), previous);
    previous = run.excluded_fraction();
  }
  EXPECT_LT(previous, 0.05);
}

TEST(Ks, SingleSampleAtMedian) {
  EXPECT_DOUBLE_EQ(ks_statistic({0.0}, normal_cdf), 0.5);
}

TEST(Ks, EmptyThrows) { EXPECT_THROW(ks_statistic({}, normal_cdf), Error); }

TEST(Ks, ExactQuantilesAreClose) {
  // Midpoint quantiles of the standard normal give sup distance 1/(2n).
  const std::size_t n = 400;
  std::vector<double> x;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = (i + 0.5) / n;
    double lo = -10.0, hi = 10.0;
    for (int k = 0; k < 200; ++k) {
      const double mid = 0.5 * (lo + hi);
      (normal_cdf(mid) < p ? lo : hi) = mid;
    }
    x.push_back(0.5 * (lo + hi));
  }
  EXPECT_NEAR(ks_statistic(x, normal_cdf), 0.5 / n, 1e-9);
}

TEST(Ks, SamplesFromLimitLawPass) {
  const auto r = example_closed_forms(2.0).minus;
  const LimitLaw law(r.c1, r.c2, r.v, EntryLaw::uniform());
  std::mt19937_64 rng(8);
  std::vector<double> x(2000);
  for (auto& v : x) v = law.sample(rng);
  // 1.63 / sqrt(n): the 1% critical value.
  EXPECT_LT(ks_statistic(x, law), 1.63 / std::sqrt(2000.0));
}

TEST(Ks, DetectsShift) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.5, 1.0);
  std::vector<double> x(2000);
  for (auto& v : x) v = g(rng);
  EXPECT_GT(ks_statistic(x, normal_cdf), 0.1);
}

TEST(GlobalLaw, DiagonalOnlyModelIsExact) {
  ModelSpec s;
  s.polynomial = NCPolynomial(2, {Monomial{1.0, {1}}});
  s.theta = 3.0;
  s.mu_a = SpectralMeasure::uniform(-1.0, 1.0);
  const auto l = linearize(s.polynomial);
  EXPECT_LT(global_law_check(s, l, 500, 1), 1e-2);
}

TEST(GlobalLaw, ExampleAndAdditive) {
  const ModelSpec ex = example_spec(2.0);
  EXPECT_LT(global_law_check(ex, example_linearization(), 1000, 1), 0.05);
  ModelSpec add = additive_spec(3.0);
  add.mu_a = SpectralMeasure::uniform(-1.0, 1.0);
  EXPECT_LT(global_law_check(add, linearize(add.polynomial), 1000, 2), 0.05);
}

TEST(DefaultWindow, HalfDistanceCapped) {
  SupportScan scan;
  scan.support_intervals = {Interval{0.0, 4.0}};
  EXPECT_NEAR(default_window(4.2, scan), 0.1, 1e-14);
  EXPECT_DOUBLE_EQ(default_window(-3.0, scan), 0.5);
  EXPECT_THROW(default_window(1.0, scan), Error);
  EXPECT_THROW(default_window(1.0, SupportScan{}), Error);
}
