#include <gtest/gtest.h>

#include <numbers>

#include "spikefluct/dyson.hpp"
#include "spikefluct/fluct.hpp"
#include "spikefluct/scalar.hpp"
#include "spikefluct/surrogate.hpp"
#include "support.hpp"

using namespace spikefluct;
using namespace testing_support;

namespace {

const SpectralMeasure kDelta0 = SpectralMeasure::point_mass(0.0);

double min_eig(const ComplexMatrix& h) { return hermitian_eigenvalues(HermitianMatrix::symmetrized(h)).front(); }

ComplexMatrix recompute_g(const ComplexMatrix& omega, const Linearization& l, const SpectralMeasure& mu) {
  ComplexMatrix g(l.m);
  for (const auto& a : mu.atoms()) g += inverse(omega - l.beta() * cplx{a.t}) * cplx{a.w};
  return g;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected a throw";
  return ErrorKind::verification;
}

}  // namespace

// ---------------------------------------------------------------- measures

TEST(Measure, AtomsNormalizeAndMerge) {
  const auto mu = SpectralMeasure::from_atoms({{1.0, 2.0}, {0.0, 1.0}, {1.0, 1.0}});
  ASSERT_EQ(mu.atoms().size(), 2u);
  EXPECT_DOUBLE_EQ(mu.atoms()[0].w, 0.25);
  EXPECT_DOUBLE_EQ(mu.atoms()[1].w, 0.75);
  EXPECT_THROW(SpectralMeasure::from_atoms({{0.0, -1.0}}), Error);
  EXPECT_THROW(SpectralMeasure::from_atoms({}), Error);
}

TEST(Measure, EmpiricalEqualWeights) {
  const std::vector<double> d{0.0, 1.0, 3.0, 7.0};
  const auto mu = SpectralMeasure::empirical(d);
  double total = 0.0;
  for (const auto& a : mu.atoms()) {
    EXPECT_DOUBLE_EQ(a.w, 0.25);
    total += a.w;
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Measure, QuadratureWeightsAndMoments) {
  for (const auto& mu : {SpectralMeasure::semicircle(), SpectralMeasure::marchenko_pastur(),
                         SpectralMeasure::uniform(-1.0, 2.0)}) {
    double w = 0.0;
    for (const auto& a : mu.atoms()) w += a.w;
    EXPECT_NEAR(w, 1.0, 1e-12);
    EXPECT_EQ(mu.nodes(), SpectralMeasure::kDefaultNodes);
  }
  // Second moments: semicircle 1, MP(1) second moment 2, uniform mean 1/2.
  EXPECT_NEAR(SpectralMeasure::semicircle().integrate([](double t) { return t * t; }), 1.0, 1e-6);
  EXPECT_NEAR(SpectralMeasure::marchenko_pastur().integrate([](double t) { return t * t; }), 2.0, 1e-6);
  EXPECT_NEAR(SpectralMeasure::uniform(-1.0, 2.0).mean(), 0.5, 1e-12);
}

TEST(Measure, CdfQuantileRoundTrip) {
  const auto mu = SpectralMeasure::semicircle();
  for (double u : {0.05, 0.3, 0.5, 0.77, 0.95}) EXPECT_NEAR(mu.cdf(mu.quantile(u)), u, 1e-6);
  EXPECT_NEAR(mu.quantile(0.5), 0.0, 1e-6);
  EXPECT_NEAR(SpectralMeasure::uniform(0.0, 4.0).quantile(0.25), 1.0, 1e-9);
}

TEST(Measure, SemicircleTransformMatchesClosedForm) {
  const auto mu = SpectralMeasure::semicircle();
  for (cplx z : {cplx{3.0, 0.0}, cplx{0.5, 1.0}, cplx{-2.5, 0.1}})
    EXPECT_LT(std::abs(cauchy_transform(mu, z) - semicircle_g(z)), 1e-6);
}

// ---------------------------------------------------------- scalar transforms

TEST(SemicircleG, BoundaryValue) { EXPECT_NEAR(std::abs(semicircle_g(cplx{2.0}) - 1.0), 0.0, 1e-12); }

TEST(SemicircleG, SpikeLocation) {
  // g_sc(theta + 1/theta) = 1/theta.
  EXPECT_NEAR(semicircle_g(cplx{2.5}).real(), 0.5, 1e-14);
  EXPECT_NEAR(semicircle_g(cplx{-2.5}).real(), -0.5, 1e-14);
}

TEST(SemicircleG, ImaginaryAxis) {
  const cplx g = semicircle_g(cplx{0.0, 3.0});
  const double want = -(std::sqrt(13.0) - 3.0) / 2.0;
  EXPECT_NEAR(g.real(), 0.0, 1e-14);
  EXPECT_NEAR(g.imag(), want, 1e-12);
  EXPECT_NEAR(g.imag(), -0.302776, 1e-6);
}

TEST(SemicircleG, HerglotzAndQuadratic) {
  for (int i = 0; i < 200; ++i) {
    const cplx z{-5.0 + 0.05 * i, 0.01 + 0.02 * (i % 7)};
    const cplx g = semicircle_g(z);
    EXPECT_LT(g.imag(), 0.0);
    EXPECT_LT(std::abs(g * g - z * g + 1.0), 1e-12);
  }
}

TEST(SemicircleG, RejectsSupport) { EXPECT_THROW(semicircle_g(cplx{1.0}), Error); }

TEST(MpG, NegativeAxis) { EXPECT_NEAR(mp_g(cplx{-1.0}).real(), (1.0 - std::sqrt(5.0)) / 2.0, 1e-14); }

TEST(MpG, SpikeRoot) {
  const auto cf = example_closed_forms(2.0);
  EXPECT_NEAR(mp_g(cplx{cf.plus->rho}).real(), 0.3903882, 1e-7);
  EXPECT_NEAR(mp_g(cplx{cf.plus->rho}).real(), cf.plus->g, 1e-12);
}

TEST(MpG, QuadraticResidualOffSupport) {
  for (int i = 0; i < 100; ++i) {
    const cplx z = i < 50 ? cplx{-5.0 + 0.099 * i} : cplx{-2.0 + 0.12 * (i - 50), 0.3};
    if (z.imag() == 0.0 && z.real() >= 0.0) continue;
    const cplx g = mp_g(z);
    EXPECT_LT(std::abs(z * g * g - z * g + 1.0), 1e-12) << z;
  }
  for (int i = 0; i < 20; ++i) {
    const cplx z{4.05 + 0.2 * i};
    const cplx g = mp_g(z);
    EXPECT_LT(std::abs(z * g * g - z * g + 1.0), 1e-12);
    EXPECT_GT(g.real(), 0.0);
    EXPECT_LT(g.real(), 1.0 / z.real() * 2.0);
  }
}

TEST(MpG, RejectsSupportAndZero) {
  EXPECT_THROW(mp_g(cplx{2.0}), Error);
  EXPECT_THROW(mp_g(cplx{0.0}), Error);
}

TEST(MpG, DerivativeMatchesClosedForm) {
  for (double theta : {0.5, 1.0, 2.0, 3.0}) {
    const auto cf = example_closed_forms(theta);
    std::vector<ExampleRoot> roots{cf.minus};
    if (cf.plus) roots.push_back(*cf.plus);
    for (const auto& r : roots) {
      // Five-point stencil, step scaled to the distance from the support [0, 4].
      const double dist = r.rho < 0.0 ? -r.rho : r.rho - 4.0;
      const double h = 1e-3 * dist;
      const auto g = [](double x) { return mp_g(cplx{x}).real(); };
      const double num = (-g(r.rho + 2 * h) + 8 * g(r.rho + h) - 8 * g(r.rho - h) + g(r.rho - 2 * h)) / (12.0 * h);
      EXPECT_NEAR(num, r.g_prime, 1e-8 * std::max(1.0, std::abs(r.g_prime)));
    }
  }
}

// ------------------------------------------------------- scalar subordination

TEST(ScalarSubordination, PointMassIsIdentity) {
  const auto mu = SpectralMeasure::semicircle();
  const cplx z{0.7, 0.4};
  const auto s = scalar_subordination(mu, kDelta0, z);
  EXPECT_LT(std::abs(s.omega1 - z), 1e-10);
  EXPECT_LT(std::abs(s.g - cauchy_transform(mu, z)), 1e-12);
}

TEST(ScalarSubordination, SemicircleSquared) {
  const auto mu = SpectralMeasure::semicircle();
  const cplx z{4.0, 1.0};
  const auto s = scalar_subordination(mu, mu, z);
  const cplx want = semicircle_g(z / std::numbers::sqrt2) / std::numbers::sqrt2;
  EXPECT_LT(std::abs(s.g - want), 1e-6);
  EXPECT_LT(std::abs(s.omega1 + s.omega2 - z - 1.0 / s.g), 1e-10);
}

TEST(ScalarSubordination, MatchesMatrixSolverAdditive) {
  const auto l = linearize(additive_polynomial());
  for (const auto& nu : {SpectralMeasure::uniform(-1.0, 1.0), SpectralMeasure::from_atoms({{-1.0, 1.0}, {2.0, 1.0}})}) {
    for (cplx z : {cplx{0.3, 0.5}, cplx{3.0, 0.2}, cplx{-2.0, 1.0}}) {
      const auto s = scalar_subordination(SpectralMeasure::semicircle(), nu, z);
      const auto d = dyson_solve(l, nu, ComplexMatrix{{z}});
      EXPECT_LT(std::abs(s.g - d.G(0, 0)), 1e-9) << z;
    }
  }
}

TEST(ScalarSubordination, RejectsLowerHalfPlane) {
  EXPECT_THROW(scalar_subordination(kDelta0, kDelta0, cplx{1.0, -1.0}), Error);
}

// ----------------------------------------------------------------- dyson

TEST(Dyson, ZeroAlphaIsDirectIntegral) {
  Linearization l;
  l.m = 2;
  l.gamma = ComplexMatrix{{0, 1}, {1, 0}};
  l.coeffs = {ComplexMatrix(2), ComplexMatrix{{1, 0}, {0, -1}}};
  const auto mu = SpectralMeasure::from_atoms({{-1.0, 1.0}, {0.5, 3.0}});
  const ComplexMatrix b{{cplx{0.2, 1.0}, 0.3}, {0.3, cplx{-1.0, 0.5}}};
  const auto s = dyson_solve(l, mu, b);
  EXPECT_LT((s.omega - b).max_abs(), 1e-14);
  EXPECT_LT((s.G - recompute_g(b, l, mu)).max_abs(), 1e-14);
}

TEST(Dyson, ScalarSemicircle) {
  const auto l = linearize(additive_polynomial());
  for (cplx z : {cplx{0.0, 1.0}, cplx{1.5, 0.1}, cplx{3.0, 2.0}}) {
    const auto s = dyson_solve(l, kDelta0, ComplexMatrix{{z}});
    EXPECT_LT(std::abs(s.G(0, 0) - semicircle_g(z)), 1e-11);
    EXPECT_LT(std::abs(s.omega(0, 0) - (z - semicircle_g(z))), 1e-11);
  }
}

TEST(Dyson, ExampleOmegaMatchesPrintedBlocks) {
  const auto l = example_linearization();
  const double t = 6.0;
  const double g = mp_g(cplx{t}).real();
  const double tg = t * g;
  const ComplexMatrix want{{1.0 / g, 0, 0}, {0, 1.0 / tg - 1.0, 1.0 / (2.0 * tg) + 0.5},
                           {0, 1.0 / (2.0 * tg) + 0.5, 1.0 / (4.0 * tg) - 0.25}};
  const auto s = dyson_continue_real(l, kDelta0, t);
  EXPECT_LT((s.omega - want).max_abs(), 1e-8);
  EXPECT_NEAR(s.omega(0, 0).real(), 4.732051, 1e-6);
}

TEST(Dyson, RejectsRealB) {
  const auto l = example_linearization();
  EXPECT_EQ(kind_of([&] { dyson_solve(l, kDelta0, ComplexMatrix::identity(3)); }), ErrorKind::invalid_input);
}

TEST(Dyson, RejectsWrongShape) {
  EXPECT_THROW(dyson_solve(example_linearization(), kDelta0, ComplexMatrix::identity(2) * cplx{0, 1}), Error);
}

TEST(Dyson, ConfigValidation) {
  DysonConfig c;
  c.tol = 0.0;
  EXPECT_THROW(c.validate(), Error);
  DysonConfig d;
  d.eta_floor = -1.0;
  EXPECT_THROW(d.validate(), Error);
  const auto ladder = DysonConfig{}.eta_ladder();
  EXPECT_DOUBLE_EQ(ladder.front(), 1e-1);
  EXPECT_GE(ladder.back(), 1e-10);
  for (std::size_t i = 1; i < ladder.size(); ++i) EXPECT_LT(ladder[i], ladder[i - 1]);
}

TEST(Dyson, InvariantsOnRandomProbes) {
  std::mt19937_64 rng(2024);
  for (std::size_t i = 0; i < 60; ++i) {
    const auto p = random_dyson_probe(rng, i);
    const auto s = dyson_solve(p.l, p.mu, p.b);
    EXPECT_GE(min_eig(s.omega.imag_part() - p.b.imag_part()), -1e-10) << i;
    EXPECT_LT(s.residual, 1e-10) << i;
    const auto g = recompute_g(s.omega, p.l, p.mu);
    EXPECT_LT((g - s.G).max_abs(), 1e-10) << i;
    EXPECT_LT((s.omega - (p.b - p.l.alpha() * g * p.l.alpha())).max_abs(), 1e-10) << i;
    EXPECT_LE(operator_norm(s.G), operator_norm(inverse(p.b.imag_part())) + 1e-10) << i;
    EXPECT_LE(hermitian_eigenvalues(HermitianMatrix::symmetrized(s.G.imag_part())).back(), 1e-12) << i;
    const auto c = dyson_solve(p.l, p.mu, p.b.adjoint());
    EXPECT_LT((c.omega - s.omega.adjoint()).max_abs(), 1e-10) << i;
  }
}

TEST(DysonContinueReal, AdditiveSpike) {
  const auto l = linearize(additive_polynomial());
  const auto s = dyson_continue_real(l, kDelta0, 2.5);
  EXPECT_NEAR(s.omega(0, 0).real(), 2.0, 1e-9);
  EXPECT_LT(hermitian_residual(s.omega), 1e-8);
}

TEST(DysonContinueReal, ExampleOffSupport) {
  const auto s = dyson_continue_real(example_linearization(), kDelta0, 6.0);
  EXPECT_NEAR(s.omega(0, 0).real(), 1.0 / ((6.0 - std::sqrt(12.0)) / 12.0), 1e-8);
  EXPECT_LT(hermitian_residual(s.omega), 1e-8);
}

TEST(DysonContinueReal, RefusesSupport) {
  EXPECT_EQ(kind_of([] { dyson_continue_real(example_linearization(), kDelta0, 2.0); }),
            ErrorKind::support_detected);
  EXPECT_EQ(kind_of([] { dyson_continue_real(linearize(additive_polynomial()), kDelta0, 0.5); }),
            ErrorKind::support_detected);
}

TEST(DysonAt, SelfConsistentOnPencil) {
  const auto l = example_linearization();
  for (cplx z : {cplx{1.0, 0.5}, cplx{-0.5, 1e-3}, cplx{5.0, 1e-6}}) {
    const auto a = dyson_at(l, kDelta0, z);
    const auto g = recompute_g(a.omega, l, kDelta0);
    EXPECT_LT((a.G - g).max_abs(), 1e-9) << z;
    EXPECT_LT((a.omega - (a.b - l.alpha() * g * l.alpha())).max_abs(), 1e-9) << z;
    EXPECT_LT(std::abs(a.G(0, 0) - mp_g(z)), 1e-9) << z;
  }
  const auto up = dyson_at(l, kDelta0, cplx{1.0, 1.0});
  const auto down = dyson_at(l, kDelta0, cplx{1.0, -1.0});
  EXPECT_LT((down.omega - up.omega.adjoint()).max_abs(), 1e-12);
}

TEST(DysonAt, WarmStartAgreesWithLadder) {
  const auto l = example_linearization();
  std::optional<ComplexMatrix> warm;
  for (double x = -1.0; x < 5.0; x += 0.05) {
    const cplx z{x, 1e-2};
    const auto w = dyson_at(l, kDelta0, z, {}, warm);
    EXPECT_LT(std::abs(w.G(0, 0) - mp_g(z)), 1e-10) << z;
    warm = w.omega;
  }
  // A warm start from the wrong branch falls back to the ladder.
  const auto bad = dyson_at(l, kDelta0, cplx{2.0, 0.1}, {}, ComplexMatrix::identity(3) * cplx{0.0, -5.0});
  EXPECT_LT(std::abs(bad.G(0, 0) - mp_g(cplx{2.0, 0.1})), 1e-10);
}

TEST(ModelCauchyTransform, ExampleEqualsMp) {
  const auto l = example_linearization();
  const cplx g = model_cauchy_transform(l, kDelta0, cplx{6.0, 1e-8});
  EXPECT_NEAR(g.real(), (6.0 - std::sqrt(12.0)) / 12.0, 1e-7);
  EXPECT_NEAR(g.real(), 0.211325, 1e-6);
  for (cplx z : {cplx{1.0, 0.3}, cplx{-1.0, 0.05}, cplx{3.9, 0.01}})
    EXPECT_LT(std::abs(model_cauchy_transform(l, kDelta0, z) - mp_g(z)), 1e-9) << z;
}

TEST(ModelCauchyTransform, AdditiveEqualsSemicircle) {
  const auto l = linearize(additive_polynomial());
  for (cplx z : {cplx{1.0, 0.3}, cplx{-2.5, 0.05}})
    EXPECT_LT(std::abs(model_cauchy_transform(l, kDelta0, z) - semicircle_g(z)), 1e-10);
}

TEST(ModelCauchyTransform, Herglotz) {
  const auto l = example_linearization();
  for (int i = 0; i < 200; ++i) {
    const cplx z{-2.0 + 0.04 * i, 0.02 + 0.01 * (i % 5)};
    EXPECT_LT(model_cauchy_transform(l, kDelta0, z).imag(), 0.0) << z;
  }
  EXPECT_THROW(model_cauchy_transform(l, kDelta0, cplx{1.0, 0.0}), Error);
}

// ------------------------------------------------------------- derivative

TEST(DysonDerivative, ZeroAlpha) {
  Linearization l;
  l.m = 2;
  l.gamma = ComplexMatrix(2);
  l.coeffs = {ComplexMatrix(2), ComplexMatrix{{1, 0.5}, {0.5, 0}}};
  const auto mu = SpectralMeasure::from_atoms({{-1.0, 1.0}, {2.0, 1.0}});
  const ComplexMatrix b{{cplx{0.1, 1.0}, 0.2}, {0.2, cplx{0.0, 2.0}}};
  const ComplexMatrix sigma{{1, cplx{0, 1}}, {cplx{0, -1}, 0.5}};
  const auto s = dyson_solve(l, mu, b);
  ComplexMatrix want(2);
  for (const auto& a : mu.atoms()) {
    const auto r = inverse(b - l.beta() * cplx{a.t});
    want -= r * sigma * r * cplx{a.w};
  }
  EXPECT_LT((dyson_derivative(s, l, mu, sigma) - want).max_abs(), 1e-13);
}

TEST(DysonDerivative, AdditiveAtSpike) {
  const auto l = linearize(additive_polynomial());
  const auto s = dyson_continue_real(l, kDelta0, 2.5);
  const auto d = dyson_derivative(s, l, kDelta0, ComplexMatrix::identity(1));
  EXPECT_NEAR(-d(0, 0).real(), 1.0 / 3.0, 1e-9);
}

TEST(DysonDerivative, FiniteDifferences) {
  std::mt19937_64 rng(77);
  for (std::size_t i = 0; i < 30; ++i) {
    const auto p = random_dyson_probe(rng, i);
    const auto s = dyson_solve(p.l, p.mu, p.b);
    const DysonDerivative dg(s, p.l, p.mu);
    const auto sigma = random_matrix(p.l.m, rng);
    const double h = 1e-5;
    const auto gp = dyson_solve(p.l, p.mu, p.b + sigma * cplx{h}, {}, s.omega).G;
    const auto gm = dyson_solve(p.l, p.mu, p.b - sigma * cplx{h}, {}, s.omega).G;
    const auto fd = (gp - gm) * cplx{0.5 / h};
    const auto an = dg(sigma);
    EXPECT_LT((fd - an).frobenius_norm() / an.frobenius_norm(), 1e-6) << i;
  }
}

TEST(DysonDerivative, ExampleCornerMatchesMpDerivative) {
  // -DG[e11]_11 at real rho equals phi((rho - x^2)^{-2}) = -G_Pi'(rho).
  const auto l = example_linearization();
  const auto cf = example_closed_forms(2.0);
  const auto s = dyson_continue_real(l, kDelta0, cf.plus->rho);
  const auto d = dyson_derivative(s, l, kDelta0, ComplexMatrix::unit(3, 0, 0));
  EXPECT_NEAR(d(0, 0).real(), cf.plus->g_prime, 1e-9);
}

TEST(DysonDerivative, DimensionMismatch) {
  const auto l = example_linearization();
  const auto s = dyson_continue_real(l, kDelta0, 6.0);
  const DysonDerivative dg(s, l, kDelta0);
  EXPECT_THROW(dg(ComplexMatrix(2)), Error);
}

// -------------------------------------------------------------- surrogate

TEST(Surrogate, UnitIsExact) {
  const auto v = free_surrogate_phi(example_linearization(), kDelta0, SurrogateExpr::unit(), 500, 1);
  EXPECT_EQ(v.value, 1.0);
  EXPECT_EQ(v.error, 0.0);
}

TEST(Surrogate, RejectsSmallSize) {
  EXPECT_THROW(free_surrogate_phi(example_linearization(), kDelta0, SurrogateExpr::unit(), 499, 1), Error);
}

TEST(Surrogate, SemicircleResolvent) {
  const auto v = free_surrogate_phi(example_linearization(), kDelta0, SurrogateExpr::scalar_resolvent(2.5), 2000, 3);
  EXPECT_LT(std::abs(v.value - 0.5), 3.0 * v.error + 1e-12);
  EXPECT_GT(v.error, 0.0);
}

TEST(Surrogate, DeterministicGivenSeed) {
  const auto a = free_surrogate_phi(example_linearization(), kDelta0, SurrogateExpr::scalar_resolvent(2.5), 600, 9);
  const auto b = free_surrogate_phi(example_linearization(), kDelta0, SurrogateExpr::scalar_resolvent(2.5), 600, 9);
  EXPECT_EQ(a.value, b.value);
}

TEST(Surrogate, CornerResolventMatchesDyson) {
  const auto l = example_linearization();
  const auto cf = example_closed_forms(2.0);
  const auto v = free_surrogate_phi(l, kDelta0, SurrogateExpr::corner_resolvent(cf.plus->rho), 2000, 5);
  EXPECT_LT(std::abs(v.value - cf.plus->g), 3.0 * v.error + 1e-3);
}

TEST(Surrogate, SecondVarianceTermMatchesDerivative) {
  const auto l = example_linearization();
  const auto cf = example_closed_forms(2.0);
  const double rho = cf.minus.rho;
  const auto s = dyson_continue_real(l, kDelta0, rho);
  const DysonDerivative dg(s, l, kDelta0);
  const auto c = c_matrix(s, l, 2.0);
  const auto v = v_rho(s, l, kDelta0, c, dg, EntryLaw::gue());
  const auto sur =
      free_surrogate_phi(l, kDelta0, SurrogateExpr::v_second_term(rho, l.alpha() * c * l.alpha()), 2000, 5);
  EXPECT_LT(std::abs(sur.value - v.term2), 3.0 * sur.error);
}

TEST(Surrogate, ContinuousBaseMeasure) {
  const auto l = linearize(additive_polynomial());
  const auto mu = SpectralMeasure::uniform(-0.5, 0.5);
  const auto v = free_surrogate_phi(l, mu, SurrogateExpr::corner_resolvent(3.0), 500, 5);
  const double want = model_cauchy_transform(l, mu, cplx{3.0, 1e-12}).real();
  EXPECT_LT(std::abs(v.value - want), 3.0 * v.error + 2e-3);
}
