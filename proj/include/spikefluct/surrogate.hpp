#pragma once

// Random-matrix surrogate for traces of functions of the free pair (x, a):
// x is replaced by an M x M GUE matrix divided by sqrt M and a by an
// independent diagonal sampled from mu_a. Used as an independent oracle.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "spikefluct/error.hpp"
#include "spikefluct/linearize.hpp"
#include "spikefluct/linmat.hpp"
#include "spikefluct/measure.hpp"
#include "spikefluct/simulate.hpp"

namespace spikefluct {

struct SurrogateExpr {
  enum class Kind {
    unit,              // phi(1)
    scalar_resolvent,  // phi((z - x)^{-1})
    corner_resolvent,  // phi((z - P(x, a))^{-1}), read off the pencil
    v_second_term,     // phi([(Tr_m (x) id)(R (weight (x) 1))]^2), R the pencil resolvent at z e11 - gamma
  };
  Kind kind = Kind::unit;
  double z = 0.0;
  ComplexMatrix weight;

  static SurrogateExpr unit() { return {}; }
  static SurrogateExpr scalar_resolvent(double z) { return {Kind::scalar_resolvent, z, {}}; }
  static SurrogateExpr corner_resolvent(double z) { return {Kind::corner_resolvent, z, {}}; }
  static SurrogateExpr v_second_term(double z, ComplexMatrix w) { return {Kind::v_second_term, z, std::move(w)}; }
};

struct SurrogateValue {
  double value = 0.0;
  double error = 0.0;  // jackknife standard error over units
  std::size_t size = 0;
};

namespace detail {

inline SurrogateValue jackknife_mean(const std::vector<double>& units) {
  const double n = static_cast<double>(units.size());
  double sum = 0.0;
  for (double u : units) sum += u;
  double acc = 0.0;
  const double mean = sum / n;
  for (double u : units) {
    const double loo = (sum - u) / (n - 1.0);
    acc += (loo - mean) * (loo - mean);
  }
  return {mean, std::sqrt((n - 1.0) / n * acc), units.size()};
}

// GUE eigenvalues (unit off-diagonal variance) from the tridiagonal model:
// diagonal N(0, 1), off-diagonal chi_{2k} / sqrt 2 for k = M-1 .. 1.
inline std::vector<double> gue_eigenvalues(std::size_t m, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> d(m), e(m - 1);
  for (auto& x : d) x = normal(rng);
  for (std::size_t k = 0; k + 1 < m; ++k) {
    std::chi_squared_distribution<double> chi2(2.0 * static_cast<double>(m - 1 - k));
    e[k] = std::sqrt(chi2(rng) / 2.0);
  }
  return tridiagonal_eigenvalues(std::move(d), std::move(e));
}

}  // namespace detail

/// Surrogate value of the requested trace with a jackknife error bar. Units
/// are the eigenvalues of x when mu_a is a point mass, otherwise the
/// diagonal positions of the full M m x M m pencil resolvent.
inline SurrogateValue free_surrogate_phi(const Linearization& l, const SpectralMeasure& mu_a, const SurrogateExpr& e,
                                         std::size_t size, std::uint64_t seed) {
  if (size < 500) throw Error(ErrorKind::invalid_input, "free_surrogate_phi: surrogate size must be at least 500");
  if (e.kind == SurrogateExpr::Kind::unit) return {1.0, 0.0, size};
  std::mt19937_64 rng(substream_seed(seed, 0));
  const double scale = 1.0 / std::sqrt(static_cast<double>(size));
  const std::size_t m = l.m;
  const ComplexMatrix id = ComplexMatrix::identity(m);
  const ComplexMatrix b = ComplexMatrix::unit(m, 0, 0) * cplx{e.z} - l.gamma;
  if (e.kind == SurrogateExpr::Kind::v_second_term && (e.weight.rows() != m || e.weight.cols() != m)) {
    throw Error(ErrorKind::dimension_mismatch, "free_surrogate_phi: weight must be m x m");
  }

  std::vector<double> units;
  units.reserve(size);
  if (mu_a.is_point_mass() || e.kind == SurrogateExpr::Kind::scalar_resolvent) {
    const double a0 = mu_a.atoms().front().t;
    for (double lam : detail::gue_eigenvalues(size, rng)) {
      const double x = lam * scale;
      switch (e.kind) {
        case SurrogateExpr::Kind::scalar_resolvent: units.push_back(1.0 / (e.z - x)); break;
        case SurrogateExpr::Kind::corner_resolvent: {
          const ComplexMatrix r = solve(b - l.alpha() * cplx{x} - l.beta() * cplx{a0}, id);
          units.push_back(r(0, 0).real());
          break;
        }
        case SurrogateExpr::Kind::v_second_term: {
          const ComplexMatrix r = solve(b - l.alpha() * cplx{x} - l.beta() * cplx{a0}, id);
          const cplx k = (r * e.weight).trace();
          units.push_back((k * k).real());
          break;
        }
        case SurrogateExpr::Kind::unit: break;
      }
    }
    return detail::jackknife_mean(units);
  }

  // General diagonal law: full pencil resolvent.
  WignerSpec ws{size, EntryLaw::gue(), seed, 1};
  const ComplexMatrix x = sample_wigner(ws).matrix() * cplx{scale};
  std::vector<double> diag(size);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& d : diag) {
    double v = u(rng);
    while (v <= 0.0) v = u(rng);
    d = mu_a.quantile(v);
  }
  const std::vector<ComplexMatrix> args{x, ComplexMatrix::diagonal(std::span<const double>(diag))};
  const ComplexMatrix r = inverse(evaluate_pencil(l, std::span<const ComplexMatrix>(args), cplx{e.z}));
  if (e.kind == SurrogateExpr::Kind::corner_resolvent) {
    for (std::size_t i = 0; i < size; ++i) units.push_back(r(i, i).real());
    return detail::jackknife_mean(units);
  }
  ComplexMatrix k(size);
  for (std::size_t p = 0; p < m; ++p)
    for (std::size_t q = 0; q < m; ++q) {
      const cplx w = e.weight(q, p);
      if (w == cplx{}) continue;
      for (std::size_t i = 0; i < size; ++i)
        for (std::size_t j = 0; j < size; ++j) k(i, j) += w * r(p * size + i, q * size + j);
    }
  for (std::size_t i = 0; i < size; ++i) {
    cplx acc{};
    for (std::size_t j = 0; j < size; ++j) acc += k(i, j) * k(j, i);
    units.push_back(acc.real());
  }
  return detail::jackknife_mean(units);
}

}  // namespace spikefluct
