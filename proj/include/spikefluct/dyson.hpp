#pragma once

// Operator-valued subordination for the pencil alpha (x) x + beta (x) a with x
// semicircular and free from a ~ mu_a. The matrix Cauchy transform
// G(b) = (id (x) phi)[(b - alpha (x) x - beta (x) a)^{-1}] and the
// subordination function omega(b) solve the self-consistent pair
//
//   G = int (omega - t beta)^{-1} dmu_a(t),     omega = b - alpha G alpha.
//
// Vectorization is row-major: vec(R X S) = kron(R, S^T) vec(X).

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "spikefluct/error.hpp"
#include "spikefluct/linearize.hpp"
#include "spikefluct/linmat.hpp"
#include "spikefluct/measure.hpp"

namespace spikefluct {

struct DysonConfig {
  double tol = 1e-12;
  int max_iter = 10'000;
  double eta_start = 1e-1;
  double eta_factor = 0.5;
  double eta_floor = 1e-10;
  double damping = 0.5;
  /// Largest admissible Im(omega) - eta at the ladder floor, relative to
  /// max(1, max |omega_ij|), for a real z to count as lying off the support.
  double hermitian_threshold = 1e-8;

  void validate() const {
    if (!(tol > 0.0)) throw Error(ErrorKind::invalid_input, "DysonConfig: tol must be positive");
    if (!(eta_floor > 0.0) || !(eta_start >= eta_floor)) {
      throw Error(ErrorKind::invalid_input, "DysonConfig: need eta_start >= eta_floor > 0");
    }
    if (!(eta_factor > 0.0 && eta_factor < 1.0)) throw Error(ErrorKind::invalid_input, "DysonConfig: eta_factor in (0,1)");
    if (!(damping > 0.0 && damping <= 1.0)) throw Error(ErrorKind::invalid_input, "DysonConfig: damping in (0,1]");
    if (max_iter <= 0) throw Error(ErrorKind::invalid_input, "DysonConfig: max_iter must be positive");
  }

  /// eta_start, eta_start * factor, ... down to (and ending exactly at) eta_floor.
  std::vector<double> eta_ladder() const {
    std::vector<double> out;
    for (double eta = eta_start; eta > eta_floor; eta *= eta_factor) out.push_back(eta);
    out.push_back(eta_floor);
    return out;
  }
};

struct SubordinationSolution {
  ComplexMatrix b;
  ComplexMatrix omega;
  ComplexMatrix G;
  double eta = 0.0;
  double residual = 0.0;
  int iterations = 0;
};

namespace detail {

inline ComplexMatrix average_resolvent(const ComplexMatrix& omega, const ComplexMatrix& beta,
                                       const SpectralMeasure& mu) {
  const std::size_t m = omega.rows();
  ComplexMatrix g(m);
  const ComplexMatrix id = ComplexMatrix::identity(m);
  for (const auto& a : mu.atoms()) {
    ComplexMatrix x = omega;
    if (a.t != 0.0) x -= beta * cplx{a.t};
    g += solve(x, id) * cplx{a.w};
  }
  return g;
}

inline ComplexMatrix dyson_map(const ComplexMatrix& b, const ComplexMatrix& omega, const Linearization& l,
                               const SpectralMeasure& mu) {
  const ComplexMatrix g = average_resolvent(omega, l.beta(), mu);
  return b - l.alpha() * g * l.alpha();
}

/// T = int kron(R_t, R_t^T) dmu_a, R_t = (omega - t beta)^{-1}:
/// the matrix of X -> int R_t X R_t dmu_a.
inline ComplexMatrix tangent_matrix(const ComplexMatrix& omega, const ComplexMatrix& beta,
                                    const SpectralMeasure& mu) {
  const std::size_t m = omega.rows();
  ComplexMatrix t(m * m);
  const ComplexMatrix id = ComplexMatrix::identity(m);
  for (const auto& a : mu.atoms()) {
    ComplexMatrix x = omega;
    if (a.t != 0.0) x -= beta * cplx{a.t};
    const ComplexMatrix r = solve(x, id);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const cplx rij = a.w * r(i, j);
        for (std::size_t k = 0; k < m; ++k)
          for (std::size_t l = 0; l < m; ++l) t(i * m + k, j * m + l) += rij * r(l, k);
      }
  }
  return t;
}

inline ComplexMatrix vec(const ComplexMatrix& x) {
  ComplexMatrix out(x.rows() * x.cols(), 1);
  std::copy(x.data().begin(), x.data().end(), out.data().begin());
  return out;
}

inline ComplexMatrix unvec(const ComplexMatrix& v, std::size_t m) {
  ComplexMatrix out(m);
  std::copy(v.data().begin(), v.data().end(), out.data().begin());
  return out;
}

inline double imag_min_eigenvalue(const ComplexMatrix& b) {
  return hermitian_eigenvalues(HermitianMatrix::symmetrized(b.imag_part())).front();
}
inline double imag_max_eigenvalue(const ComplexMatrix& b) {
  return hermitian_eigenvalues(HermitianMatrix::symmetrized(b.imag_part())).back();
}

inline void require_model(const Linearization& l) {
  if (l.coeffs.size() != 2) {
    throw Error(ErrorKind::invalid_input, "Dyson solver needs a two-variable linearization (Wigner, diagonal)");
  }
}

inline SubordinationSolution finish(const ComplexMatrix& b, ComplexMatrix omega, const Linearization& l,
                                    const SpectralMeasure& mu, double eta, int iterations) {
  SubordinationSolution s;
  s.G = average_resolvent(omega, l.beta(), mu);
  s.residual = (omega - (b - l.alpha() * s.G * l.alpha())).frobenius_norm();
  s.b = b;
  s.omega = std::move(omega);
  s.eta = eta;
  s.iterations = iterations;
  return s;
}

}  // namespace detail

/// Damped fixed-point iteration on omega, started from omega0 (default b).
/// Accepts Im b positive definite (upper half-plane) or negative definite
/// (its mirror image, where omega(b*) = omega(b)*).
inline SubordinationSolution dyson_solve(const Linearization& l, const SpectralMeasure& mu, const ComplexMatrix& b,
                                         const DysonConfig& cfg = {},
                                         const std::optional<ComplexMatrix>& omega0 = std::nullopt) {
  detail::require_model(l);
  cfg.validate();
  if (b.rows() != l.m || !b.is_square()) throw Error(ErrorKind::dimension_mismatch, "dyson_solve: b must be m x m");
  const double lo = detail::imag_min_eigenvalue(b);
  const double hi = detail::imag_max_eigenvalue(b);
  if (!(lo > 0.0) && !(hi < 0.0)) {
    throw Error(ErrorKind::invalid_input, "dyson_solve: Im b must be definite (smallest eigenvalue " +
                                              std::to_string(lo) + ")");
  }
  ComplexMatrix omega = omega0 ? *omega0 : b;
  double damping = cfg.damping;
  double previous = std::numeric_limits<double>::infinity();
  double step = previous;
  for (int it = 1; it <= cfg.max_iter; ++it) {
    const ComplexMatrix next = detail::dyson_map(b, omega, l, mu);
    ComplexMatrix delta = next - omega;
    step = delta.frobenius_norm();
    if (step < cfg.tol * std::max(1.0, omega.frobenius_norm())) {
      return detail::finish(b, next, l, mu, std::abs(lo > 0.0 ? lo : hi), it);
    }
    if (step > previous) damping = std::max(damping * 0.5, 1.0 / 1024.0);
    else damping = std::min(cfg.damping, damping * 1.25);
    previous = step;
    omega += delta * cplx{damping};
  }
  throw Error(ErrorKind::non_convergence,
              "dyson_solve: iteration cap reached, residual " + std::to_string(step));
}

/// Newton's method on F(omega) = omega - b + alpha G(omega) alpha from a warm
/// start. No half-plane requirement on b: this is the analytic continuation
/// used near and on the real axis.
inline SubordinationSolution dyson_newton(const Linearization& l, const SpectralMeasure& mu, const ComplexMatrix& b,
                                          ComplexMatrix omega, const DysonConfig& cfg = {}, int max_steps = 60) {
  detail::require_model(l);
  const std::size_t m = l.m;
  const ComplexMatrix sandwich = kron(l.alpha(), l.alpha().transpose());
  auto residual_of = [&](const ComplexMatrix& w) { return w - detail::dyson_map(b, w, l, mu); };
  ComplexMatrix f = residual_of(omega);
  double r = f.frobenius_norm();
  for (int step = 1; step <= max_steps; ++step) {
    if (r < cfg.tol * std::max(1.0, omega.frobenius_norm())) return detail::finish(b, omega, l, mu, 0.0, step);
    ComplexMatrix jac = ComplexMatrix::identity(m * m) - sandwich * detail::tangent_matrix(omega, l.beta(), mu);
    const ComplexMatrix delta = detail::unvec(solve(jac, detail::vec(f) * cplx{-1.0}), m);
    double scale = 1.0;
    bool improved = false;
    for (int ls = 0; ls < 12; ++ls, scale *= 0.5) {
      ComplexMatrix trial = omega + delta * cplx{scale};
      ComplexMatrix ft = residual_of(trial);
      const double rt = ft.frobenius_norm();
      if (rt < r) {
        omega = std::move(trial);
        f = std::move(ft);
        r = rt;
        improved = true;
        break;
      }
    }
    if (!improved) {
      // Round-off floor: accept if already close, otherwise report failure.
      if (r < 1e3 * cfg.tol * std::max(1.0, omega.frobenius_norm())) return detail::finish(b, omega, l, mu, 0.0, step);
      throw Error(ErrorKind::non_convergence, "dyson_newton: no descent, residual " + std::to_string(r));
    }
  }
  if (r < 1e3 * cfg.tol * std::max(1.0, omega.frobenius_norm())) return detail::finish(b, omega, l, mu, 0.0, max_steps);
  throw Error(ErrorKind::non_convergence, "dyson_newton: step cap reached, residual " + std::to_string(r));
}

namespace detail {

// One ladder rung: Newton from the warm start, falling back to the damped
// fixed point when Newton fails or lands off the physical branch.
inline SubordinationSolution ladder_step(const Linearization& l, const SpectralMeasure& mu, const ComplexMatrix& b,
                                         const std::optional<ComplexMatrix>& warm, double eta,
                                         const DysonConfig& cfg) {
  if (warm) {
    try {
      auto s = dyson_newton(l, mu, b, *warm, cfg);
      if (imag_min_eigenvalue(s.omega - b) >= -1e-10 * std::max(1.0, s.omega.max_abs())) {
        s.eta = eta;
        return s;
      }
    } catch (const Error&) {
    }
  }
  DysonConfig loose = cfg;
  loose.tol = std::max(cfg.tol, 1e-6);
  auto s = dyson_solve(l, mu, b, loose, warm);
  try {
    auto polished = dyson_newton(l, mu, b, s.omega, cfg);
    if (imag_min_eigenvalue(polished.omega - b) >= -1e-10 * std::max(1.0, polished.omega.max_abs())) s = polished;
    else s = dyson_solve(l, mu, b, cfg, s.omega);
  } catch (const Error&) {
    s = dyson_solve(l, mu, b, cfg, s.omega);
  }
  s.eta = eta;
  return s;
}

}  // namespace detail

/// omega(z e11 - gamma) at real z off the support, via a warm-started ladder
/// z e11 - gamma + i eta I with eta decreasing to cfg.eta_floor, followed by
/// Hermitian-part extraction and a Newton polish at eta = 0.
inline SubordinationSolution dyson_continue_real(const Linearization& l, const SpectralMeasure& mu, double z,
                                                 const DysonConfig& cfg = {}) {
  detail::require_model(l);
  cfg.validate();
  const std::size_t m = l.m;
  ComplexMatrix b0 = ComplexMatrix::unit(m, 0, 0) * cplx{z} - l.gamma;
  std::optional<ComplexMatrix> warm;
  double excess = 0.0;
  int iterations = 0;
  for (double eta : cfg.eta_ladder()) {
    const ComplexMatrix b = b0 + ComplexMatrix::identity(m) * cplx{0.0, eta};
    SubordinationSolution s;
    try {
      s = detail::ladder_step(l, mu, b, warm, eta, cfg);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::non_convergence) throw;
      throw Error(ErrorKind::support_detected, "z = " + std::to_string(z) + ": no convergence at eta = " +
                                                   std::to_string(eta) + " (" + e.what() + ")");
    }
    iterations += s.iterations;
    excess = detail::imag_max_eigenvalue(s.omega) - eta;
    const double im_g11 = -s.G(0, 0).imag();
    if (eta <= 1e-4 && (excess > 1e-8 + 1e4 * eta || im_g11 > 1e-8 + 1e4 * eta)) {
      throw Error(ErrorKind::support_detected, "z = " + std::to_string(z) + " lies in the support: Im omega excess " +
                                                   std::to_string(excess) + " at eta = " + std::to_string(eta));
    }
    warm = std::move(s.omega);
  }
  if (excess >= cfg.hermitian_threshold * std::max(1.0, warm->max_abs())) {
    throw Error(ErrorKind::support_detected, "z = " + std::to_string(z) + ": Im omega excess " +
                                                 format_double(excess) + " at the ladder floor");
  }
  SubordinationSolution s = dyson_newton(l, mu, b0, warm->hermitian_part(), cfg);
  s.omega = s.omega.hermitian_part();
  s.G = detail::average_resolvent(s.omega, l.beta(), mu).hermitian_part();
  s.residual = (s.omega - (b0 - l.alpha() * s.G * l.alpha())).frobenius_norm();
  s.eta = 0.0;
  s.iterations += iterations;
  return s;
}

/// Solution at b = z e11 - gamma for complex z, reached through the
/// regularization ladder b + i s I; Im z < 0 uses omega(b*) = omega(b)*.
/// A warm start (a solution at a nearby z in the upper half plane) is tried
/// first with Newton and kept if it lands on the physical branch.
inline SubordinationSolution dyson_at(const Linearization& l, const SpectralMeasure& mu, cplx z,
                                      const DysonConfig& cfg = {},
                                      const std::optional<ComplexMatrix>& warm_start = std::nullopt) {
  detail::require_model(l);
  cfg.validate();
  if (warm_start && z.imag() > 0.0) {
    const ComplexMatrix b = ComplexMatrix::unit(l.m, 0, 0) * z - l.gamma;
    try {
      auto sol = dyson_newton(l, mu, b, *warm_start, cfg);
      if (detail::imag_min_eigenvalue(sol.omega - b) >= -1e-10 * std::max(1.0, sol.omega.max_abs())) return sol;
    } catch (const Error&) {
    }
  }
  if (z.imag() < 0.0) {
    SubordinationSolution s = dyson_at(l, mu, std::conj(z), cfg);
    s.b = s.b.adjoint();
    s.omega = s.omega.adjoint();
    s.G = s.G.adjoint();
    return s;
  }
  if (z.imag() == 0.0) return dyson_continue_real(l, mu, z.real(), cfg);
  const std::size_t m = l.m;
  const ComplexMatrix b0 = ComplexMatrix::unit(m, 0, 0) * z - l.gamma;
  std::optional<ComplexMatrix> warm;
  int iterations = 0;
  double current = 0.0;
  for (double s : cfg.eta_ladder()) {
    // On failure, retry through geometric midpoints between the last
    // solved rung and s.
    std::vector<double> pending{s};
    while (!pending.empty()) {
      const double target = pending.back();
      const ComplexMatrix b = b0 + ComplexMatrix::identity(m) * cplx{0.0, target};
      try {
        auto sol = detail::ladder_step(l, mu, b, warm, target, cfg);
        iterations += sol.iterations;
        warm = std::move(sol.omega);
        current = target;
        pending.pop_back();
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::non_convergence || !warm || pending.size() > 24) throw;
        pending.push_back(std::sqrt(current * target));
      }
    }
  }
  try {
    auto sol = dyson_newton(l, mu, b0, *warm, cfg);
    sol.iterations += iterations;
    return sol;
  } catch (const Error&) {
    const ComplexMatrix b = b0 + ComplexMatrix::identity(m) * cplx{0.0, cfg.eta_floor};
    auto sol = detail::finish(b, *warm, l, mu, cfg.eta_floor, iterations);
    return sol;
  }
}

/// g_{P(x,a)}(z): the (1,1) entry of G(z e11 - gamma).
inline cplx model_cauchy_transform(const Linearization& l, const SpectralMeasure& mu, cplx z,
                                   const DysonConfig& cfg = {}) {
  if (!(z.imag() > 0.0)) throw Error(ErrorKind::invalid_input, "model_cauchy_transform: need Im z > 0");
  return dyson_at(l, mu, z, cfg).G(0, 0);
}

/// Directional derivative b -> G(b) at a solved state, DG[Sigma], from the
/// linearized Dyson equation
///   DG = -int R_t (Sigma - alpha DG alpha) R_t dmu_a(t).
/// One factorization serves every direction. Note that
/// (id (x) phi)[R (Sigma (x) 1) R] = -DG[Sigma].
class DysonDerivative {
 public:
  DysonDerivative(const SubordinationSolution& sol, const Linearization& l, const SpectralMeasure& mu)
      : m_(l.m) {
    detail::require_model(l);
    tangent_ = detail::tangent_matrix(sol.omega, l.beta(), mu);
    const ComplexMatrix system =
        ComplexMatrix::identity(m_ * m_) - tangent_ * kron(l.alpha(), l.alpha().transpose());
    lu_ = detail::lu_decompose(system);
    const double ratio = lu_.max_pivot == 0.0 ? 0.0 : lu_.min_pivot / lu_.max_pivot;
    if (lu_.exactly_singular || ratio < 1e-14) {
      throw Error(ErrorKind::singular, "dyson_derivative: linearized Dyson system is singular");
    }
  }

  ComplexMatrix operator()(const ComplexMatrix& sigma) const {
    if (sigma.rows() != m_ || !sigma.is_square()) throw Error(ErrorKind::dimension_mismatch, "direction must be m x m");
    const ComplexMatrix rhs = tangent_ * detail::vec(sigma) * cplx{-1.0};
    return detail::unvec(detail::lu_solve(lu_, rhs), m_);
  }

 private:
  std::size_t m_;
  ComplexMatrix tangent_;
  detail::LU lu_;
};

inline ComplexMatrix dyson_derivative(const SubordinationSolution& sol, const Linearization& l,
                                      const SpectralMeasure& mu, const ComplexMatrix& sigma) {
  return DysonDerivative(sol, l, mu)(sigma);
}

}  // namespace spikefluct
