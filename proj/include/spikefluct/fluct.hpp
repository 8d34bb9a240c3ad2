#pragma once

// Fluctuation coefficients C1, C2, v(rho) of a spike outlier and the limit
// law of N^{1/2}(lambda - rho_N), namely (C2 W11 + Z) / C1 with
// Z ~ N(0, v(rho)) independent of W11.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "spikefluct/dyson.hpp"
#include "spikefluct/error.hpp"
#include "spikefluct/linearize.hpp"
#include "spikefluct/linmat.hpp"
#include "spikefluct/measure.hpp"

namespace spikefluct {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

/// Law mu shared by W11, sqrt2 Re W_ij and sqrt2 Im W_ij (centered, variance 1).
class EntryLaw {
 public:
  enum class Kind { gue_complex, uniform_sqrt3, custom_atoms };

  static EntryLaw gue() { return EntryLaw(Kind::gue_complex); }
  static EntryLaw uniform() { return EntryLaw(Kind::uniform_sqrt3); }
  /// Finite atomic law; must be centered with unit variance.
  static EntryLaw custom(std::vector<Atom> atoms) {
    if (atoms.empty()) throw Error(ErrorKind::invalid_input, "entry law needs atoms");
    double total = 0.0;
    for (const auto& a : atoms) {
      if (!(a.w > 0.0) || !std::isfinite(a.t)) throw Error(ErrorKind::invalid_input, "entry law: bad atom");
      total += a.w;
    }
    for (auto& a : atoms) a.w /= total;
    double m1 = 0.0, m2 = 0.0;
    for (const auto& a : atoms) {
      m1 += a.w * a.t;
      m2 += a.w * a.t * a.t;
    }
    if (std::abs(m1) > 1e-12 || std::abs(m2 - 1.0) > 1e-12) {
      throw Error(ErrorKind::invalid_input, "entry law must be centered with unit variance");
    }
    EntryLaw e(Kind::custom_atoms);
    e.atoms_ = std::move(atoms);
    return e;
  }

  Kind kind() const noexcept { return kind_; }
  const std::vector<Atom>& atoms() const noexcept { return atoms_; }

  std::string name() const {
    switch (kind_) {
      case Kind::gue_complex: return "gue_complex";
      case Kind::uniform_sqrt3: return "uniform_sqrt3";
      case Kind::custom_atoms: return "custom_atoms";
    }
    return "unknown";
  }

  /// E xi^4 for xi ~ mu.
  double fourth_moment() const {
    switch (kind_) {
      case Kind::gue_complex: return 3.0;
      case Kind::uniform_sqrt3: return 9.0 / 5.0;
      case Kind::custom_atoms: {
        double m4 = 0.0;
        for (const auto& a : atoms_) m4 += a.w * std::pow(a.t, 4);
        return m4;
      }
    }
    return 0.0;
  }

  /// E|W21|^4 = (E xi^4 + 1) / 2.
  double offdiag_fourth_moment() const { return 0.5 * (fourth_moment() + 1.0); }

  /// Whether mu is known to satisfy a Poincare inequality.
  bool poincare() const noexcept { return kind_ != Kind::custom_atoms; }

  double cdf(double x) const {
    switch (kind_) {
      case Kind::gue_complex: return normal_cdf(x);
      case Kind::uniform_sqrt3: return std::clamp((x + std::sqrt(3.0)) / (2.0 * std::sqrt(3.0)), 0.0, 1.0);
      case Kind::custom_atoms: {
        double acc = 0.0;
        for (const auto& a : atoms_)
          if (a.t <= x) acc += a.w;
        return std::min(acc, 1.0);
      }
    }
    return 0.0;
  }

  template <typename Rng>
  double sample(Rng& rng) const {
    switch (kind_) {
      case Kind::gue_complex: return std::normal_distribution<double>(0.0, 1.0)(rng);
      case Kind::uniform_sqrt3: return std::uniform_real_distribution<double>(-std::sqrt(3.0), std::sqrt(3.0))(rng);
      case Kind::custom_atoms: {
        const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        double acc = 0.0;
        for (const auto& a : atoms_) {
          acc += a.w;
          if (u < acc) return a.t;
        }
        return atoms_.back().t;
      }
    }
    return 0.0;
  }

 private:
  explicit EntryLaw(Kind k) : kind_(k) {}
  Kind kind_;
  std::vector<Atom> atoms_;
};

struct VarianceTerms {
  double term1 = 0.0;  // fourth-cumulant part
  double term2 = 0.0;  // second-order free part
  double total() const { return term1 + term2; }
};

struct FluctuationCoefficients {
  double rho = 0.0;
  std::optional<double> rho_N;
  ComplexMatrix C;  // adj(omega(rho) - theta beta)
  double c1 = 0.0;
  double c2 = 0.0;
  VarianceTerms v;
  /// Variance of the limit when W11 is Gaussian: C2^2 + second-order term.
  double v_tilde = 0.0;
  std::string entry_law;
  std::string linearization_id;
};

namespace detail {

inline double real_or_throw(cplx x, const char* what) {
  if (std::abs(x.imag()) > 1e-8 * std::max(1.0, std::abs(x.real()))) {
    throw Error(ErrorKind::non_convergence, std::string(what) + ": imaginary residue " + format_double(x.imag()));
  }
  return x.real();
}

}  // namespace detail

inline ComplexMatrix c_matrix(const SubordinationSolution& sol, const Linearization& l, double theta) {
  return adjugate(sol.omega - l.beta() * cplx{theta});
}

/// Tr(C [e11 + alpha (-DG[e11]) alpha]).
inline double c1(const ComplexMatrix& c, const Linearization& l, const DysonDerivative& dg) {
  const std::size_t m = l.m;
  const ComplexMatrix e11 = ComplexMatrix::unit(m, 0, 0);
  const ComplexMatrix inner = e11 - l.alpha() * dg(e11) * l.alpha();
  return detail::real_or_throw((c * inner).trace(), "C1");
}

/// Tr(C alpha).
inline double c2(const ComplexMatrix& c, const Linearization& l) {
  return detail::real_or_throw((c * l.alpha()).trace(), "C2");
}

/// Both parts of v(rho). With M = alpha C alpha and R_t = (omega - t beta)^{-1}:
///   term1 = (E|W21|^4 - 2) int [Tr(M R_t)]^2 dmu_a(t)
///   term2 = sum M_qp M_q'p' [-DG[e_qp']]_pq'
inline VarianceTerms v_rho(const SubordinationSolution& sol, const Linearization& l, const SpectralMeasure& mu,
                             const ComplexMatrix& c, const DysonDerivative& dg, const EntryLaw& entry) {
  const std::size_t m = l.m;
  const ComplexMatrix mm = l.alpha() * c * l.alpha();
  const ComplexMatrix id = ComplexMatrix::identity(m);
  const cplx integral = mu.integrate([&](double t) {
    const cplx tr = (mm * solve(sol.omega - l.beta() * cplx{t}, id)).trace();
    return tr * tr;
  });
  VarianceTerms out;
  out.term1 = (entry.offdiag_fourth_moment() - 2.0) * detail::real_or_throw(integral, "v term1");
  cplx acc{};
  for (std::size_t q = 0; q < m; ++q)
    for (std::size_t pp = 0; pp < m; ++pp) {
      const ComplexMatrix d = dg(ComplexMatrix::unit(m, q, pp));
      for (std::size_t p = 0; p < m; ++p)
        for (std::size_t qq = 0; qq < m; ++qq) acc -= mm(q, p) * mm(qq, pp) * d(p, qq);
    }
  out.term2 = detail::real_or_throw(acc, "v term2");
  return out;
}

/// C2^2 + term2: the variance numerator for Gaussian W11.
inline double v_tilde(double c2, double term2) { return c2 * c2 + term2; }

/// All coefficients at an outlier location rho (real, in a gap).
inline FluctuationCoefficients fluctuation_coefficients(const Linearization& l, const SpectralMeasure& mu, double theta,
                                                        double rho, const EntryLaw& entry,
                                                        const DysonConfig& cfg = {}) {
  const auto sol = dyson_continue_real(l, mu, rho, cfg);
  const DysonDerivative dg(sol, l, mu);
  FluctuationCoefficients f;
  f.rho = rho;
  f.C = c_matrix(sol, l, theta);
  f.c1 = c1(f.C, l, dg);
  f.c2 = c2(f.C, l);
  f.v = v_rho(sol, l, mu, f.C, dg, entry);
  const double scale = std::max({1.0, std::abs(f.v.term1), std::abs(f.v.term2)});
  if (f.v.total() < -1e-10 * scale) {
    throw Error(ErrorKind::verification, "negative variance v = " + format_double(f.v.total()) + " (term1 " +
                                             format_double(f.v.term1) + ", term2 " + format_double(f.v.term2) + ")");
  }
  if (f.c1 == 0.0) throw Error(ErrorKind::singular, "C1 vanishes at rho = " + format_double(rho));
  f.v_tilde = v_tilde(f.c2, f.v.term2);
  f.entry_law = entry.name();
  f.linearization_id = l.id;
  return f;
}

/// Law of (C2 W11 + Z) / C1, Z ~ N(0, v), W11 ~ entry law.
class LimitLaw {
 public:
  static constexpr std::size_t kGridPoints = 4096;

  LimitLaw(double c1, double c2, double v, EntryLaw entry) : entry_(std::move(entry)) {
    if (c1 == 0.0) throw Error(ErrorKind::invalid_input, "LimitLaw: C1 must be nonzero");
    if (v < 0.0) v = 0.0;
    shift_ = c2 / c1;
    sigma_ = std::sqrt(v) / std::abs(c1);
    if (shift_ == 0.0 && sigma_ == 0.0) throw Error(ErrorKind::invalid_input, "LimitLaw: degenerate (point mass)");
    const double sd = std::sqrt(variance());
    grid_.resize(kGridPoints);
    cdf_grid_.resize(kGridPoints);
    for (std::size_t i = 0; i < kGridPoints; ++i) {
      grid_[i] = -8.0 * sd + 16.0 * sd * static_cast<double>(i) / static_cast<double>(kGridPoints - 1);
      cdf_grid_[i] = cdf(grid_[i]);
    }
  }

  static LimitLaw from(const FluctuationCoefficients& f, const EntryLaw& entry) {
    return LimitLaw(f.c1, f.c2, f.v.total(), entry);
  }

  /// C2 / C1: coefficient of W11.
  double shift() const noexcept { return shift_; }
  /// sqrt(v) / |C1|.
  double sigma() const noexcept { return sigma_; }
  double variance() const noexcept { return shift_ * shift_ + sigma_ * sigma_; }
  const EntryLaw& entry() const noexcept { return entry_; }
  const std::vector<double>& grid() const noexcept { return grid_; }
  const std::vector<double>& cdf_grid() const noexcept { return cdf_grid_; }

  std::string kind() const {
    if (shift_ == 0.0 || entry_.kind() == EntryLaw::Kind::gue_complex) return "gaussian";
    if (entry_.kind() == EntryLaw::Kind::uniform_sqrt3) return "uniform_gaussian_convolution";
    return "atomic_gaussian_mixture";
  }

  double cdf(double x) const {
    if (shift_ == 0.0 || entry_.kind() == EntryLaw::Kind::gue_complex) return normal_cdf(x / std::sqrt(variance()));
    if (entry_.kind() == EntryLaw::Kind::uniform_sqrt3) {
      const double a = std::sqrt(3.0) * std::abs(shift_);
      if (sigma_ == 0.0) return std::clamp((x + a) / (2.0 * a), 0.0, 1.0);
      // Antiderivative of Phi: u Phi(u) + phi(u).
      // The law is symmetric; evaluate the left half to avoid cancellation in the upper tail.
      const auto psi = [](double u) { return u * normal_cdf(u) + normal_pdf(u); };
      const double y = -std::abs(x);
      const double left = sigma_ / (2.0 * a) * (psi((y + a) / sigma_) - psi((y - a) / sigma_));
      return x > 0.0 ? 1.0 - left : left;
    }
    double acc = 0.0;
    for (const auto& atom : entry_.atoms()) {
      const double y = x - shift_ * atom.t;
      acc += atom.w * (sigma_ == 0.0 ? (y >= 0.0 ? 1.0 : 0.0) : normal_cdf(y / sigma_));
    }
    return acc;
  }

  /// Density (zero for the purely atomic degenerate case).
  double density(double x) const {
    if (shift_ == 0.0 || entry_.kind() == EntryLaw::Kind::gue_complex) {
      const double s = std::sqrt(variance());
      return normal_pdf(x / s) / s;
    }
    if (entry_.kind() == EntryLaw::Kind::uniform_sqrt3) {
      const double a = std::sqrt(3.0) * std::abs(shift_);
      if (sigma_ == 0.0) return std::abs(x) <= a ? 1.0 / (2.0 * a) : 0.0;
      return (normal_cdf((x + a) / sigma_) - normal_cdf((x - a) / sigma_)) / (2.0 * a);
    }
    if (sigma_ == 0.0) return 0.0;
    double acc = 0.0;
    for (const auto& atom : entry_.atoms()) acc += atom.w * normal_pdf((x - shift_ * atom.t) / sigma_) / sigma_;
    return acc;
  }

  template <typename Rng>
  double sample(Rng& rng) const {
    const double w = entry_.sample(rng);
    const double z = std::normal_distribution<double>(0.0, 1.0)(rng);
    return shift_ * w + sigma_ * z;
  }

 private:
  EntryLaw entry_;
  double shift_ = 0.0;
  double sigma_ = 0.0;
  std::vector<double> grid_;
  std::vector<double> cdf_grid_;
};

inline LimitLaw limit_law(const FluctuationCoefficients& f, const EntryLaw& entry) { return LimitLaw::from(f, entry); }

/// Closed forms for P = X2 X1 + X1 X2 + X1^2 with a = 0, A = diag(theta, 0, ...).
struct ExampleRoot {
  double rho = 0.0;
  double g = 0.0;
  double g_prime = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double v = 0.0;  // for the uniform entry law on [-sqrt3, sqrt3]
  double big_c() const { return std::abs(c2 / c1); }
  double sigma2() const { return v / (c1 * c1); }
};

struct ExampleClosedForms {
  double theta = 0.0;
  ExampleRoot minus;
  std::optional<ExampleRoot> plus;  // present iff theta^2 > 2
  /// theta^2 = 2 up to round-off: the positive root sits on the support edge.
  bool plus_degenerate = false;
};

inline ExampleClosedForms example_closed_forms(double theta) {
  if (theta == 0.0 || !std::isfinite(theta)) throw Error(ErrorKind::invalid_input, "example_closed_forms: theta != 0");
  const double t2 = theta * theta;
  const double s = std::sqrt(4.0 * t2 + 1.0);
  auto make = [&](double sign) {
    ExampleRoot r;
    r.rho = 2.0 * t2 * t2 / (-(3.0 * t2 + 1.0) + sign * s * (t2 + 1.0));
    r.g = 0.5 + (-(t2 + 1.0) + sign * s) / (2.0 * t2);
    r.g_prime = r.g * (1.0 - r.g) / (r.rho * (2.0 * r.g - 1.0));
    const double gg = r.g * r.g;
    r.c1 = -t2 * t2 * gg * gg + r.g_prime / gg * (r.g + 1.0);
    r.c2 = -2.0 * theta;
    r.v = -0.6 * std::pow(t2 * r.g + 2.0, 2) - r.g_prime / gg * (1.0 + 7.0 / r.g + t2) - 4.0 * t2 * r.g;
    return r;
  };
  ExampleClosedForms out;
  out.theta = theta;
  out.minus = make(-1.0);
  out.plus_degenerate = std::abs(t2 - 2.0) <= 1e-9;
  if (t2 > 2.0 && !out.plus_degenerate) out.plus = make(+1.0);
  return out;
}

}  // namespace spikefluct
