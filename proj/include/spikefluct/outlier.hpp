#pragma once

// Support scan of mu_{P(x,a)}, the outlier determinant equation
// det(omega(z e11 - gamma) - theta beta) = 0 on the real axis, and
// multiplicities by the argument principle.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spikefluct/dyson.hpp"
#include "spikefluct/error.hpp"
#include "spikefluct/linearize.hpp"
#include "spikefluct/measure.hpp"

namespace spikefluct {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
  bool contains(double x) const { return x >= lo && x <= hi; }
  bool operator==(const Interval&) const = default;
};

struct SupportScan {
  std::vector<double> grid;
  std::vector<double> density;
  std::vector<bool> failed;  // solver failure at this grid point
  std::vector<Interval> support_intervals;
  /// Complement of the support within the scan range (closure convention:
  /// gap endpoints are the adjacent support endpoints or the range ends).
  std::vector<Interval> gap_intervals;
  /// Gap intervals whose support-facing endpoints were moved to where the
  /// real-axis continuation starts to fail.
  std::vector<Interval> refined_gaps;
  double eta = 1e-4;
  double threshold = 1e-3;

  double cell() const { return grid.size() > 1 ? grid[1] - grid[0] : 0.0; }
  /// Trapezoidal integral of the density over the scan.
  double mass() const {
    double acc = 0.0;
    for (std::size_t i = 1; i < grid.size(); ++i) acc += 0.5 * (density[i] + density[i - 1]) * (grid[i] - grid[i - 1]);
    return acc;
  }
  std::optional<Interval> gap_containing(double x) const {
    for (const auto& g : refined_gaps)
      if (g.lo < x && x < g.hi) return g;
    return std::nullopt;
  }
};

struct ScanOptions {
  std::size_t grid_points = 1000;
  double eta = 1e-4;
  double threshold = 1e-3;
  bool refine_edges = true;
};

struct Outlier {
  double rho = 0.0;
  int multiplicity = 0;
  Interval bracket;
  Interval gap;
  double det_value_residual = 0.0;
  double winding = 0.0;
  double contour_radius = 0.0;
};

struct OutlierOptions {
  std::size_t subgrid = 200;
  double root_tol = 1e-12;
  double contour_radius = 1e-3;
  std::size_t contour_points = 64;
};

/// True when the real-axis continuation succeeds at z.
inline bool continues_at(const Linearization& l, const SpectralMeasure& mu, double z, const DysonConfig& cfg) {
  try {
    dyson_continue_real(l, mu, z, cfg);
    return true;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::support_detected || e.kind() == ErrorKind::non_convergence ||
        e.kind() == ErrorKind::singular)
      return false;
    throw;
  }
}

namespace detail {

// Moves a gap endpoint from the gap-side grid point `inside` toward `outward`
// (pointing into the support) to the boundary of the continuation domain.
inline double refine_edge(const Linearization& l, const SpectralMeasure& mu, double inside, double direction,
                          double cell, double limit, const DysonConfig& cfg) {
  if (!continues_at(l, mu, inside, cfg)) return inside;
  double good = inside;
  double bad = inside;
  bool found = false;
  for (int k = 1; k <= 4096; ++k) {
    const double x = inside + direction * cell * k;
    if ((direction > 0 && x > limit) || (direction < 0 && x < limit)) break;
    if (!continues_at(l, mu, x, cfg)) {
      bad = x;
      found = true;
      break;
    }
    good = x;
  }
  if (!found) return good;
  for (int it = 0; it < 40 && std::abs(bad - good) > 1e-9; ++it) {
    const double mid = 0.5 * (good + bad);
    (continues_at(l, mu, mid, cfg) ? good : bad) = mid;
  }
  return good;
}

}  // namespace detail

/// Density -(1/pi) Im g(u + i eta) on a uniform grid, support = closure of
/// {density > threshold}, gaps = complement within [lo, hi].
inline SupportScan scan_support(const Linearization& l, const SpectralMeasure& mu, double lo, double hi,
                                const ScanOptions& opt = {}, const DysonConfig& cfg = {}) {
  if (!(lo < hi)) throw Error(ErrorKind::invalid_input, "scan_support: need lo < hi");
  if (opt.grid_points < 100) throw Error(ErrorKind::invalid_input, "scan_support: need at least 100 grid points");
  SupportScan scan;
  scan.eta = opt.eta;
  scan.threshold = opt.threshold;
  const std::size_t n = opt.grid_points;
  scan.grid.resize(n);
  scan.density.assign(n, 0.0);
  scan.failed.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    scan.grid[i] = u;
    try {
      scan.density[i] = -model_cauchy_transform(l, mu, cplx{u, opt.eta}, cfg).imag() / std::numbers::pi;
    } catch (const Error&) {
      scan.failed[i] = true;
    }
  }
  std::optional<std::size_t> start;
  for (std::size_t i = 0; i <= n; ++i) {
    const bool in = i < n && !scan.failed[i] && scan.density[i] > opt.threshold;
    if (in && !start) start = i;
    if (!in && start) {
      scan.support_intervals.push_back({scan.grid[*start], scan.grid[i - 1]});
      start.reset();
    }
  }
  double cursor = lo;
  bool open_left = true;
  for (const auto& s : scan.support_intervals) {
    if (s.lo > cursor || (open_left && s.lo > lo)) scan.gap_intervals.push_back({cursor, s.lo});
    cursor = s.hi;
    open_left = false;
  }
  if (cursor < hi) scan.gap_intervals.push_back({cursor, hi});

  const double cell = scan.cell();
  for (const auto& g : scan.gap_intervals) {
    Interval r = g;
    if (opt.refine_edges) {
      const bool left_support = g.lo > lo;
      const bool right_support = g.hi < hi;
      if (left_support && g.width() > 2.0 * cell)
        r.lo = detail::refine_edge(l, mu, g.lo + cell, -1.0, cell, lo, cfg);
      if (right_support && g.width() > 2.0 * cell)
        r.hi = detail::refine_edge(l, mu, g.hi - cell, +1.0, cell, hi, cfg);
    }
    scan.refined_gaps.push_back(r);
  }
  return scan;
}

/// det(omega(z e11 - gamma) - theta beta) at real z in a gap.
inline double outlier_equation(const Linearization& l, const SpectralMeasure& mu, double theta, double z,
                               const DysonConfig& cfg = {}) {
  const auto sol = dyson_continue_real(l, mu, z, cfg);
  const cplx det = determinant(sol.omega - l.beta() * cplx{theta});
  if (std::abs(det.imag()) > 1e-8 * std::max(1.0, std::abs(det.real()))) {
    throw Error(ErrorKind::non_convergence, "outlier_equation: determinant not real at z = " + std::to_string(z));
  }
  return det.real();
}

namespace detail {

// Winding number of z -> det(omega(z e11 - gamma) - theta beta) around the
// circle |z - center| = r, by Newton continuation along the contour.
inline double winding_number(const Linearization& l, const SpectralMeasure& mu, double theta, double center,
                             double r, std::size_t points, const DysonConfig& cfg) {
  const std::size_t m = l.m;
  auto sol = dyson_continue_real(l, mu, center + r, cfg);
  ComplexMatrix omega = sol.omega;
  cplx prev = determinant(omega - l.beta() * cplx{theta});
  double total = 0.0;
  for (std::size_t k = 1; k <= points; ++k) {
    const double phi = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(points);
    const cplx z = center + r * std::polar(1.0, phi);
    const ComplexMatrix b = ComplexMatrix::unit(m, 0, 0) * z - l.gamma;
    auto s = dyson_newton(l, mu, b, omega, cfg);
    omega = s.omega;
    const cplx f = determinant(omega - l.beta() * cplx{theta});
    total += std::arg(f / prev);
    prev = f;
  }
  return total / (2.0 * std::numbers::pi);
}

inline double bisect_root(const std::function<double(double)>& f, double a, double fa, double b, double tol) {
  for (int it = 0; it < 200 && b - a > tol; ++it) {
    const double c = 0.5 * (a + b);
    const double fc = f(c);
    if (fc == 0.0) return c;
    if ((fc < 0.0) == (fa < 0.0)) {
      a = c;
      fa = fc;
    } else {
      b = c;
    }
  }
  return 0.5 * (a + b);
}

}  // namespace detail

/// Roots of the outlier equation in every gap, with multiplicities.
inline std::vector<Outlier> find_outliers(const Linearization& l, const SpectralMeasure& mu, double theta,
                                          const SupportScan& scan, const OutlierOptions& opt = {},
                                          const DysonConfig& cfg = {}) {
  std::vector<Outlier> out;
  const auto f = [&](double z) { return outlier_equation(l, mu, theta, z, cfg); };
  for (const auto& gap : scan.refined_gaps) {
    if (!(gap.width() > 0.0)) continue;
    const double margin = std::min(1e-6, 0.01 * gap.width());
    const double a = gap.lo + margin, b = gap.hi - margin;
    std::vector<std::pair<double, double>> samples;
    for (std::size_t i = 0; i < opt.subgrid; ++i) {
      const double z = a + (b - a) * static_cast<double>(i) / static_cast<double>(opt.subgrid - 1);
      try {
        samples.emplace_back(z, f(z));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::support_detected && e.kind() != ErrorKind::non_convergence) throw;
      }
    }
    std::vector<Outlier> roots;
    for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
      const auto [z0, f0] = samples[i];
      const auto [z1, f1] = samples[i + 1];
      if (f0 == 0.0) {
        roots.push_back({z0, 0, {z0, z0}, gap});
        continue;
      }
      if ((f0 < 0.0) == (f1 < 0.0) || f1 == 0.0) continue;
      Outlier o;
      o.rho = detail::bisect_root(f, z0, f0, z1, opt.root_tol);
      o.bracket = {z0, z1};
      o.gap = gap;
      roots.push_back(o);
    }
    if (!samples.empty() && samples.back().second == 0.0) {
      const double z = samples.back().first;
      roots.push_back({z, 0, {z, z}, gap});
    }
    for (std::size_t i = 0; i < roots.size(); ++i) {
      auto& o = roots[i];
      double r = opt.contour_radius;
      r = std::min(r, 0.5 * (o.rho - gap.lo));
      r = std::min(r, 0.5 * (gap.hi - o.rho));
      for (std::size_t j = 0; j < roots.size(); ++j)
        if (j != i) r = std::min(r, 0.5 * std::abs(roots[j].rho - o.rho));
      bool ok = false;
      for (int attempt = 0; attempt < 6 && !ok; ++attempt, r *= 0.5) {
        try {
          const double w = detail::winding_number(l, mu, theta, o.rho, r, opt.contour_points, cfg);
          const double rounded = std::round(w);
          if (std::abs(w - rounded) < 0.1 && rounded >= 1.0) {
            o.winding = w;
            o.multiplicity = static_cast<int>(rounded);
            o.contour_radius = r;
            ok = true;
          }
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::non_convergence && e.kind() != ErrorKind::singular &&
              e.kind() != ErrorKind::support_detected)
            throw;
        }
      }
      if (!ok) {
        throw Error(ErrorKind::multiplicity, "find_outliers: non-integral winding number at rho = " +
                                                 std::to_string(o.rho));
      }
      o.det_value_residual = std::abs(f(o.rho));
      out.push_back(o);
    }
  }
  return out;
}

/// Half-width of the search window around rho: distance to the support,
/// capped by half the distance to the nearest other outlier.
inline double outlier_window(double rho, const SupportScan& scan, const std::vector<Outlier>& outliers) {
  const auto gap = scan.gap_containing(rho);
  if (!gap) throw Error(ErrorKind::invalid_input, "outlier_window: rho is not inside a gap");
  double w = std::min(rho - gap->lo, gap->hi - rho);
  for (const auto& o : outliers)
    if (o.rho != rho) w = std::min(w, 0.5 * std::abs(o.rho - rho));
  return w;
}

/// Root of det(omega^{(N)}(z e11 - gamma) - theta beta) = 0 near rho, where
/// omega^{(N)} is the subordination function for the empirical measure of
/// the deterministic tail d_1 .. d_{N-1}.
inline double find_rho_N(const Linearization& l, std::span<const double> tail, double theta, double rho,
                         double window, const DysonConfig& cfg = {}) {
  if (!(window > 0.0)) throw Error(ErrorKind::invalid_input, "find_rho_N: window must be positive");
  const auto mu_n = SpectralMeasure::empirical(tail);
  const auto f = [&](double z) { return outlier_equation(l, mu_n, theta, z, cfg); };
  const double f0 = f(rho);
  if (f0 == 0.0) return rho;
  // Expand symmetrically from rho until the sign flips.
  constexpr int kSteps = 32;
  for (int k = 1; k <= kSteps; ++k) {
    const double h = window * static_cast<double>(k) / kSteps;
    for (double z : {rho - h, rho + h}) {
      double fz;
      try {
        fz = f(z);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::support_detected && e.kind() != ErrorKind::non_convergence) throw;
        continue;
      }
      if (fz == 0.0) return z;
      if ((fz < 0.0) != (f0 < 0.0)) {
        return z < rho ? detail::bisect_root(f, z, fz, rho, 1e-12) : detail::bisect_root(f, rho, f0, z, 1e-12);
      }
    }
  }
  throw Error(ErrorKind::non_convergence, "find_rho_N: no sign change within the window around " + std::to_string(rho));
}

/// Crude bound on the spectrum of P(W/sqrt N, A_N): each generator replaced
/// by its norm (2 for the semicircle, max(|theta|, |supp mu_a|) for A).
inline double spectral_bound(const NCPolynomial& p, double theta, const SpectralMeasure& mu_a) {
  const double norm_a = std::max({std::abs(theta), std::abs(mu_a.support_lo()), std::abs(mu_a.support_hi())});
  const double norms[2] = {2.0, norm_a};
  double bound = 0.0;
  const NCPolynomial canon = normalize(p);
  for (const auto& t : canon.terms()) {
    double term = std::abs(t.coeff);
    for (auto g : t.word) term *= g < 2 ? norms[g] : 1.0;
    bound += term;
  }
  return bound;
}

}  // namespace spikefluct
