#pragma once

// Spectral measures as weighted atoms. Continuous laws are discretized by
// Gauss-Legendre quadrature in the variable s, t = mid + half * sin(pi s / 2),
// which smooths the square-root edges of the semicircle and
// Marchenko-Pastur densities.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spikefluct/error.hpp"

namespace spikefluct {

struct Atom {
  double t = 0.0;
  double w = 0.0;
  bool operator==(const Atom&) const = default;
};

/// Gauss-Legendre nodes and weights on [-1, 1].
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(std::size_t n) {
  if (n == 0) throw Error(ErrorKind::invalid_input, "gauss_legendre: zero nodes");
  std::vector<double> x(n), w(n);
  for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[i] = -z;
    x[n - 1 - i] = z;
    w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return {std::move(x), std::move(w)};
}

class SpectralMeasure {
 public:
  enum class Kind { atoms, semicircle, marchenko_pastur, uniform };

  static constexpr std::size_t kDefaultNodes = 256;

  SpectralMeasure() : SpectralMeasure(point_mass(0.0)) {}

  /// Normalizes the weights; merges atoms at identical locations.
  static SpectralMeasure from_atoms(std::vector<Atom> atoms) {
    if (atoms.empty()) throw Error(ErrorKind::invalid_input, "measure needs at least one atom");
    std::map<double, double> merged;
    double total = 0.0;
    for (const auto& a : atoms) {
      if (!std::isfinite(a.t) || !std::isfinite(a.w) || a.w <= 0.0) {
        throw Error(ErrorKind::invalid_input, "atoms need finite locations and positive weights");
      }
      merged[a.t] += a.w;
      total += a.w;
    }
    SpectralMeasure mu(Kind::atoms);
    for (const auto& [t, w] : merged) mu.atoms_.push_back({t, w / total});
    return mu;
  }

  static SpectralMeasure point_mass(double t) { return from_atoms({{t, 1.0}}); }

  /// Empirical spectral measure of diag(values): equal weights.
  static SpectralMeasure empirical(std::span<const double> values) {
    std::vector<Atom> atoms;
    atoms.reserve(values.size());
    for (double v : values) atoms.push_back({v, 1.0});
    return from_atoms(std::move(atoms));
  }

  /// Semicircle of the given center and radius (radius 2: standard, variance 1).
  static SpectralMeasure semicircle(double center = 0.0, double radius = 2.0,
                                    std::size_t nodes = kDefaultNodes) {
    if (!(radius > 0.0)) throw Error(ErrorKind::invalid_input, "semicircle radius must be positive");
    SpectralMeasure mu(Kind::semicircle);
    mu.params_ = {{"center", center}, {"radius", radius}};
    mu.lo_ = center - radius;
    mu.hi_ = center + radius;
    mu.discretize(nodes);
    return mu;
  }

  /// Marchenko-Pastur law with ratio lambda in (0, 1] and scale sigma^2.
  static SpectralMeasure marchenko_pastur(double ratio = 1.0, double scale = 1.0,
                                          std::size_t nodes = kDefaultNodes) {
    if (!(ratio > 0.0 && ratio <= 1.0) || !(scale > 0.0)) {
      throw Error(ErrorKind::invalid_input, "marchenko_pastur: need 0 < ratio <= 1 and scale > 0");
    }
    SpectralMeasure mu(Kind::marchenko_pastur);
    mu.params_ = {{"ratio", ratio}, {"scale", scale}};
    mu.lo_ = scale * std::pow(1.0 - std::sqrt(ratio), 2);
    mu.hi_ = scale * std::pow(1.0 + std::sqrt(ratio), 2);
    mu.discretize(nodes);
    return mu;
  }

  static SpectralMeasure uniform(double lo, double hi, std::size_t nodes = kDefaultNodes) {
    if (!(hi > lo)) throw Error(ErrorKind::invalid_input, "uniform: need lo < hi");
    SpectralMeasure mu(Kind::uniform);
    mu.params_ = {{"lo", lo}, {"hi", hi}};
    mu.lo_ = lo;
    mu.hi_ = hi;
    mu.discretize(nodes);
    return mu;
  }

  Kind kind() const noexcept { return kind_; }
  const std::vector<Atom>& atoms() const noexcept { return atoms_; }
  std::size_t nodes() const noexcept { return nodes_; }
  const std::map<std::string, double>& params() const noexcept { return params_; }
  bool is_point_mass() const noexcept { return atoms_.size() == 1; }

  double support_lo() const { return kind_ == Kind::atoms ? atoms_.front().t : lo_; }
  double support_hi() const { return kind_ == Kind::atoms ? atoms_.back().t : hi_; }

  /// Density of the continuous law (0 for atomic measures).
  double density(double t) const {
    switch (kind_) {
      case Kind::atoms: return 0.0;
      case Kind::uniform: return (t >= lo_ && t <= hi_) ? 1.0 / (hi_ - lo_) : 0.0;
      case Kind::semicircle: {
        const double c = params_.at("center"), r = params_.at("radius");
        const double u = r * r - (t - c) * (t - c);
        return u > 0.0 ? 2.0 * std::sqrt(u) / (std::numbers::pi * r * r) : 0.0;
      }
      case Kind::marchenko_pastur: {
        const double lam = params_.at("ratio"), s = params_.at("scale");
        if (t <= lo_ || t >= hi_) return 0.0;
        return std::sqrt((hi_ - t) * (t - lo_)) / (2.0 * std::numbers::pi * lam * s * t);
      }
    }
    return 0.0;
  }

  /// Integral of f against the (discretized) measure.
  template <typename F>
  auto integrate(F&& f) const {
    using R = decltype(f(0.0));
    R acc{};
    for (const auto& a : atoms_) acc += a.w * f(a.t);
    return acc;
  }

  /// Distribution function. Continuous laws are integrated accurately
  /// (independent of the node count); atomic laws are right-continuous steps.
  double cdf(double x) const {
    if (kind_ == Kind::atoms) {
      double acc = 0.0;
      for (const auto& a : atoms_)
        if (a.t <= x) acc += a.w;
      return std::min(acc, 1.0);
    }
    if (x <= lo_) return 0.0;
    if (x >= hi_) return 1.0;
    if (kind_ == Kind::uniform) return (x - lo_) / (hi_ - lo_);
    const double mid = 0.5 * (lo_ + hi_), half = 0.5 * (hi_ - lo_);
    const double sx = 2.0 / std::numbers::pi * std::asin(std::clamp((x - mid) / half, -1.0, 1.0));
    static const auto rule = gauss_legendre(96);
    const double a = -1.0, b = sx;
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.first.size(); ++i) {
      const double s = 0.5 * (b - a) * rule.first[i] + 0.5 * (b + a);
      const double t = mid + half * std::sin(0.5 * std::numbers::pi * s);
      const double jac = half * 0.5 * std::numbers::pi * std::cos(0.5 * std::numbers::pi * s);
      acc += 0.5 * (b - a) * rule.second[i] * density(t) * jac;
    }
    return std::clamp(acc, 0.0, 1.0);
  }

  /// Generalized inverse of the distribution function, u in (0, 1).
  double quantile(double u) const {
    if (!(u > 0.0 && u < 1.0)) throw Error(ErrorKind::invalid_input, "quantile: u must lie in (0, 1)");
    if (kind_ == Kind::atoms) {
      double acc = 0.0;
      for (const auto& a : atoms_) {
        acc += a.w;
        if (acc >= u - 1e-15) return a.t;
      }
      return atoms_.back().t;
    }
    double a = lo_, b = hi_;
    for (int it = 0; it < 200 && b - a > 1e-15 * std::max(1.0, std::abs(a)); ++it) {
      const double c = 0.5 * (a + b);
      (cdf(c) < u ? a : b) = c;
    }
    return 0.5 * (a + b);
  }

  double mean() const {
    return integrate([](double t) { return t; });
  }

 private:
  explicit SpectralMeasure(Kind k) : kind_(k) {}

  void discretize(std::size_t n) {
    if (n < 2) throw Error(ErrorKind::invalid_input, "quadrature needs at least 2 nodes");
    nodes_ = n;
    const auto [x, w] = gauss_legendre(n);
    const double mid = 0.5 * (lo_ + hi_), half = 0.5 * (hi_ - lo_);
    double total = 0.0;
    atoms_.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const double s = x[i];
      const double t = mid + half * std::sin(0.5 * std::numbers::pi * s);
      const double jac = half * 0.5 * std::numbers::pi * std::cos(0.5 * std::numbers::pi * s);
      const double weight = w[i] * density(t) * jac;
      if (weight > 0.0) {
        atoms_.push_back({t, weight});
        total += weight;
      }
    }
    for (auto& a : atoms_) a.w /= total;
  }

  Kind kind_ = Kind::atoms;
  std::vector<Atom> atoms_;
  std::size_t nodes_ = 0;
  std::map<std::string, double> params_;
  double lo_ = 0.0;
  double hi_ = 0.0;
};

inline const char* to_string(SpectralMeasure::Kind k) {
  switch (k) {
    case SpectralMeasure::Kind::atoms: return "atoms";
    case SpectralMeasure::Kind::semicircle: return "semicircle";
    case SpectralMeasure::Kind::marchenko_pastur: return "marchenko_pastur";
    case SpectralMeasure::Kind::uniform: return "uniform";
  }
  return "unknown";
}

}  // namespace spikefluct
