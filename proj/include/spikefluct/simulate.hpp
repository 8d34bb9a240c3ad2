#pragma once

// Monte Carlo for M_N = P(W/sqrt N, diag(theta, d_1, ..., d_{N-1})).
//
// Seeding: trial t of a run with master seed s draws from
// std::mt19937_64(substream_seed(s, t)), where substream_seed mixes s and t
// through splitmix64. Matrix entries are generated row by row: W_ii, then
// (xi, eta) for each j > i, W_ij = (xi + i eta) / sqrt 2.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "spikefluct/dyson.hpp"
#include "spikefluct/error.hpp"
#include "spikefluct/fluct.hpp"
#include "spikefluct/linearize.hpp"
#include "spikefluct/linmat.hpp"
#include "spikefluct/measure.hpp"
#include "spikefluct/ncalg.hpp"
#include "spikefluct/outlier.hpp"

namespace spikefluct {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t substream_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ splitmix64(index ^ 0x5851f42d4c957f2dULL));
}

struct WignerSpec {
  std::size_t n = 16;
  EntryLaw entry = EntryLaw::gue();
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  void validate() const {
    if (n < 16) throw Error(ErrorKind::invalid_input, "WignerSpec: N must be at least 16");
  }
};

inline HermitianMatrix sample_wigner(const WignerSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(substream_seed(spec.seed, spec.stream));
  const std::size_t n = spec.n;
  ComplexMatrix w(n);
  const double s = 1.0 / std::numbers::sqrt2;
  for (std::size_t i = 0; i < n; ++i) {
    w(i, i) = spec.entry.sample(rng);
    for (std::size_t j = i + 1; j < n; ++j) {
      const double xi = spec.entry.sample(rng);
      const double eta = spec.entry.sample(rng);
      w(i, j) = cplx{xi * s, eta * s};
      w(j, i) = std::conj(w(i, j));
    }
  }
  return HermitianMatrix(w);
}

enum class TailRule { explicit_values, quantile, sample };

inline const char* to_string(TailRule r) {
  switch (r) {
    case TailRule::explicit_values: return "explicit";
    case TailRule::quantile: return "quantile";
    case TailRule::sample: return "sample";
  }
  return "unknown";
}

struct ModelSpec {
  NCPolynomial polynomial = example_polynomial();
  double theta = 2.0;
  SpectralMeasure mu_a = SpectralMeasure::point_mass(0.0);
  TailRule tail_rule = TailRule::quantile;
  std::vector<double> explicit_tail;
  /// Window half-width around the predicted outlier; default from the gap.
  std::optional<double> window;

  /// d_1 .. d_{N-1}. The quantile rule uses d_i = F^{-1}((i - 1/2) / (N - 1));
  /// the sample rule draws iid from mu_a on substream 2^63 of `seed`.
  std::vector<double> tail(std::size_t n, std::uint64_t seed = 0) const {
    if (n < 2) throw Error(ErrorKind::invalid_input, "ModelSpec: N must be at least 2");
    std::vector<double> d(n - 1);
    switch (tail_rule) {
      case TailRule::explicit_values:
        if (explicit_tail.size() != n - 1) {
          throw Error(ErrorKind::dimension_mismatch, "ModelSpec: explicit tail needs N - 1 = " +
                                                         std::to_string(n - 1) + " values");
        }
        std::copy(explicit_tail.begin(), explicit_tail.end(), d.begin());
        break;
      case TailRule::quantile:
        for (std::size_t i = 0; i < n - 1; ++i)
          d[i] = mu_a.quantile((static_cast<double>(i) + 0.5) / static_cast<double>(n - 1));
        break;
      case TailRule::sample: {
        std::mt19937_64 rng(substream_seed(seed, std::uint64_t{1} << 63));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (auto& x : d) {
          double v = u(rng);
          while (v <= 0.0) v = u(rng);
          x = mu_a.quantile(v);
        }
        break;
      }
    }
    const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
    if (theta >= *lo && theta <= *hi) {
      throw Error(ErrorKind::invalid_input, "ModelSpec: theta lies inside the range of the tail");
    }
    return d;
  }
};

/// P(W / sqrt N, diag(theta, tail)), symmetrized after checking the
/// Hermitian residual.
inline HermitianMatrix build_model(const HermitianMatrix& w, const ModelSpec& spec, std::span<const double> tail) {
  const std::size_t n = w.matrix().rows();
  if (tail.size() + 1 != n) throw Error(ErrorKind::dimension_mismatch, "build_model: tail must have N - 1 entries");
  if (spec.polynomial.num_generators() != 2) {
    throw Error(ErrorKind::invalid_input, "build_model: polynomial must have two generators");
  }
  std::vector<double> diag(n);
  diag[0] = spec.theta;
  std::copy(tail.begin(), tail.end(), diag.begin() + 1);
  const std::vector<ComplexMatrix> args{w.matrix() * cplx{1.0 / std::sqrt(static_cast<double>(n))},
                                        ComplexMatrix::diagonal(std::span<const double>(diag))};
  const ComplexMatrix m = evaluate(spec.polynomial, std::span<const ComplexMatrix>(args));
  const double residual = hermitian_residual(m);
  if (residual > 1e-12 * std::max(1.0, m.max_abs())) {
    throw Error(ErrorKind::verification, "build_model: Hermitian residual " + format_double(residual));
  }
  return HermitianMatrix::symmetrized(m);
}

struct TrialResult {
  std::optional<double> lambda;
  std::size_t count = 0;
  std::uint64_t stream = 0;
};

/// Eigenvalues in (rho - window, rho + window); lambda is the largest.
inline TrialResult extract_outlier(std::span<const double> eigs, double rho, double window) {
  TrialResult r;
  for (double e : eigs) {
    if (e > rho - window && e < rho + window) {
      ++r.count;
      r.lambda = r.lambda ? std::max(*r.lambda, e) : e;
    }
  }
  return r;
}

struct TrialRun {
  std::size_t n = 0;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  double rho = 0.0;
  double rho_N = 0.0;
  double c1 = 0.0;
  double window = 0.0;
  std::vector<TrialResult> results;
  /// C1 sqrt N (lambda - rho_N) for the kept trials, in trial order.
  std::vector<double> samples;
  std::size_t excluded = 0;

  double excluded_fraction() const { return trials == 0 ? 0.0 : static_cast<double>(excluded) / trials; }
};

struct TrialOptions {
  unsigned threads = 1;
  double max_excluded_fraction = 0.2;
};

/// Independent trials on substreams 0 .. trials-1 of the template's seed.
/// Results do not depend on the thread count.
inline TrialRun run_trials(const ModelSpec& spec, const WignerSpec& wigner, std::size_t trials,
                           std::span<const double> tail, double rho, double rho_N, double c1, double window,
                           const TrialOptions& opt = {}) {
  if (!(window > 0.0)) throw Error(ErrorKind::invalid_input, "run_trials: window must be positive");
  wigner.validate();
  TrialRun run;
  run.n = wigner.n;
  run.trials = trials;
  run.seed = wigner.seed;
  run.rho = rho;
  run.rho_N = rho_N;
  run.c1 = c1;
  run.window = window;
  run.results.resize(trials);

  auto one = [&](std::size_t t) {
    WignerSpec w = wigner;
    w.stream = t;
    const HermitianMatrix m = build_model(sample_wigner(w), spec, tail);
    const auto eigs = hermitian_eigenvalues(m);
    TrialResult r = extract_outlier(eigs, rho, window);
    r.stream = t;
    run.results[t] = r;
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(std::max<std::size_t>(trials, 1))));
  if (threads == 1) {
    for (std::size_t t = 0; t < trials; ++t) one(t);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (unsigned k = 0; k < threads; ++k) {
      pool.emplace_back([&, k] {
        try {
          for (std::size_t t = k; t < trials; t += threads) one(t);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  const double scale = c1 * std::sqrt(static_cast<double>(wigner.n));
  for (const auto& r : run.results) {
    if (r.count == 1) {
      run.samples.push_back(scale * (*r.lambda - rho_N));
    } else {
      ++run.excluded;
    }
  }
  if (trials > 0 && run.excluded_fraction() > opt.max_excluded_fraction) {
    throw Error(ErrorKind::simulation, std::to_string(run.excluded) + " of " + std::to_string(trials) +
                                           " trials excluded (window count != 1)");
  }
  return run;
}

/// sup |F_n - F| over the sample.
inline double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) throw Error(ErrorKind::invalid_input, "ks_statistic: empty sample");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return std::clamp(d, 0.0, 1.0);
}

inline double ks_statistic(std::vector<double> samples, const LimitLaw& law) {
  return ks_statistic(std::move(samples), [&law](double x) { return law.cdf(x); });
}

struct GlobalLawOptions {
  /// Smoothing scale: both CDFs are compared after convolution with the
  /// Cauchy kernel of this width.
  double eta = 1e-2;
  /// Grid step as a fraction of eta.
  double step_fraction = 0.25;
  EntryLaw entry = EntryLaw::gue();
  DysonConfig cfg = {};
};

struct GlobalLawResult {
  double distance = 0.0;
  std::vector<double> grid;
  std::vector<double> predicted_cdf;
  std::vector<double> empirical_cdf;
};

/// Sup distance on a grid between the Cauchy-smoothed empirical spectral CDF
/// of one draw of M_N and the CDF integrated from -(1/pi) Im g(u + i eta) of
/// the free model whose diagonal law is (1 - 1/N) mu_a + (1/N) delta_theta.
inline GlobalLawResult global_law_check_detailed(const ModelSpec& spec, const Linearization& l, std::size_t n,
                                                 std::uint64_t seed, const GlobalLawOptions& opt = {}) {
  if (n < 500) throw Error(ErrorKind::invalid_input, "global_law_check: N must be at least 500");
  const auto tail = spec.tail(n, seed);
  WignerSpec ws{n, opt.entry, seed, 0};
  const auto eigs = hermitian_eigenvalues(build_model(sample_wigner(ws), spec, tail));

  std::vector<Atom> atoms;
  const double nn = static_cast<double>(n);
  for (const auto& a : spec.mu_a.atoms()) atoms.push_back({a.t, a.w * (nn - 1.0) / nn});
  atoms.push_back({spec.theta, 1.0 / nn});
  const auto mu = SpectralMeasure::from_atoms(std::move(atoms));

  const double eta = opt.eta;
  const double lo = eigs.front() - 1.0, hi = eigs.back() + 1.0;
  const std::size_t points = static_cast<std::size_t>(std::ceil((hi - lo) / (opt.step_fraction * eta))) + 1;
  GlobalLawResult out;
  out.grid.resize(points);
  std::vector<double> dens(points);
  std::optional<ComplexMatrix> warm;
  for (std::size_t i = 0; i < points; ++i) {
    out.grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    auto sol = dyson_at(l, mu, cplx{out.grid[i], eta}, opt.cfg, warm);
    dens[i] = -sol.G(0, 0).imag() / std::numbers::pi;
    warm = std::move(sol.omega);
  }
  out.predicted_cdf.assign(points, 0.0);
  out.empirical_cdf.assign(points, 0.0);
  const double h = out.grid[1] - out.grid[0];
  std::vector<double> slope(points);
  for (std::size_t i = 0; i < points; ++i) {
    const std::size_t a = i == 0 ? 0 : i - 1, b = i + 1 == points ? i : i + 1;
    slope[i] = (dens[b] - dens[a]) / (static_cast<double>(b - a) * h);
  }
  double trapezoid = 0.0;
  for (std::size_t i = 1; i < points; ++i) {
    trapezoid += 0.5 * (dens[i] + dens[i - 1]) * h;
    // Euler-Maclaurin end correction.
    out.predicted_cdf[i] = trapezoid - h * h / 12.0 * (slope[i] - slope[0]);
  }
  for (std::size_t i = 0; i < points; ++i) {
    double acc = 0.0;
    for (double e : eigs) acc += std::atan((out.grid[i] - e) / eta) - std::atan((lo - e) / eta);
    out.empirical_cdf[i] = acc / (std::numbers::pi * nn);
    out.distance = std::max(out.distance, std::abs(out.empirical_cdf[i] - out.predicted_cdf[i]));
  }
  return out;
}

inline double global_law_check(const ModelSpec& spec, const Linearization& l, std::size_t n, std::uint64_t seed,
                               const GlobalLawOptions& opt = {}) {
  return global_law_check_detailed(spec, l, n, seed, opt).distance;
}

/// Default window: half the distance from rho to the nearest support edge,
/// capped at 0.5.
inline double default_window(double rho, const SupportScan& scan) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& s : scan.support_intervals) {
    if (s.contains(rho)) throw Error(ErrorKind::invalid_input, "default_window: rho lies in the support");
    d = std::min({d, std::abs(rho - s.lo), std::abs(rho - s.hi)});
  }
  if (!std::isfinite(d)) throw Error(ErrorKind::invalid_input, "default_window: scan has no support");
  return std::min(0.5, 0.5 * d);
}

}  // namespace spikefluct
