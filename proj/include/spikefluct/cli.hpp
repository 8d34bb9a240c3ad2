#pragma once

// Command implementations behind the spikefluct executable. Each command is
// a function of (RunConfig) returning a process exit code:
//   0 ok, 2 input, 3 continuation, 4 multiplicity, 5 simulation, 6 verification.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "spikefluct/dyson.hpp"
#include "spikefluct/error.hpp"
#include "spikefluct/fluct.hpp"
#include "spikefluct/io.hpp"
#include "spikefluct/linearize.hpp"
#include "spikefluct/outlier.hpp"
#include "spikefluct/simulate.hpp"

namespace spikefluct::cli {

enum ExitCode : int {
  ok = 0,
  input = 2,
  continuation = 3,
  multiplicity = 4,
  simulation = 5,
  verification = 6,
};

inline int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::invalid_input:
    case ErrorKind::dimension_mismatch: return input;
    case ErrorKind::non_convergence:
    case ErrorKind::singular:
    case ErrorKind::support_detected: return continuation;
    case ErrorKind::multiplicity: return multiplicity;
    case ErrorKind::simulation: return simulation;
    case ErrorKind::verification: return verification;
  }
  return verification;
}

struct RunConfig {
  std::optional<std::string> config;
  std::string out = ".";
  std::uint64_t seed = 1;
  std::size_t n = 300;
  std::size_t trials = 200;
  double eta_min = 1e-10;
  double tol = 1e-12;
  std::optional<std::size_t> grid;
  std::optional<double> window;
  unsigned threads = 1;
  std::optional<std::size_t> outlier_index;
  double theta = 2.0;
  std::ostream* log = &std::cout;

  DysonConfig dyson() const {
    DysonConfig c;
    c.eta_floor = eta_min;
    c.tol = tol;
    c.validate();
    return c;
  }

  io::json echo() const {
    io::json j = {{"config", config ? io::json(*config) : io::json(nullptr)},
                  {"seed", seed},
                  {"n", n},
                  {"trials", trials},
                  {"eta_min", eta_min},
                  {"tol", tol},
                  {"grid", grid ? io::json(*grid) : io::json(nullptr)},
                  {"threads", threads}};
    j["window"] = window ? io::json(*window) : io::json(nullptr);
    return j;
  }
};

namespace detail {

inline void write_json(const RunConfig& rc, const std::string& name, const io::json& j) {
  std::filesystem::create_directories(rc.out);
  std::ofstream f(std::filesystem::path(rc.out) / name);
  if (!f) throw Error(ErrorKind::invalid_input, "cannot write " + name + " in " + rc.out);
  f << std::setprecision(17) << j.dump(2) << "\n";
}

inline io::ModelConfig require_model(const RunConfig& rc) {
  if (!rc.config) throw Error(ErrorKind::invalid_input, "--config is required");
  return io::load_model(*rc.config);
}

inline SupportScan scan_model(const io::ModelConfig& mc, const Linearization& l, const RunConfig& rc) {
  const double bound = spectral_bound(mc.spec.polynomial, mc.spec.theta, mc.spec.mu_a) + 0.5;
  ScanOptions opt = mc.scan.options;
  if (rc.grid) opt.grid_points = *rc.grid;
  return scan_support(l, mc.spec.mu_a, mc.scan.lo.value_or(-bound), mc.scan.hi.value_or(bound), opt, rc.dyson());
}

template <typename F>
int guarded(const RunConfig& rc, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    *rc.log << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    *rc.log << "error: " << e.what() << "\n";
    return input;
  }
}

inline std::vector<ComplexMatrix> random_hermitian_probes(std::size_t count, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<ComplexMatrix> out;
  for (std::size_t k = 0; k < count; ++k) {
    ComplexMatrix m(n);
    for (std::size_t i = 0; i < n; ++i) {
      m(i, i) = g(rng);
      for (std::size_t j = i + 1; j < n; ++j) {
        m(i, j) = cplx{g(rng), g(rng)} * (1.0 / std::sqrt(2.0));
        m(j, i) = std::conj(m(i, j));
      }
    }
    out.push_back(m * cplx{1.0 / std::sqrt(static_cast<double>(n))});
  }
  return out;
}

struct Moments {
  double mean = 0.0, variance = 0.0, skewness = 0.0, excess_kurtosis = 0.0;
};

inline Moments moments(const std::vector<double>& x) {
  Moments m;
  if (x.empty()) return m;
  const double n = static_cast<double>(x.size());
  for (double v : x) m.mean += v / n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d = v - m.mean;
    m2 += d * d / n;
    m3 += d * d * d / n;
    m4 += d * d * d * d / n;
  }
  m.variance = x.size() > 1 ? m2 * n / (n - 1.0) : 0.0;
  if (m2 > 0.0) {
    m.skewness = m3 / std::pow(m2, 1.5);
    m.excess_kurtosis = m4 / (m2 * m2) - 3.0;
  }
  return m;
}

inline io::json to_json(const Moments& m) {
  return {{"mean", m.mean}, {"variance", m.variance}, {"skewness", m.skewness}, {"excess_kurtosis", m.excess_kurtosis}};
}

inline double rel_error(double got, double want) { return std::abs(got - want) / std::max(std::abs(want), 1e-300); }

}  // namespace detail

/// Writes linearization.json with a Schur-complement residual on random
/// Hermitian probes; exit 0 iff the residual is below 1e-9.
inline int cmd_linearize(const RunConfig& rc) {
  return detail::guarded(rc, [&] {
    const auto mc = detail::require_model(rc);
    const Linearization l = mc.linearization();
    const auto probes = detail::random_hermitian_probes(2 * mc.spec.polynomial.num_generators(), 6, rc.seed);
    double residual = 0.0;
    const std::size_t k = mc.spec.polynomial.num_generators();
    for (std::size_t s = 0; s + k <= probes.size(); s += k) {
      const std::span<const ComplexMatrix> args(probes.data() + s, k);
      residual = std::max(residual, schur_check(l, args, cplx{0.3, 1.0}));
    }
    io::json report = {{"linearization", io::to_json(l)},
                       {"schur_check", {{"residual", residual}, {"z", {0.3, 1.0}}, {"probe_size", 6}, {"tolerance", 1e-9}}},
                       {"run", rc.echo()}};
    if (l.degenerate()) report["note"] = "degree-1 polynomial: m = 1, the pencil is P itself";
    detail::write_json(rc, "linearization.json", report);
    *rc.log << "m = " << l.m << (l.degenerate() ? " (degenerate)" : "") << ", schur residual = " << residual << "\n";
    return residual < 1e-9 ? ok : verification;
  });
}

struct OutlierReport {
  io::ModelConfig model;
  Linearization linearization;
  SupportScan scan;
  std::vector<Outlier> outliers;
};

inline OutlierReport compute_outliers(const RunConfig& rc) {
  OutlierReport r;
  r.model = detail::require_model(rc);
  r.linearization = r.model.linearization();
  r.scan = detail::scan_model(r.model, r.linearization, rc);
  r.outliers = find_outliers(r.linearization, r.model.spec.mu_a, r.model.spec.theta, r.scan, {}, rc.dyson());
  return r;
}

inline int cmd_outliers(const RunConfig& rc) {
  return detail::guarded(rc, [&] {
    const auto r = compute_outliers(rc);
    io::json list = io::json::array();
    for (const auto& o : r.outliers) {
      io::json j = io::to_json(o);
      j["window"] = outlier_window(o.rho, r.scan, r.outliers);
      list.push_back(j);
    }
    detail::write_json(rc, "outliers.json",
                       {{"theta", r.model.spec.theta},
                        {"linearization", r.linearization.id},
                        {"base_measure", io::to_json(r.model.spec.mu_a)},
                        {"scan", io::to_json(r.scan)},
                        {"outliers", list},
                        {"window_rule", "min(distance to support, half distance to nearest other outlier)"},
                        {"run", rc.echo()}});
    *rc.log << r.outliers.size() << " outlier(s)";
    for (const auto& o : r.outliers) *rc.log << "  rho = " << std::setprecision(12) << o.rho << " (m = " << o.multiplicity << ")";
    *rc.log << "\n";
    return ok;
  });
}

struct FluctEntry {
  Outlier outlier;
  FluctuationCoefficients coeffs;
};

inline std::vector<FluctEntry> compute_fluct(const OutlierReport& r, const RunConfig& rc) {
  std::vector<FluctEntry> out;
  const auto tail = r.model.spec.tail(rc.n, rc.seed);
  for (const auto& o : r.outliers) {
    if (o.multiplicity != 1) {
      throw Error(ErrorKind::multiplicity, "outlier at " + std::to_string(o.rho) + " has multiplicity " +
                                               std::to_string(o.multiplicity) + "; the limit law needs 1");
    }
    FluctEntry e{o, fluctuation_coefficients(r.linearization, r.model.spec.mu_a, r.model.spec.theta, o.rho,
                                             r.model.entry, rc.dyson())};
    e.coeffs.rho_N = find_rho_N(r.linearization, tail, r.model.spec.theta, o.rho,
                                outlier_window(o.rho, r.scan, r.outliers), rc.dyson());
    out.push_back(std::move(e));
  }
  return out;
}

inline int cmd_fluct(const RunConfig& rc) {
  return detail::guarded(rc, [&] {
    const auto r = compute_outliers(rc);
    const auto entries = compute_fluct(r, rc);
    io::json list = io::json::array();
    for (const auto& e : entries) {
      const LimitLaw law = limit_law(e.coeffs, r.model.entry);
      io::json j = io::to_json(e.coeffs, law);
      j["C1_sign"] = e.coeffs.c1 < 0 ? "negative" : "positive";
      j["multiplicity"] = e.outlier.multiplicity;
      list.push_back(j);
      *rc.log << "rho = " << std::setprecision(12) << e.coeffs.rho << "  C1 = " << e.coeffs.c1 << "  C2 = " << e.coeffs.c2
              << "  v = " << e.coeffs.v.total() << "  law = " << law.kind() << "\n";
    }
    io::json report = {{"theta", r.model.spec.theta},
                       {"entry_law", io::to_json(r.model.entry)},
                       {"rho_N_tail", {{"rule", to_string(r.model.spec.tail_rule)}, {"N", rc.n}}},
                       {"coefficients", list},
                       {"run", rc.echo()}};
    if (!r.model.entry.poincare()) report["annotation"] = "entry law is discrete: outside the Poincare hypothesis";
    detail::write_json(rc, "coefficients.json", report);
    return ok;
  });
}

inline int cmd_simulate(const RunConfig& rc) {
  return detail::guarded(rc, [&] {
    const auto r = compute_outliers(rc);
    if (r.outliers.empty()) throw Error(ErrorKind::invalid_input, "no outlier to simulate");
    std::size_t pick = 0;
    if (rc.outlier_index) {
      pick = *rc.outlier_index;
      if (pick >= r.outliers.size()) throw Error(ErrorKind::invalid_input, "--outlier index out of range");
    } else {
      double best = -1.0;
      for (std::size_t i = 0; i < r.outliers.size(); ++i) {
        const double w = default_window(r.outliers[i].rho, r.scan);
        if (w > best) best = w, pick = i;
      }
    }
    const Outlier& o = r.outliers[pick];
    if (o.multiplicity != 1) throw Error(ErrorKind::multiplicity, "selected outlier has multiplicity > 1");
    const auto& spec = r.model.spec;
    const auto coeffs = fluctuation_coefficients(r.linearization, spec.mu_a, spec.theta, o.rho, r.model.entry, rc.dyson());
    const auto tail = spec.tail(rc.n, rc.seed);
    const double rho_n = find_rho_N(r.linearization, tail, spec.theta, o.rho, outlier_window(o.rho, r.scan, r.outliers),
                                    rc.dyson());
    const double window = rc.window ? *rc.window : spec.window ? *spec.window : default_window(o.rho, r.scan);
    const WignerSpec ws{rc.n, r.model.entry, rc.seed, 0};
    TrialOptions topt;
    topt.threads = rc.threads;
    const TrialRun run = run_trials(spec, ws, rc.trials, tail, o.rho, rho_n, coeffs.c1, window, topt);

    std::filesystem::create_directories(rc.out);
    {
      std::ofstream csv(std::filesystem::path(rc.out) / "samples.csv");
      csv << std::setprecision(17);
      csv << "# N=" << rc.n << ",trials=" << rc.trials << ",seed=" << rc.seed << ",rho=" << o.rho << ",rho_N=" << rho_n
          << ",C1=" << coeffs.c1 << "\n";
      csv << "statistic\n";
      for (double s : run.samples) csv << s << "\n";
    }

    const LimitLaw law = limit_law(coeffs, r.model.entry);
    std::vector<double> normalized;
    for (double s : run.samples) normalized.push_back(s / coeffs.c1);
    io::json report = {{"N", rc.n},
                       {"trials", rc.trials},
                       {"seed", rc.seed},
                       {"rho", o.rho},
                       {"rho_N", rho_n},
                       {"C1", coeffs.c1},
                       {"C2", coeffs.c2},
                       {"v", coeffs.v.total()},
                       {"window", window},
                       {"kept", run.samples.size()},
                       {"excluded", run.excluded},
                       {"excluded_fraction", run.excluded_fraction()},
                       {"predicted_law", io::to_json(law)},
                       {"ks_threshold", r.model.ks_threshold},
                       {"run", rc.echo()}};
    bool pass = true;
    if (!normalized.empty()) {
      const double ks = ks_statistic(normalized, law);
      const double sd = std::sqrt(law.variance());
      const double ks_gauss = ks_statistic(normalized, [sd](double x) { return normal_cdf(x / sd); });
      report["moments"] = detail::to_json(detail::moments(normalized));
      report["predicted_variance"] = law.variance();
      report["ks"] = ks;
      report["ks_matched_gaussian"] = ks_gauss;
      pass = ks < r.model.ks_threshold;
      *rc.log << "kept " << run.samples.size() << "/" << rc.trials << "  KS = " << ks
              << "  KS(matched Gaussian) = " << ks_gauss << (pass ? "  PASS" : "  FAIL") << "\n";
    } else {
      report["ks"] = nullptr;
      *rc.log << "no samples\n";
    }
    if (!r.model.entry.poincare()) report["annotation"] = "entry law is discrete: outside the Poincare hypothesis";
    detail::write_json(rc, "report.json", report);
    return pass ? ok : verification;
  });
}

/// Compares the general machinery on the hand-built pencil with the closed
/// forms, relative tolerance 1e-6.
inline int cmd_verify_example(const RunConfig& rc) {
  return detail::guarded(rc, [&] {
    const double theta = rc.theta;
    if (theta == 0.0) throw Error(ErrorKind::invalid_input, "--theta must be nonzero");
    const auto cf = example_closed_forms(theta);
    const Linearization l = example_linearization();
    const auto mu = SpectralMeasure::point_mass(0.0);
    const double bound = spectral_bound(*l.source, theta, mu) + 0.5;
    ScanOptions sopt;
    sopt.grid_points = rc.grid.value_or(1000);
    const auto scan = scan_support(l, mu, -bound, bound, sopt, rc.dyson());
    const auto outs = find_outliers(l, mu, theta, scan, {}, rc.dyson());

    std::vector<ExampleRoot> expected{cf.minus};
    if (cf.plus) expected.push_back(*cf.plus);
    io::json rows = io::json::array();
    bool pass = outs.size() == expected.size();
    std::ostream& log = *rc.log;
    log << std::setprecision(10);
    log << "theta = " << theta << ": " << outs.size() << " outlier(s) found, " << expected.size() << " expected\n";
    if (cf.plus_degenerate) log << "note: theta^2 = 2, the positive root coincides with the support edge 4\n";
    for (const auto& want : expected) {
      const Outlier* got = nullptr;
      for (const auto& o : outs)
        if (!got || std::abs(o.rho - want.rho) < std::abs(got->rho - want.rho)) got = &o;
      if (!got) {
        pass = false;
        continue;
      }
      const auto sol = dyson_continue_real(l, mu, got->rho, rc.dyson());
      const auto f = fluctuation_coefficients(l, mu, theta, got->rho, EntryLaw::uniform(), rc.dyson());
      const std::vector<std::tuple<std::string, double, double>> q{{"rho", got->rho, want.rho},
                                                                   {"g", sol.G(0, 0).real(), want.g},
                                                                   {"C1", f.c1, want.c1},
                                                                   {"C2", f.c2, want.c2},
                                                                   {"v", f.v.total(), want.v}};
      for (const auto& [name, a, b] : q) {
        const double rel = detail::rel_error(a, b);
        const bool okq = rel < 1e-6;
        pass = pass && okq;
        rows.push_back({{"root", want.rho < 0 ? "minus" : "plus"},
                        {"quantity", name},
                        {"machinery", a},
                        {"closed_form", b},
                        {"rel_error", rel},
                        {"pass", okq}});
        log << "  " << std::left << std::setw(6) << (want.rho < 0 ? "minus" : "plus") << std::setw(4) << name
            << std::right << std::setw(20) << a << std::setw(20) << b << "  rel " << std::scientific
            << std::setprecision(2) << rel << std::defaultfloat << std::setprecision(10) << (okq ? "  PASS" : "  FAIL")
            << "\n";
      }
    }
    io::json report = {{"theta", theta},
                       {"outliers_found", outs.size()},
                       {"outliers_expected", expected.size()},
                       {"plus_degenerate", cf.plus_degenerate},
                       {"rows", rows},
                       {"pass", pass},
                       {"tolerance", 1e-6}};
    if (rc.out != ".") detail::write_json(rc, "verify_example.json", report);
    log << (pass ? "PASS" : "FAIL") << "\n";
    return pass ? ok : verification;
  });
}

}  // namespace spikefluct::cli
