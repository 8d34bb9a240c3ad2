#pragma once

// JSON codecs and the model-file schema. Generator indices are 1-based in
// JSON; complex numbers are [re, im] pairs (a bare number is accepted as
// real). Unknown keys are rejected everywhere.

#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "spikefluct/error.hpp"
#include "spikefluct/fluct.hpp"
#include "spikefluct/linearize.hpp"
#include "spikefluct/linmat.hpp"
#include "spikefluct/measure.hpp"
#include "spikefluct/ncalg.hpp"
#include "spikefluct/outlier.hpp"
#include "spikefluct/simulate.hpp"

namespace spikefluct::io {

using json = nlohmann::ordered_json;

namespace detail {

[[noreturn]] inline void fail(const std::string& path, const std::string& what) {
  throw Error(ErrorKind::invalid_input, path + ": " + what);
}

inline void allow_keys(const json& j, const std::string& path, std::initializer_list<const char*> keys) {
  if (!j.is_object()) fail(path, "expected an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) fail(path, "unknown key \"" + k + "\"");
}

inline const json& require(const json& j, const std::string& path, const char* key) {
  if (!j.contains(key)) fail(path, std::string("missing key \"") + key + "\"");
  return j.at(key);
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

inline std::size_t count(const json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<long long>() < 0) fail(path, "expected a non-negative integer");
  return j.get<std::size_t>();
}

inline std::string text(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

inline std::vector<Atom> atoms(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) fail(path, "expected a non-empty array of [t, w] pairs");
  std::vector<Atom> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    if (!j[i].is_array() || j[i].size() != 2) fail(p, "expected [t, w]");
    out.push_back({number(j[i][0], p + "[0]"), number(j[i][1], p + "[1]")});
  }
  return out;
}

}  // namespace detail

inline json complex_to_json(cplx c) { return json::array({c.real(), c.imag()}); }

inline cplx complex_from_json(const json& j, const std::string& path) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (!j.is_array() || j.size() != 2) detail::fail(path, "expected a number or [re, im]");
  return {detail::number(j[0], path + "[0]"), detail::number(j[1], path + "[1]")};
}

inline json matrix_to_json(const ComplexMatrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(complex_to_json(m(i, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline ComplexMatrix matrix_from_json(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) detail::fail(path, "expected a non-empty array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  ComplexMatrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) detail::fail(path, "ragged matrix");
    for (std::size_t c = 0; c < cols; ++c)
      m(r, c) = complex_from_json(j[r][c], path + "[" + std::to_string(r) + "][" + std::to_string(c) + "]");
  }
  return m;
}

// ---------------------------------------------------------------- polynomial

inline json to_json(const NCPolynomial& p) {
  json terms = json::array();
  const NCPolynomial canon = normalize(p);
  for (const auto& t : canon.terms()) {
    json word = json::array();
    for (auto g : t.word) word.push_back(g + 1);
    terms.push_back({{"coeff", complex_to_json(t.coeff)}, {"word", word}});
  }
  return {{"generators", p.num_generators()}, {"terms", terms}};
}

inline NCPolynomial polynomial_from_json(const json& j, const std::string& path = "$.polynomial") {
  detail::allow_keys(j, path, {"generators", "terms"});
  const std::size_t k = detail::count(detail::require(j, path, "generators"), path + ".generators");
  if (k == 0) detail::fail(path + ".generators", "must be positive");
  const json& terms = detail::require(j, path, "terms");
  if (!terms.is_array()) detail::fail(path + ".terms", "expected an array");
  std::vector<Monomial> out;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const std::string p = path + ".terms[" + std::to_string(i) + "]";
    detail::allow_keys(terms[i], p, {"coeff", "word"});
    const cplx c = complex_from_json(detail::require(terms[i], p, "coeff"), p + ".coeff");
    const json& w = detail::require(terms[i], p, "word");
    if (!w.is_array()) detail::fail(p + ".word", "expected an array of generator indices");
    Word word;
    for (std::size_t s = 0; s < w.size(); ++s) {
      const std::size_t g = detail::count(w[s], p + ".word[" + std::to_string(s) + "]");
      if (g < 1 || g > k) detail::fail(p + ".word[" + std::to_string(s) + "]", "generator index out of range 1.." + std::to_string(k));
      word.push_back(g - 1);
    }
    out.push_back({c, std::move(word)});
  }
  return NCPolynomial(k, std::move(out));
}

// ------------------------------------------------------------- linearization

inline json to_json(const Linearization& l) {
  json coeffs = json::array();
  for (const auto& c : l.coeffs) coeffs.push_back(matrix_to_json(c));
  json out = {{"id", l.id}, {"m", l.m}, {"degenerate", l.degenerate()}, {"gamma", matrix_to_json(l.gamma)},
              {"coeffs", coeffs}};
  if (l.source) out["source"] = to_json(*l.source);
  return out;
}

inline Linearization linearization_from_json(const json& j, const std::string& path = "$.linearization") {
  detail::allow_keys(j, path, {"id", "m", "degenerate", "gamma", "coeffs", "source"});
  Linearization l;
  l.m = detail::count(detail::require(j, path, "m"), path + ".m");
  l.gamma = matrix_from_json(detail::require(j, path, "gamma"), path + ".gamma");
  const json& coeffs = detail::require(j, path, "coeffs");
  if (!coeffs.is_array()) detail::fail(path + ".coeffs", "expected an array of matrices");
  for (std::size_t i = 0; i < coeffs.size(); ++i)
    l.coeffs.push_back(matrix_from_json(coeffs[i], path + ".coeffs[" + std::to_string(i) + "]"));
  if (j.contains("id")) l.id = detail::text(j["id"], path + ".id");
  if (j.contains("source")) l.source = polynomial_from_json(j["source"], path + ".source");
  const auto square = [&](const ComplexMatrix& m) { return m.rows() == l.m && m.cols() == l.m; };
  if (!square(l.gamma)) detail::fail(path + ".gamma", "must be m x m");
  for (const auto& c : l.coeffs)
    if (!square(c)) detail::fail(path + ".coeffs", "every coefficient must be m x m");
  return l;
}

// ------------------------------------------------------------------- measure

inline json to_json(const SpectralMeasure& mu) {
  json out = {{"kind", to_string(mu.kind())}};
  if (mu.kind() == SpectralMeasure::Kind::atoms) {
    json a = json::array();
    for (const auto& atom : mu.atoms()) a.push_back(json::array({atom.t, atom.w}));
    out["atoms"] = a;
    return out;
  }
  for (const auto& [k, v] : mu.params()) out[k] = v;
  out["nodes"] = mu.nodes();
  return out;
}

inline SpectralMeasure measure_from_json(const json& j, const std::string& path = "$.base_measure") {
  if (!j.is_object()) detail::fail(path, "expected an object");
  const std::string kind = detail::text(detail::require(j, path, "kind"), path + ".kind");
  const auto opt = [&](const char* key, double fallback) {
    return j.contains(key) ? detail::number(j[key], path + "." + key) : fallback;
  };
  const auto nodes = [&] {
    return j.contains("nodes") ? detail::count(j["nodes"], path + ".nodes") : SpectralMeasure::kDefaultNodes;
  };
  if (kind == "atoms") {
    detail::allow_keys(j, path, {"kind", "atoms"});
    return SpectralMeasure::from_atoms(detail::atoms(detail::require(j, path, "atoms"), path + ".atoms"));
  }
  if (kind == "semicircle") {
    detail::allow_keys(j, path, {"kind", "center", "radius", "nodes"});
    return SpectralMeasure::semicircle(opt("center", 0.0), opt("radius", 2.0), nodes());
  }
  if (kind == "marchenko_pastur") {
    detail::allow_keys(j, path, {"kind", "ratio", "scale", "nodes"});
    return SpectralMeasure::marchenko_pastur(opt("ratio", 1.0), opt("scale", 1.0), nodes());
  }
  if (kind == "uniform") {
    detail::allow_keys(j, path, {"kind", "lo", "hi", "nodes"});
    return SpectralMeasure::uniform(detail::number(detail::require(j, path, "lo"), path + ".lo"),
                                    detail::number(detail::require(j, path, "hi"), path + ".hi"), nodes());
  }
  detail::fail(path + ".kind", "unknown measure kind \"" + kind + "\"");
}

// ----------------------------------------------------------------- entry law

inline json to_json(const EntryLaw& e) {
  json out = {{"kind", e.name()}};
  if (e.kind() == EntryLaw::Kind::custom_atoms) {
    json a = json::array();
    for (const auto& atom : e.atoms()) a.push_back(json::array({atom.t, atom.w}));
    out["atoms"] = a;
  }
  return out;
}

inline EntryLaw entry_law_from_json(const json& j, const std::string& path = "$.entry_law") {
  if (!j.is_object()) detail::fail(path, "expected an object");
  const std::string kind = detail::text(detail::require(j, path, "kind"), path + ".kind");
  if (kind == "gue_complex") {
    detail::allow_keys(j, path, {"kind"});
    return EntryLaw::gue();
  }
  if (kind == "uniform_sqrt3") {
    detail::allow_keys(j, path, {"kind"});
    return EntryLaw::uniform();
  }
  if (kind == "custom_atoms") {
    detail::allow_keys(j, path, {"kind", "atoms"});
    return EntryLaw::custom(detail::atoms(detail::require(j, path, "atoms"), path + ".atoms"));
  }
  detail::fail(path + ".kind", "unknown entry law \"" + kind + "\"");
}

// --------------------------------------------------------------- model file

struct ScanRange {
  std::optional<double> lo;
  std::optional<double> hi;
  ScanOptions options;
};

struct ModelConfig {
  ModelSpec spec;
  /// "auto" or "example-m3" or an explicit pencil.
  std::string linearization_kind = "auto";
  std::optional<Linearization> explicit_linearization;
  EntryLaw entry = EntryLaw::gue();
  ScanRange scan;
  double ks_threshold = 0.1;

  Linearization linearization() const {
    if (explicit_linearization) return *explicit_linearization;
    if (linearization_kind == "example-m3") {
      auto l = example_linearization();
      if (!(normalize(spec.polynomial) == *l.source)) {
        throw Error(ErrorKind::invalid_input, "linearization \"example-m3\" does not match the polynomial");
      }
      return l;
    }
    return linearize(spec.polynomial);
  }
};

inline ModelConfig model_from_json(const json& j) {
  const std::string path = "$";
  detail::allow_keys(j, path, {"polynomial", "linearization", "theta", "base_measure", "tail", "entry_law", "scan",
                               "window", "ks_threshold"});
  ModelConfig c;
  c.spec.polynomial = polynomial_from_json(detail::require(j, path, "polynomial"));
  c.spec.theta = detail::number(detail::require(j, path, "theta"), "$.theta");
  c.spec.mu_a = j.contains("base_measure") ? measure_from_json(j["base_measure"]) : SpectralMeasure::point_mass(0.0);
  if (j.contains("linearization")) {
    const json& l = j["linearization"];
    if (l.is_string()) {
      c.linearization_kind = l.get<std::string>();
      if (c.linearization_kind != "auto" && c.linearization_kind != "example-m3") {
        detail::fail("$.linearization", "expected \"auto\", \"example-m3\" or an explicit pencil");
      }
    } else {
      c.explicit_linearization = linearization_from_json(l);
      c.linearization_kind = "explicit";
    }
  }
  if (j.contains("tail")) {
    const json& t = j["tail"];
    detail::allow_keys(t, "$.tail", {"rule", "values"});
    const std::string rule = detail::text(detail::require(t, "$.tail", "rule"), "$.tail.rule");
    if (rule == "quantile") c.spec.tail_rule = TailRule::quantile;
    else if (rule == "sample") c.spec.tail_rule = TailRule::sample;
    else if (rule == "explicit") {
      c.spec.tail_rule = TailRule::explicit_values;
      const json& v = detail::require(t, "$.tail", "values");
      if (!v.is_array()) detail::fail("$.tail.values", "expected an array");
      for (std::size_t i = 0; i < v.size(); ++i)
        c.spec.explicit_tail.push_back(detail::number(v[i], "$.tail.values[" + std::to_string(i) + "]"));
    } else {
      detail::fail("$.tail.rule", "expected \"quantile\", \"sample\" or \"explicit\"");
    }
  }
  if (j.contains("entry_law")) c.entry = entry_law_from_json(j["entry_law"]);
  if (j.contains("scan")) {
    const json& s = j["scan"];
    detail::allow_keys(s, "$.scan", {"lo", "hi", "grid_points", "eta", "threshold"});
    if (s.contains("lo")) c.scan.lo = detail::number(s["lo"], "$.scan.lo");
    if (s.contains("hi")) c.scan.hi = detail::number(s["hi"], "$.scan.hi");
    if (s.contains("grid_points")) c.scan.options.grid_points = detail::count(s["grid_points"], "$.scan.grid_points");
    if (s.contains("eta")) c.scan.options.eta = detail::number(s["eta"], "$.scan.eta");
    if (s.contains("threshold")) c.scan.options.threshold = detail::number(s["threshold"], "$.scan.threshold");
  }
  if (j.contains("window")) c.spec.window = detail::number(j["window"], "$.window");
  if (j.contains("ks_threshold")) c.ks_threshold = detail::number(j["ks_threshold"], "$.ks_threshold");
  return c;
}

/// Parses JSON text; syntax errors report the byte offset.
inline json parse(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::invalid_input, origin + ": malformed JSON at byte " + std::to_string(e.byte));
  }
}

inline json read_file(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorKind::invalid_input, file + ": cannot open");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), file);
}

inline ModelConfig load_model(const std::string& file) { return model_from_json(read_file(file)); }

// ------------------------------------------------------------------ reports

inline json to_json(const SupportScan& s) {
  json support = json::array(), gaps = json::array(), refined = json::array();
  for (const auto& i : s.support_intervals) support.push_back({i.lo, i.hi});
  for (const auto& i : s.gap_intervals) gaps.push_back({i.lo, i.hi});
  for (const auto& i : s.refined_gaps) refined.push_back({i.lo, i.hi});
  std::size_t failed = 0;
  for (bool f : s.failed) failed += f;
  return {{"range", {s.grid.front(), s.grid.back()}},
          {"grid_points", s.grid.size()},
          {"eta", s.eta},
          {"threshold", s.threshold},
          {"mass", s.mass()},
          {"failed_points", failed},
          {"support_intervals", support},
          {"gap_intervals", gaps},
          {"refined_gaps", refined}};
}

inline json to_json(const Outlier& o) {
  return {{"rho", o.rho},
          {"multiplicity", o.multiplicity},
          {"residual", o.det_value_residual},
          {"gap", {o.gap.lo, o.gap.hi}},
          {"bracket", {o.bracket.lo, o.bracket.hi}},
          {"winding", o.winding},
          {"contour_radius", o.contour_radius}};
}

inline json to_json(const LimitLaw& law) {
  return {{"kind", law.kind()},
          {"params",
           {{"C", std::abs(law.shift())},
            {"C2_over_C1", law.shift()},
            {"sigma", law.sigma()},
            {"sigma2", law.sigma() * law.sigma()},
            {"variance", law.variance()}}},
          {"cdf_grid_points", LimitLaw::kGridPoints}};
}

inline json to_json(const FluctuationCoefficients& f, const LimitLaw& law) {
  json out = {{"rho", f.rho}};
  out["rho_N"] = f.rho_N ? json(*f.rho_N) : json(nullptr);
  out["C1"] = f.c1;
  out["C2"] = f.c2;
  out["v"] = f.v.total();
  out["v_term1"] = f.v.term1;
  out["v_term2"] = f.v.term2;
  out["v_tilde"] = f.v_tilde;
  out["C_m"] = matrix_to_json(f.C);
  out["entry_law"] = f.entry_law;
  out["linearization"] = f.linearization_id;
  out["limit_law"] = to_json(law);
  return out;
}

}  // namespace spikefluct::io
