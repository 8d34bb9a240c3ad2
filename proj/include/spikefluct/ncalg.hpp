#pragma once

// Noncommutative polynomials in k self-adjoint indeterminates X_0 .. X_{k-1}.
// Generator indices are 0-based in code; the JSON encoding is 1-based.

#include <algorithm>
#include <complex>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spikefluct/error.hpp"
#include "spikefluct/linmat.hpp"

namespace spikefluct {

using Word = std::vector<std::size_t>;

struct Monomial {
  cplx coeff{1.0, 0.0};
  Word word;  // empty word is the constant term

  std::size_t degree() const noexcept { return word.size(); }
  bool operator==(const Monomial&) const = default;
};

class NCPolynomial {
 public:
  NCPolynomial() = default;
  explicit NCPolynomial(std::size_t num_generators) : k_(num_generators) {
    if (k_ == 0) throw Error(ErrorKind::invalid_input, "polynomial needs at least one generator");
  }
  NCPolynomial(std::size_t num_generators, std::vector<Monomial> terms)
      : NCPolynomial(num_generators) {
    for (auto& t : terms) add_term(std::move(t));
  }

  /// The single generator X_i.
  static NCPolynomial generator(std::size_t num_generators, std::size_t i) {
    return NCPolynomial(num_generators, {Monomial{1.0, {i}}});
  }
  static NCPolynomial constant(std::size_t num_generators, cplx c) {
    return NCPolynomial(num_generators, {Monomial{c, {}}});
  }

  void add_term(Monomial m) {
    for (auto g : m.word) {
      if (g >= k_) {
        throw Error(ErrorKind::invalid_input,
                    "generator index " + std::to_string(g) + " out of range for k=" + std::to_string(k_));
      }
    }
    terms_.push_back(std::move(m));
  }

  std::size_t num_generators() const noexcept { return k_; }
  const std::vector<Monomial>& terms() const noexcept { return terms_; }
  bool empty() const noexcept { return terms_.empty(); }

  std::size_t degree() const {
    std::size_t d = 0;
    for (const auto& t : terms_) d = std::max(d, t.degree());
    return d;
  }

  /// Coefficient of a word in the normalized form (0 if absent).
  cplx coefficient(const Word& w) const {
    cplx c{};
    for (const auto& t : terms_)
      if (t.word == w) c += t.coeff;
    return c;
  }

  NCPolynomial& operator+=(const NCPolynomial& o) {
    require_compatible(o);
    terms_.insert(terms_.end(), o.terms_.begin(), o.terms_.end());
    return *this;
  }
  NCPolynomial& operator*=(cplx s) {
    for (auto& t : terms_) t.coeff *= s;
    return *this;
  }
  friend NCPolynomial operator+(NCPolynomial a, const NCPolynomial& b) { return a += b; }
  friend NCPolynomial operator-(NCPolynomial a, NCPolynomial b) { return a += (b *= -1.0); }
  friend NCPolynomial operator*(cplx s, NCPolynomial a) { return a *= s; }

  /// Noncommutative product: words concatenate.
  friend NCPolynomial operator*(const NCPolynomial& a, const NCPolynomial& b) {
    a.require_compatible(b);
    NCPolynomial out(a.k_);
    for (const auto& x : a.terms_)
      for (const auto& y : b.terms_) {
        Monomial m{x.coeff * y.coeff, x.word};
        m.word.insert(m.word.end(), y.word.begin(), y.word.end());
        out.terms_.push_back(std::move(m));
      }
    return out;
  }

  /// Equality of canonical forms.
  friend bool operator==(const NCPolynomial& a, const NCPolynomial& b);

 private:
  void require_compatible(const NCPolynomial& o) const {
    if (o.k_ != k_) throw Error(ErrorKind::invalid_input, "polynomials over different generator counts");
  }

  std::size_t k_ = 1;
  std::vector<Monomial> terms_;
};

/// Canonical form: duplicate words merged, exact zeros dropped, words in
/// lexicographic order.
inline NCPolynomial normalize(const NCPolynomial& p) {
  std::map<Word, cplx> merged;
  for (const auto& t : p.terms()) merged[t.word] += t.coeff;
  std::vector<Monomial> terms;
  terms.reserve(merged.size());
  for (auto& [w, c] : merged)
    if (c != cplx{}) terms.push_back(Monomial{c, w});
  return NCPolynomial(p.num_generators(), std::move(terms));
}

inline bool operator==(const NCPolynomial& a, const NCPolynomial& b) {
  if (a.k_ != b.k_) return false;
  return normalize(a).terms_ == normalize(b).terms_;
}

/// (c X_{i1}...X_{il})* = conj(c) X_{il}...X_{i1}
inline NCPolynomial adjoint(const NCPolynomial& p) {
  std::vector<Monomial> terms;
  terms.reserve(p.terms().size());
  for (const auto& t : p.terms()) terms.push_back(Monomial{std::conj(t.coeff), Word(t.word.rbegin(), t.word.rend())});
  return normalize(NCPolynomial(p.num_generators(), std::move(terms)));
}

inline bool is_self_adjoint(const NCPolynomial& p) { return adjoint(p) == p; }

namespace detail {

// out = a * b, with a diagonal fast path on either side.
inline ComplexMatrix multiply(const ComplexMatrix& a, bool a_diag, const ComplexMatrix& b, bool b_diag) {
  const std::size_t n = a.rows();
  if (a_diag) {
    ComplexMatrix out = b;
    for (std::size_t i = 0; i < n; ++i) {
      const cplx s = a(i, i);
      cplx* r = out.row(i);
      for (std::size_t j = 0; j < n; ++j) r[j] *= s;
    }
    return out;
  }
  if (b_diag) {
    ComplexMatrix out = a;
    for (std::size_t i = 0; i < n; ++i) {
      cplx* r = out.row(i);
      for (std::size_t j = 0; j < n; ++j) r[j] *= b(j, j);
    }
    return out;
  }
  return a * b;
}

}  // namespace detail

/// Sum over monomials of coeff * args[i1] * ... * args[il].
inline ComplexMatrix evaluate(const NCPolynomial& p, std::span<const ComplexMatrix> args) {
  if (args.size() != p.num_generators()) {
    throw Error(ErrorKind::dimension_mismatch, "evaluate: expected " + std::to_string(p.num_generators()) +
                                                   " arguments, got " + std::to_string(args.size()));
  }
  if (args.empty()) throw Error(ErrorKind::dimension_mismatch, "evaluate: no arguments");
  const std::size_t n = args.front().rows();
  std::vector<bool> diag(args.size());
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i].rows() != n || args[i].cols() != n) {
      throw Error(ErrorKind::dimension_mismatch, "evaluate: arguments must be square and of equal size");
    }
    diag[i] = args[i].is_diagonal();
  }
  ComplexMatrix out(n);
  const NCPolynomial canon = normalize(p);
  for (const auto& t : canon.terms()) {
    if (t.word.empty()) {
      for (std::size_t i = 0; i < n; ++i) out(i, i) += t.coeff;
      continue;
    }
    // Right-to-left so that diagonal factors stay cheap.
    ComplexMatrix acc = args[t.word.back()];
    bool acc_diag = diag[t.word.back()];
    for (std::size_t pos = t.word.size() - 1; pos-- > 0;) {
      const auto g = t.word[pos];
      acc = detail::multiply(args[g], diag[g], acc, acc_diag);
      acc_diag = acc_diag && diag[g];
    }
    acc *= t.coeff;
    out += acc;
  }
  return out;
}

inline ComplexMatrix evaluate(const NCPolynomial& p, std::initializer_list<ComplexMatrix> args) {
  return evaluate(p, std::span<const ComplexMatrix>(args.begin(), args.size()));
}

}  // namespace spikefluct
