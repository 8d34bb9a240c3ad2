#pragma once

// Self-adjoint linearizations L = gamma (x) 1 + sum_j coeffs[j] (x) X_j of
// self-adjoint noncommutative polynomials, with the Schur-complement check
// that the top-left corner of (z e11 (x) 1 - L)^{-1} is (z - P)^{-1}.
//
// Layout convention for every pencil in this library: row index
// p * n + i addresses pencil row p, matrix index i (m blocks of size n).

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spikefluct/error.hpp"
#include "spikefluct/linmat.hpp"
#include "spikefluct/ncalg.hpp"

namespace spikefluct {

struct Linearization {
  std::size_t m = 1;
  ComplexMatrix gamma;
  /// One m x m Hermitian block per generator. For the two-variable model
  /// coeffs[0] multiplies the Wigner variable and coeffs[1] the diagonal one.
  std::vector<ComplexMatrix> coeffs;
  /// The polynomial this pencil linearizes, when known.
  std::optional<NCPolynomial> source;
  std::string id = "auto";

  const ComplexMatrix& alpha() const { return coeffs.at(0); }
  const ComplexMatrix& beta() const { return coeffs.at(1); }
  bool degenerate() const noexcept { return m == 1; }
};

namespace detail {

struct PencilBuilder {
  std::size_t m;
  std::size_t k;
  ComplexMatrix gamma;
  std::vector<ComplexMatrix> coeffs;

  PencilBuilder(std::size_t m_, std::size_t k_) : m(m_), k(k_), gamma(m_), coeffs(k_, ComplexMatrix(m_)) {}

  // Adds c at (p, q) and conj(c) at (q, p); generator == k means constant.
  void add(std::size_t p, std::size_t q, std::size_t generator, cplx c) {
    ComplexMatrix& target = generator == k ? gamma : coeffs[generator];
    if (p == q) {
      target(p, p) += c.real();
      return;
    }
    target(p, q) += c;
    target(q, p) += std::conj(c);
  }
};

inline bool is_palindrome(const Word& w) { return std::equal(w.begin(), w.begin() + w.size() / 2, w.rbegin()); }

}  // namespace detail

/// Builds a self-adjoint linearization by direct-summing one block per
/// monomial (or adjoint pair of monomials). Minimality is not attempted.
///
/// A term q = c X_{w0} ... X_{w(d-1)} is realized as q + q* through the
/// hermitized companion block [[0, Q],[Q*, 0]] of size 2(d-1), where Q is the
/// unit upper bidiagonal matrix with superdiagonal -X_{w1} .. -X_{w(d-2)}.
/// Squares c X_i^2 use a single row with Q = -sign(c).
inline Linearization linearize(const NCPolynomial& p) {
  const NCPolynomial canon = normalize(p);
  if (!is_self_adjoint(canon)) throw Error(ErrorKind::invalid_input, "linearize: polynomial is not self-adjoint");
  if (canon.degree() < 1) throw Error(ErrorKind::invalid_input, "linearize: polynomial must have degree >= 1");
  const std::size_t k = canon.num_generators();

  struct Block {
    Word word;
    cplx coeff;
    bool square;
  };
  std::vector<Block> blocks;
  std::size_t m = 1;
  for (const auto& t : canon.terms()) {
    if (t.degree() < 2) continue;
    const bool pal = detail::is_palindrome(t.word);
    if (pal && t.degree() == 2) {
      blocks.push_back({t.word, t.coeff, true});
      m += 1;
    } else if (pal) {
      blocks.push_back({t.word, 0.5 * t.coeff, false});
      m += 2 * (t.degree() - 1);
    } else {
      const Word rev(t.word.rbegin(), t.word.rend());
      if (rev < t.word) continue;  // realized together with its adjoint partner
      blocks.push_back({t.word, t.coeff, false});
      m += 2 * (t.degree() - 1);
    }
  }

  detail::PencilBuilder b(m, k);
  for (const auto& t : canon.terms()) {
    if (t.degree() == 0) b.add(0, 0, k, t.coeff);
    if (t.degree() == 1) b.add(0, 0, t.word[0], t.coeff);
  }
  std::size_t off = 1;
  for (const auto& blk : blocks) {
    const auto& w = blk.word;
    if (blk.square) {
      const double c = blk.coeff.real();
      b.add(0, off, w[0], std::sqrt(std::abs(c)));
      b.add(off, off, k, c > 0 ? -1.0 : 1.0);
      off += 1;
      continue;
    }
    const std::size_t d = w.size();
    const std::size_t s = d - 1;
    // Row of the corner: (v*, u) with v = X_{w[d-1]} e_{s-1}, u = c X_{w0} e_0.
    b.add(0, off + s - 1, w[d - 1], 1.0);
    b.add(0, off + s, w[0], blk.coeff);
    // Q' = -[[0, Q],[Q*, 0]]
    for (std::size_t r = 0; r < s; ++r) {
      b.add(off + r, off + s + r, k, -1.0);
      if (r + 1 < s) b.add(off + r, off + s + r + 1, w[r + 1], 1.0);
    }
    off += 2 * s;
  }

  Linearization out;
  out.m = m;
  out.gamma = std::move(b.gamma);
  out.coeffs = std::move(b.coeffs);
  out.source = canon;
  out.id = "auto";
  return out;
}

/// The hand-built m = 3 linearization of X2 X1 + X1 X2 + X1^2.
inline Linearization example_linearization() {
  Linearization l;
  l.m = 3;
  l.gamma = ComplexMatrix{{0, 0, 0}, {0, 0, -1}, {0, -1, 0}};
  l.coeffs = {ComplexMatrix{{0, 1, 0.5}, {1, 0, 0}, {0.5, 0, 0}}, ComplexMatrix{{0, 0, 1}, {0, 0, 0}, {1, 0, 0}}};
  l.id = "example-m3";
  NCPolynomial p(2, {Monomial{1.0, {1, 0}}, Monomial{1.0, {0, 1}}, Monomial{1.0, {0, 0}}});
  l.source = normalize(p);
  return l;
}

inline NCPolynomial example_polynomial() { return *example_linearization().source; }

/// X1 + X2: the additive spiked-Wigner model.
inline NCPolynomial additive_polynomial() {
  return NCPolynomial(2, {Monomial{1.0, {0}}, Monomial{1.0, {1}}});
}

/// z (e11 (x) I) - gamma (x) I - sum_j coeffs[j] (x) args[j]
inline ComplexMatrix evaluate_pencil(const Linearization& l, std::span<const ComplexMatrix> args, cplx z) {
  if (args.size() != l.coeffs.size()) {
    throw Error(ErrorKind::dimension_mismatch, "evaluate_pencil: argument count differs from generator count");
  }
  const std::size_t n = args.empty() ? 0 : args.front().rows();
  for (const auto& a : args)
    if (a.rows() != n || a.cols() != n) throw Error(ErrorKind::dimension_mismatch, "evaluate_pencil: argument sizes");
  const std::size_t m = l.m;
  ComplexMatrix out(m * n);
  for (std::size_t p = 0; p < m; ++p)
    for (std::size_t q = 0; q < m; ++q) {
      const cplx g = (p == 0 && q == 0 ? z : cplx{}) - l.gamma(p, q);
      if (g != cplx{})
        for (std::size_t i = 0; i < n; ++i) out(p * n + i, q * n + i) += g;
      for (std::size_t j = 0; j < args.size(); ++j) {
        const cplx c = l.coeffs[j](p, q);
        if (c == cplx{}) continue;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t jj = 0; jj < n; ++jj) out(p * n + i, q * n + jj) -= c * args[j](i, jj);
      }
    }
  return out;
}

/// Operator-norm distance between the top-left n x n block of the pencil
/// resolvent and (z - P(args))^{-1}.
inline double schur_check(const Linearization& l, std::span<const ComplexMatrix> args, cplx z) {
  if (!l.source) throw Error(ErrorKind::invalid_input, "schur_check: linearization has no source polynomial");
  const std::size_t n = args.empty() ? 0 : args.front().rows();
  const ComplexMatrix pencil = evaluate_pencil(l, args, z);
  ComplexMatrix rhs(l.m * n, n);
  for (std::size_t i = 0; i < n; ++i) rhs(i, i) = 1.0;
  const ComplexMatrix x = solve(pencil, rhs);
  ComplexMatrix corner(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) corner(i, j) = x(i, j);

  ComplexMatrix zp = evaluate(*l.source, args) * cplx{-1.0};
  for (std::size_t i = 0; i < n; ++i) zp(i, i) += z;
  return operator_norm(corner - inverse(zp));
}

inline double schur_check(const Linearization& l, std::initializer_list<ComplexMatrix> args, cplx z) {
  return schur_check(l, std::span<const ComplexMatrix>(args.begin(), args.size()), z);
}

}  // namespace spikefluct
