#pragma once

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "spikefluct/linearize.hpp"
#include "spikefluct/linmat.hpp"
#include "spikefluct/measure.hpp"
#include "spikefluct/ncalg.hpp"

namespace testing_support {

using spikefluct::ComplexMatrix;
using spikefluct::cplx;

inline ComplexMatrix random_matrix(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  ComplexMatrix m(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m(i, j) = cplx{g(rng), g(rng)};
  return m;
}

inline ComplexMatrix random_hermitian(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  const ComplexMatrix a = random_matrix(n, rng, scale);
  return (a + a.adjoint()) * cplx{0.5};
}

// Haar-ish unitary from Gram-Schmidt on a complex Gaussian matrix.
inline ComplexMatrix random_unitary(std::size_t n, std::mt19937_64& rng) {
  ComplexMatrix q = random_matrix(n, rng);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      cplx dot{};
      for (std::size_t i = 0; i < n; ++i) dot += std::conj(q(i, k)) * q(i, j);
      for (std::size_t i = 0; i < n; ++i) q(i, j) -= dot * q(i, k);
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) norm += std::norm(q(i, j));
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < n; ++i) q(i, j) /= norm;
  }
  return q;
}

// Self-adjoint polynomial in k generators: a random polynomial plus its adjoint.
inline spikefluct::NCPolynomial random_self_adjoint(std::size_t k, std::size_t max_degree, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> deg(0, max_degree), gen(0, k - 1), count(1, 4);
  std::normal_distribution<double> c(0.0, 1.0);
  spikefluct::NCPolynomial p(k);
  const std::size_t terms = count(rng);
  bool has_top = false;
  for (std::size_t t = 0; t < terms || !has_top; ++t) {
    spikefluct::Monomial m;
    m.coeff = cplx{c(rng), c(rng)};
    const std::size_t d = (t + 1 >= terms && !has_top) ? max_degree : deg(rng);
    has_top = has_top || d == max_degree;
    for (std::size_t i = 0; i < d; ++i) m.word.push_back(gen(rng));
    p.add_term(m);
  }
  return spikefluct::normalize(p + spikefluct::adjoint(p));
}

struct DysonProbe {
  spikefluct::Linearization l;
  spikefluct::SpectralMeasure mu;
  ComplexMatrix b;
};

// Alternates between raw Hermitian triples (gamma, alpha, beta) and
// linearizations of random self-adjoint polynomials; mu is a random atomic
// law or a named density; Im b = B B^* + c I with c in [0.2, 1].
inline DysonProbe random_dyson_probe(std::mt19937_64& rng, std::size_t index) {
  using namespace spikefluct;
  DysonProbe p;
  if (index % 2 == 0) {
    const std::size_t m = 1 + index / 2 % 4;
    p.l.m = m;
    p.l.gamma = random_hermitian(m, rng);
    p.l.coeffs = {random_hermitian(m, rng, 0.7), random_hermitian(m, rng, 0.7)};
    p.l.id = "random";
  } else {
    p.l = linearize(random_self_adjoint(2, 1 + index / 2 % 3, rng));
  }
  std::uniform_real_distribution<double> u(-1.5, 1.5), w(0.1, 1.0), c(0.2, 1.0);
  switch (index % 5) {
    case 0: p.mu = SpectralMeasure::semicircle(u(rng), 1.0 + w(rng), 64); break;
    case 1: p.mu = SpectralMeasure::uniform(-1.0, 1.0 + w(rng), 64); break;
    default: {
      std::vector<Atom> atoms;
      for (std::size_t k = 0; k < 1 + index % 4; ++k) atoms.push_back({u(rng), w(rng)});
      p.mu = SpectralMeasure::from_atoms(atoms);
    }
  }
  const std::size_t m = p.l.m;
  const ComplexMatrix g = random_matrix(m, rng, 0.5);
  ComplexMatrix im = g * g.adjoint();
  for (std::size_t i = 0; i < m; ++i) im(i, i) += c(rng);
  p.b = random_hermitian(m, rng) + im * cplx{0.0, 1.0};
  return p;
}

inline double max_entry_diff(const ComplexMatrix& a, const ComplexMatrix& b) { return (a - b).max_abs(); }

}  // namespace testing_support
