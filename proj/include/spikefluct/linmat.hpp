#pragma once

// Dense complex linear algebra: the substrate for the pencil, Dyson and
// Monte Carlo code. Row-major storage throughout.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spikefluct/error.hpp"

namespace spikefluct {

using cplx = std::complex<double>;

class ComplexMatrix {
 public:
  ComplexMatrix() = default;
  explicit ComplexMatrix(std::size_t n) : ComplexMatrix(n, n) {}
  ComplexMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, cplx{0.0, 0.0}) {}

  ComplexMatrix(std::size_t rows, std::size_t cols, std::vector<cplx> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw Error(ErrorKind::dimension_mismatch, "matrix data size does not match shape");
    }
    check_finite();
  }

  ComplexMatrix(std::initializer_list<std::initializer_list<cplx>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) {
        throw Error(ErrorKind::dimension_mismatch, "ragged matrix initializer");
      }
      data_.insert(data_.end(), r.begin(), r.end());
    }
    check_finite();
  }

  static ComplexMatrix identity(std::size_t n) {
    ComplexMatrix out(n);
    for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
    return out;
  }

  static ComplexMatrix diagonal(std::span<const cplx> d) {
    ComplexMatrix out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) out(i, i) = d[i];
    return out;
  }

  static ComplexMatrix diagonal(std::span<const double> d) {
    ComplexMatrix out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) out(i, i) = d[i];
    return out;
  }

  /// e_{ij}: the matrix unit with a single 1 at (i, j).
  static ComplexMatrix unit(std::size_t n, std::size_t i, std::size_t j) {
    ComplexMatrix out(n);
    out(i, j) = 1.0;
    return out;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return rows_; }
  bool is_square() const noexcept { return rows_ == cols_; }

  cplx& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const cplx& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  cplx* row(std::size_t i) { return data_.data() + i * cols_; }
  const cplx* row(std::size_t i) const { return data_.data() + i * cols_; }

  std::span<cplx> data() { return data_; }
  std::span<const cplx> data() const { return data_; }

  ComplexMatrix& operator+=(const ComplexMatrix& o) {
    require_same_shape(o);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }
  ComplexMatrix& operator-=(const ComplexMatrix& o) {
    require_same_shape(o);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
  }
  ComplexMatrix& operator*=(cplx s) {
    for (auto& x : data_) x *= s;
    return *this;
  }

  friend ComplexMatrix operator+(ComplexMatrix a, const ComplexMatrix& b) { return a += b; }
  friend ComplexMatrix operator-(ComplexMatrix a, const ComplexMatrix& b) { return a -= b; }
  friend ComplexMatrix operator*(ComplexMatrix a, cplx s) { return a *= s; }
  friend ComplexMatrix operator*(cplx s, ComplexMatrix a) { return a *= s; }
  friend ComplexMatrix operator-(ComplexMatrix a) { return a *= -1.0; }

  friend ComplexMatrix operator*(const ComplexMatrix& a, const ComplexMatrix& b) {
    if (a.cols_ != b.rows_) {
      throw Error(ErrorKind::dimension_mismatch, "matrix product shape mismatch");
    }
    ComplexMatrix out(a.rows_, b.cols_);
    for (std::size_t i = 0; i < a.rows_; ++i) {
      cplx* orow = out.row(i);
      const cplx* arow = a.row(i);
      for (std::size_t k = 0; k < a.cols_; ++k) {
        const cplx aik = arow[k];
        if (aik == cplx{}) continue;
        const cplx* brow = b.row(k);
        for (std::size_t j = 0; j < b.cols_; ++j) orow[j] += aik * brow[j];
      }
    }
    return out;
  }

  bool operator==(const ComplexMatrix&) const = default;

  ComplexMatrix adjoint() const {
    ComplexMatrix out(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) out(j, i) = std::conj((*this)(i, j));
    return out;
  }

  ComplexMatrix transpose() const {
    ComplexMatrix out(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) out(j, i) = (*this)(i, j);
    return out;
  }

  cplx trace() const {
    cplx t{};
    for (std::size_t i = 0; i < std::min(rows_, cols_); ++i) t += (*this)(i, i);
    return t;
  }

  double frobenius_norm() const {
    double s = 0.0;
    for (const auto& x : data_) s += std::norm(x);
    return std::sqrt(s);
  }

  double max_abs() const {
    double s = 0.0;
    for (const auto& x : data_) s = std::max(s, std::abs(x));
    return s;
  }

  /// (M + M*)/2
  ComplexMatrix hermitian_part() const {
    ComplexMatrix h = *this;
    h += adjoint();
    return h *= 0.5;
  }
  /// (M - M*)/(2i), so that M = hermitian_part + i * imag_part.
  ComplexMatrix imag_part() const {
    ComplexMatrix h = *this;
    h -= adjoint();
    return h *= cplx{0.0, -0.5};
  }

  bool is_diagonal() const {
    if (!is_square()) return false;
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j)
        if (i != j && (*this)(i, j) != cplx{}) return false;
    return true;
  }

 private:
  void require_same_shape(const ComplexMatrix& o) const {
    if (rows_ != o.rows_ || cols_ != o.cols_) {
      throw Error(ErrorKind::dimension_mismatch, "matrix shapes differ");
    }
  }
  void check_finite() const {
    for (const auto& x : data_) {
      if (!std::isfinite(x.real()) || !std::isfinite(x.imag())) {
        throw Error(ErrorKind::invalid_input, "non-finite matrix entry");
      }
    }
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<cplx> data_;
};

/// max_{ij} |A_ij - conj(A_ji)|
inline double hermitian_residual(const ComplexMatrix& a) {
  if (!a.is_square()) return std::numeric_limits<double>::infinity();
  double r = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i; j < a.cols(); ++j)
      r = std::max(r, std::abs(a(i, j) - std::conj(a(j, i))));
  return r;
}

/// A square matrix with A = A*. Construction validates the residual and then
/// stores the exactly symmetrized matrix.
class HermitianMatrix {
 public:
  static constexpr double kTolerance = 1e-12;

  HermitianMatrix() = default;
  explicit HermitianMatrix(const ComplexMatrix& a) {
    const double scale = std::max(1.0, a.max_abs());
    if (hermitian_residual(a) >= kTolerance * scale) {
      throw Error(ErrorKind::invalid_input, "matrix is not Hermitian (residual " +
                                                std::to_string(hermitian_residual(a)) + ")");
    }
    m_ = a.hermitian_part();
  }
  HermitianMatrix(std::initializer_list<std::initializer_list<cplx>> rows)
      : HermitianMatrix(ComplexMatrix(rows)) {}

  /// Symmetrizes without validating; callers own the round-off budget.
  static HermitianMatrix symmetrized(const ComplexMatrix& a) {
    HermitianMatrix h;
    h.m_ = a.hermitian_part();
    return h;
  }

  static HermitianMatrix diagonal(std::span<const double> d) {
    HermitianMatrix h;
    h.m_ = ComplexMatrix::diagonal(d);
    return h;
  }

  std::size_t size() const noexcept { return m_.rows(); }
  const ComplexMatrix& matrix() const noexcept { return m_; }
  operator const ComplexMatrix&() const noexcept { return m_; }
  const cplx& operator()(std::size_t i, std::size_t j) const { return m_(i, j); }

 private:
  ComplexMatrix m_;
};

inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const cplx aij = a(i, j);
      if (aij == cplx{}) continue;
      for (std::size_t k = 0; k < b.rows(); ++k)
        for (std::size_t l = 0; l < b.cols(); ++l)
          out(i * b.rows() + k, j * b.cols() + l) = aij * b(k, l);
    }
  return out;
}

namespace detail {

inline constexpr int kMaxQlSweeps = 64;

/// Eigenvalues of the real symmetric tridiagonal matrix with diagonal d and
/// off-diagonal e (e[i] couples i and i+1; e.size() == d.size() - 1).
/// Implicit-shift QL; d is overwritten with the unsorted eigenvalues.
inline void tridiagonal_ql(std::vector<double>& d, std::vector<double> e) {
  const std::size_t n = d.size();
  if (n <= 1) return;
  e.resize(n, 0.0);
  for (std::size_t l = 0; l < n; ++l) {
    int sweeps = 0;
    std::size_t m = l;
    do {
      for (m = l; m + 1 < n; ++m) {
        const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) <= std::numeric_limits<double>::epsilon() * dd) break;
      }
      if (m != l) {
        if (++sweeps > kMaxQlSweeps) {
          throw Error(ErrorKind::non_convergence,
                      "tridiagonal QL exceeded iteration cap at index " + std::to_string(l));
        }
        double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
        double r = std::hypot(g, 1.0);
        g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
        double s = 1.0, c = 1.0, p = 0.0;
        std::size_t i = m;
        bool underflow = false;
        while (i-- > l) {
          double f = s * e[i];
          const double b = c * e[i];
          r = std::hypot(f, g);
          e[i + 1] = r;
          if (r == 0.0) {
            d[i + 1] -= p;
            e[m] = 0.0;
            underflow = true;
            break;
          }
          s = f / r;
          c = g / r;
          g = d[i + 1] - p;
          r = (d[i] - g) * s + 2.0 * c * b;
          p = s * r;
          d[i + 1] = g + p;
          g = c * r - b;
        }
        if (underflow) continue;
        d[l] -= p;
        e[l] = g;
        e[m] = 0.0;
      }
    } while (m != l);
  }
}

struct LU {
  ComplexMatrix lu;
  std::vector<std::size_t> perm;
  int sign = 1;
  double min_pivot = 0.0;
  double max_pivot = 0.0;
  bool exactly_singular = false;
};

inline LU lu_decompose(ComplexMatrix a) {
  if (!a.is_square()) throw Error(ErrorKind::dimension_mismatch, "LU requires a square matrix");
  const std::size_t n = a.rows();
  LU out;
  out.perm.resize(n);
  std::iota(out.perm.begin(), out.perm.end(), std::size_t{0});
  out.min_pivot = n == 0 ? 1.0 : std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    double best = std::abs(a(k, k));
    for (std::size_t i = k + 1; i < n; ++i) {
      const double v = std::abs(a(i, k));
      if (v > best) {
        best = v;
        piv = i;
      }
    }
    if (piv != k) {
      std::swap_ranges(a.row(k), a.row(k) + n, a.row(piv));
      std::swap(out.perm[k], out.perm[piv]);
      out.sign = -out.sign;
    }
    out.min_pivot = std::min(out.min_pivot, best);
    out.max_pivot = std::max(out.max_pivot, best);
    if (best == 0.0) {
      out.exactly_singular = true;
      continue;
    }
    const cplx inv = 1.0 / a(k, k);
    const cplx* krow = a.row(k);
    for (std::size_t i = k + 1; i < n; ++i) {
      cplx* irow = a.row(i);
      const cplx f = irow[k] * inv;
      irow[k] = f;
      if (f == cplx{}) continue;
      for (std::size_t j = k + 1; j < n; ++j) irow[j] -= f * krow[j];
    }
  }
  out.lu = std::move(a);
  return out;
}

inline cplx lu_determinant(const LU& f) {
  if (f.exactly_singular) return cplx{};
  cplx det = static_cast<double>(f.sign);
  for (std::size_t i = 0; i < f.lu.rows(); ++i) det *= f.lu(i, i);
  return det;
}

inline ComplexMatrix lu_solve(const LU& f, const ComplexMatrix& b) {
  const std::size_t n = f.lu.rows();
  const std::size_t k = b.cols();
  ComplexMatrix x(n, k);
  for (std::size_t i = 0; i < n; ++i) std::copy_n(b.row(f.perm[i]), k, x.row(i));
  for (std::size_t i = 0; i < n; ++i) {
    cplx* xi = x.row(i);
    for (std::size_t j = 0; j < i; ++j) {
      const cplx l = f.lu(i, j);
      if (l == cplx{}) continue;
      const cplx* xj = x.row(j);
      for (std::size_t c = 0; c < k; ++c) xi[c] -= l * xj[c];
    }
  }
  for (std::size_t i = n; i-- > 0;) {
    cplx* xi = x.row(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      const cplx u = f.lu(i, j);
      if (u == cplx{}) continue;
      const cplx* xj = x.row(j);
      for (std::size_t c = 0; c < k; ++c) xi[c] -= u * xj[c];
    }
    const cplx inv = 1.0 / f.lu(i, i);
    for (std::size_t c = 0; c < k; ++c) xi[c] *= inv;
  }
  return x;
}

/// Householder reduction of a Hermitian matrix to real symmetric tridiagonal
/// form. Works on the lower triangle only. Returns (diagonal, |off-diagonal|).
inline std::pair<std::vector<double>, std::vector<double>> tridiagonalize(ComplexMatrix a) {
  const std::size_t n = a.rows();
  std::vector<double> d(n, 0.0);
  std::vector<double> e(n > 0 ? n - 1 : 0, 0.0);
  std::vector<cplx> u(n), p(n);
  for (std::size_t k = 0; k + 2 < n; ++k) {
    const std::size_t len = n - k - 1;
    // x = A[k+1:, k]
    double scale = 0.0;
    for (std::size_t i = 0; i < len; ++i) scale += std::abs(a(k + 1 + i, k));
    d[k] = a(k, k).real();
    if (scale == 0.0) {
      e[k] = 0.0;
      continue;
    }
    double sigma = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      u[i] = a(k + 1 + i, k) / scale;
      sigma += std::norm(u[i]);
    }
    const double alpha = std::sqrt(sigma);
    const double x0abs = std::abs(u[0]);
    const cplx phase = x0abs == 0.0 ? cplx{1.0, 0.0} : u[0] / x0abs;
    // v = x + phase*alpha*e1; H x = -phase*alpha*e1; |H x| = alpha
    u[0] += phase * alpha;
    // |v|^2 = |x|^2 + 2 alpha |x0| + alpha^2 = 2 alpha (alpha + |x0|)
    const double vv = 2.0 * alpha * (alpha + x0abs);
    const double unit = std::sqrt(2.0 / vv);
    for (std::size_t i = 0; i < len; ++i) u[i] *= unit;  // H = I - u u*
    e[k] = alpha * scale;

    // p = A22 u using the lower triangle.
    const std::size_t off = k + 1;
    std::fill_n(p.begin(), len, cplx{});
    for (std::size_t i = 0; i < len; ++i) {
      const cplx* ai = a.row(off + i) + off;
      cplx acc = ai[i].real() * u[i];
      const cplx ui = u[i];
      for (std::size_t j = 0; j < i; ++j) {
        acc += ai[j] * u[j];
        p[j] += std::conj(ai[j]) * ui;
      }
      p[i] += acc;
    }
    // w = p - (u* p / 2) u
    cplx kfac{};
    for (std::size_t i = 0; i < len; ++i) kfac += std::conj(u[i]) * p[i];
    kfac *= 0.5;
    for (std::size_t i = 0; i < len; ++i) p[i] -= kfac * u[i];
    // A22 -= u w* + w u*   (lower triangle)
    for (std::size_t i = 0; i < len; ++i) {
      cplx* ai = a.row(off + i) + off;
      const cplx ui = u[i];
      const cplx wi = p[i];
      for (std::size_t j = 0; j <= i; ++j) {
        ai[j] -= ui * std::conj(p[j]) + wi * std::conj(u[j]);
      }
    }
  }
  if (n >= 2) {
    d[n - 2] = a(n - 2, n - 2).real();
    e[n - 2] = std::abs(a(n - 1, n - 2));
  }
  if (n >= 1) d[n - 1] = a(n - 1, n - 1).real();
  return {std::move(d), std::move(e)};
}

}  // namespace detail

/// Eigenvalues of a real symmetric tridiagonal matrix, ascending.
inline std::vector<double> tridiagonal_eigenvalues(std::vector<double> diag,
                                                   std::vector<double> offdiag) {
  if (!diag.empty() && offdiag.size() + 1 != diag.size()) {
    throw Error(ErrorKind::dimension_mismatch, "tridiagonal off-diagonal length");
  }
  detail::tridiagonal_ql(diag, std::move(offdiag));
  std::sort(diag.begin(), diag.end());
  return diag;
}

/// All eigenvalues of a Hermitian matrix, ascending.
inline std::vector<double> hermitian_eigenvalues(const HermitianMatrix& h) {
  auto [d, e] = detail::tridiagonalize(h.matrix());
  return tridiagonal_eigenvalues(std::move(d), std::move(e));
}

inline cplx determinant(const ComplexMatrix& m) {
  return detail::lu_determinant(detail::lu_decompose(m));
}

struct SolveResult {
  ComplexMatrix x;
  /// min |pivot| / max |pivot|: a cheap reciprocal-condition proxy.
  double pivot_ratio = 1.0;
};

inline SolveResult solve_with_condition(const ComplexMatrix& m, const ComplexMatrix& b) {
  if (!m.is_square() || m.rows() != b.rows()) {
    throw Error(ErrorKind::dimension_mismatch, "solve: incompatible shapes");
  }
  auto f = detail::lu_decompose(m);
  const double ratio = f.max_pivot == 0.0 ? 0.0 : f.min_pivot / f.max_pivot;
  if (f.exactly_singular ||
      ratio < static_cast<double>(m.rows()) * std::numeric_limits<double>::epsilon()) {
    throw Error(ErrorKind::singular, "matrix is singular to working precision");
  }
  return {detail::lu_solve(f, b), ratio};
}

inline ComplexMatrix solve(const ComplexMatrix& m, const ComplexMatrix& b) {
  return solve_with_condition(m, b).x;
}

inline ComplexMatrix inverse(const ComplexMatrix& m) {
  return solve(m, ComplexMatrix::identity(m.rows()));
}

namespace detail {

inline ComplexMatrix minor_matrix(const ComplexMatrix& m, std::size_t skip_row, std::size_t skip_col) {
  const std::size_t n = m.rows();
  ComplexMatrix out(n - 1);
  for (std::size_t i = 0, r = 0; i < n; ++i) {
    if (i == skip_row) continue;
    for (std::size_t j = 0, c = 0; j < n; ++j) {
      if (j == skip_col) continue;
      out(r, c++) = m(i, j);
    }
    ++r;
  }
  return out;
}

inline ComplexMatrix cofactor_adjugate(const ComplexMatrix& m) {
  const std::size_t n = m.rows();
  ComplexMatrix adj(n);
  if (n == 1) {
    adj(0, 0) = 1.0;
    return adj;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double sign = ((i + j) % 2 == 0) ? 1.0 : -1.0;
      adj(j, i) = sign * determinant(minor_matrix(m, i, j));
    }
  return adj;
}

}  // namespace detail

/// Transpose of the cofactor matrix, so that M adj(M) = det(M) I.
/// Well-conditioned inputs use det(M) M^{-1}; near-singular inputs (the case
/// at an outlier, where det vanishes) use explicit cofactors.
inline ComplexMatrix adjugate(const ComplexMatrix& m) {
  if (!m.is_square()) throw Error(ErrorKind::dimension_mismatch, "adjugate requires a square matrix");
  const std::size_t n = m.rows();
  if (n == 0) return {};
  if (n == 1) return ComplexMatrix::identity(1);
  constexpr double kCofactorThreshold = 1e-6;
  auto f = detail::lu_decompose(m);
  const double ratio = f.max_pivot == 0.0 ? 0.0 : f.min_pivot / f.max_pivot;
  if (f.exactly_singular || ratio < kCofactorThreshold) {
    return detail::cofactor_adjugate(m);
  }
  ComplexMatrix inv = detail::lu_solve(f, ComplexMatrix::identity(n));
  return inv *= detail::lu_determinant(f);
}

/// Largest singular value.
inline double operator_norm(const ComplexMatrix& m) {
  if (m.rows() == 0 || m.cols() == 0) return 0.0;
  const auto eig = hermitian_eigenvalues(HermitianMatrix::symmetrized(m.adjoint() * m));
  return std::sqrt(std::max(0.0, eig.back()));
}

inline double smallest_singular_value(const ComplexMatrix& m) {
  if (m.rows() == 0 || m.cols() == 0) return 0.0;
  const auto eig = hermitian_eigenvalues(HermitianMatrix::symmetrized(m.adjoint() * m));
  return std::sqrt(std::max(0.0, eig.front()));
}

/// |det(A+H) - det(A) - Tr(adj(A) H)|: the second-order remainder of the
/// first-order determinant expansion.
inline double det_expansion_residual(const ComplexMatrix& a, const ComplexMatrix& h) {
  if (!a.is_square() || a.rows() != h.rows() || a.cols() != h.cols()) {
    throw Error(ErrorKind::dimension_mismatch, "det_expansion_residual: shapes differ");
  }
  return std::abs(determinant(a + h) - determinant(a) - (adjugate(a) * h).trace());
}

}  // namespace spikefluct
