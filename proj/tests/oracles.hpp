#pragma once

// Dense reference implementations used only by the tests. They follow the
// defining formulas directly (no FFT, no library helpers).

#include <cmath>
#include <numbers>
#include <random>

#include "maskbd/common.hpp"

namespace oracle {

using maskbd::cplx;
using maskbd::CMatrix;
using maskbd::CVector;
using maskbd::Index;

inline Index wrap(Index i, Index n) { return ((i % n) + n) % n; }

inline CVector random_vector(Index n, std::mt19937_64& rng, bool complex = true) {
  std::normal_distribution<double> g;
  CVector v(n);
  for (Index i = 0; i < n; ++i) v[i] = cplx(g(rng), complex ? g(rng) : 0.0);
  return v;
}

inline CMatrix random_matrix(Index r, Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  CMatrix m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = cplx(g(rng), g(rng));
  return m;
}

inline double rel_err(const CMatrix& a, const CMatrix& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }
inline double rel_err(const CVector& a, const CVector& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

// F[j,k] = exp(-2 pi i jk / n)
inline CMatrix dft(Index n) {
  CMatrix F(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index k = 0; k < n; ++k)
      F(j, k) = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>((j * k) % n) / static_cast<double>(n));
  return F;
}

inline CVector convolve(const CVector& h, const CVector& x) {
  const Index n = h.size();
  CVector y = CVector::Zero(n);
  for (Index j = 0; j < n; ++j)
    for (Index k = 0; k < n; ++k) y[j] += h[k] * x[wrap(j - k, n)];
  return y;
}

// Row-major rows x cols grid.
inline CVector convolve2d(const CVector& h, const CVector& x, Index rows, Index cols) {
  CVector y = CVector::Zero(rows * cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c)
      for (Index a = 0; a < rows; ++a)
        for (Index b = 0; b < cols; ++b)
          y[r * cols + c] += h[a * cols + b] * x[wrap(r - a, rows) * cols + wrap(c - b, cols)];
  return y;
}

inline CMatrix circulant(const CVector& z, bool check) {
  const Index n = z.size();
  CMatrix C(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index k = 0; k < n; ++k) C(j, k) = z[wrap(check ? j + k : j - k, n)];
  return C;
}

// A(X) = (F .* X) D / sqrt(L)
inline CMatrix apply_A(const CMatrix& X, const CMatrix& D) {
  const CMatrix F = dft(X.rows());
  return F.cwiseProduct(X) * D / std::sqrt(static_cast<double>(D.cols()));
}

inline CMatrix apply_A_adjoint(const CMatrix& Y, const CMatrix& D) {
  const CMatrix F = dft(Y.rows());
  return F.conjugate().cwiseProduct(Y * D.adjoint()) / std::sqrt(static_cast<double>(D.cols()));
}

inline cplx inner(const CMatrix& a, const CMatrix& b) { return (a.conjugate().cwiseProduct(b)).sum(); }

}  // namespace oracle
