// Copyright 2026 The dpmesh Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "dpmesh/error.hpp"
#include "dpmesh/matrix.hpp"

namespace dpmesh {

struct SvdResult {
  Matrix u;                   // m x k, orthonormal columns where sigma > 0
  std::vector<double> sigma;  // k = min(m, n), descending
  Matrix v;                   // n x k, orthonormal columns

  double max_sigma() const { return sigma.empty() ? 0.0 : sigma.front(); }

  /// Cutoff tau = max(m, n) * eps_machine * sigma_max.
  double default_cutoff(std::size_t m, std::size_t n) const {
    return static_cast<double>(std::max(m, n)) *
           std::numeric_limits<double>::epsilon() * max_sigma();
  }
};

namespace detail {

/// One-sided Jacobi SVD for m >= n. Orthogonalizes the columns of a working
/// copy; singular values are the final column norms.
inline SvdResult jacobi_svd_tall(const Matrix& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Matrix b = a;
  Matrix v = Matrix::identity(n);

  const double tol = 1e-13;
  const int max_sweeps = 64;
  // Columns this far below the matrix scale are numerically zero: their
  // direction is cancellation residue, so rotating against them never
  // settles, and any singular value read off them would be junk. They are
  // frozen here and zeroed at extraction.
  const double frob = a.frobenius_norm();
  const double dead = (1e-13 * frob) * (1e-13 * frob);
  bool converged = false;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    converged = true;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double bp = b(i, p), bq = b(i, q);
          alpha += bp * bp;
          beta += bq * bq;
          gamma += bp * bq;
        }
        if (alpha <= dead || beta <= dead) continue;
        if (std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        converged = false;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double cs = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = cs * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double bp = b(i, p), bq = b(i, q);
          b(i, p) = cs * bp - sn * bq;
          b(i, q) = sn * bp + cs * bq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = cs * vp - sn * vq;
          v(i, q) = sn * vp + cs * vq;
        }
      }
    }
  }
  require(converged, errc::svd_no_convergence, "Jacobi SVD did not converge");

  SvdResult out;
  out.sigma.resize(n);
  std::vector<std::size_t> order(n);
  for (std::size_t j = 0; j < n; ++j) {
    double norm = 0.0;
    for (std::size_t i = 0; i < m; ++i) norm += b(i, j) * b(i, j);
    out.sigma[j] = norm <= dead ? 0.0 : std::sqrt(norm);
    order[j] = j;
  }
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return out.sigma[x] > out.sigma[y]; });

  Matrix u(m, n), vs(n, n);
  std::vector<double> sorted(n);
  for (std::size_t jj = 0; jj < n; ++jj) {
    const std::size_t j = order[jj];
    sorted[jj] = out.sigma[j];
    const double inv = out.sigma[j] > 0.0 ? 1.0 / out.sigma[j] : 0.0;
    for (std::size_t i = 0; i < m; ++i) u(i, jj) = b(i, j) * inv;
    for (std::size_t i = 0; i < n; ++i) vs(i, jj) = v(i, j);
  }
  out.sigma = std::move(sorted);
  out.u = std::move(u);
  out.v = std::move(vs);
  return out;
}

}  // namespace detail

/// Economy SVD, A = U diag(sigma) V^T.
inline SvdResult svd(const Matrix& a) {
  require(!a.empty(), errc::shape_mismatch, "svd of empty matrix");
  if (a.rows() >= a.cols()) return detail::jacobi_svd_tall(a);
  SvdResult t = detail::jacobi_svd_tall(a.transpose());
  std::swap(t.u, t.v);
  return t;
}

/// Numerical rank with the pseudoinverse cutoff.
inline std::size_t rank(const Matrix& a) {
  if (a.empty()) return 0;
  const SvdResult s = svd(a);
  const double tau = s.default_cutoff(a.rows(), a.cols());
  std::size_t r = 0;
  for (double sv : s.sigma)
    if (sv > tau) ++r;
  return r;
}

/// Moore-Penrose pseudoinverse via SVD with singular-value cutoff
/// tau = max(m, n) * eps_machine * sigma_max.
inline Matrix pseudoinverse(const Matrix& b) {
  require(!b.empty(), errc::shape_mismatch, "pseudoinverse of empty matrix");
  const SvdResult s = svd(b);
  const double tau = s.default_cutoff(b.rows(), b.cols());
  // pinv = sum_{sigma_j > tau} v_j sigma_j^{-1} u_j^T
  Matrix out(b.cols(), b.rows());
  for (std::size_t j = 0; j < s.sigma.size(); ++j) {
    if (s.sigma[j] <= tau) continue;
    const double inv = 1.0 / s.sigma[j];
    for (std::size_t i = 0; i < b.cols(); ++i) {
      const double vij = s.v(i, j) * inv;
      if (vij == 0.0) continue;
      for (std::size_t k = 0; k < b.rows(); ++k) out(i, k) += vij * s.u(k, j);
    }
  }
  return out;
}

/// Orthogonal projector B^+ B onto the row space of B; symmetric idempotent.
inline Matrix projector(const Matrix& b) {
  require(!b.empty(), errc::shape_mismatch, "projector of empty matrix");
  const SvdResult s = svd(b);
  const double tau = s.default_cutoff(b.rows(), b.cols());
  Matrix p(b.cols(), b.cols());
  for (std::size_t j = 0; j < s.sigma.size(); ++j) {
    if (s.sigma[j] <= tau) continue;
    for (std::size_t i = 0; i < b.cols(); ++i) {
      const double vij = s.v(i, j);
      if (vij == 0.0) continue;
      for (std::size_t k = 0; k < b.cols(); ++k) p(i, k) += vij * s.v(k, j);
    }
  }
  return p;
}

/// Cholesky factor in the H = L^T L convention (L lower triangular).
/// Computed as a standard lower Cholesky of the index-reversed matrix.
/// Pivots in [-tol, 0] with tol = 1e-10 * ||H||_F are clamped to zero so
/// that semidefinite inputs from accumulated roundoff still factor.
inline LowerTriangular cholesky(const Matrix& h) {
  require(h.rows() == h.cols() && !h.empty(), errc::shape_mismatch,
          "cholesky needs a square matrix");
  const std::size_t n = h.rows();
  const double scale = h.frobenius_norm();
  const double tol = 1e-10 * std::max(scale, 1e-300);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      require(std::abs(h(i, j) - h(j, i)) <= tol, errc::not_symmetric,
              "cholesky input is not symmetric");

  // Reverse rows and columns, factor as M M^T, reverse back: the reversed
  // lower factor is the upper factor U with H = U U^T, and L = U^T.
  Matrix rev(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) rev(i, j) = h(n - 1 - i, n - 1 - j);

  Matrix m(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    double pivot = rev(k, k);
    for (std::size_t s = 0; s < k; ++s) pivot -= m(k, s) * m(k, s);
    require(pivot >= -tol, errc::not_psd, "cholesky pivot below tolerance");
    if (pivot <= tol) {
      m(k, k) = 0.0;
      continue;  // semidefinite direction; leave the column at zero
    }
    m(k, k) = std::sqrt(pivot);
    for (std::size_t i = k + 1; i < n; ++i) {
      double sum = rev(i, k);
      for (std::size_t s = 0; s < k; ++s) sum -= m(i, s) * m(k, s);
      m(i, k) = sum / m(k, k);
    }
  }

  LowerTriangular l(n);
  // L[i][j] = U[j][i] = M[n-1-j][n-1-i]
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) l.at(i, j) = m(n - 1 - j, n - 1 - i);
  return l;
}

struct LqResult {
  LowerTriangular l;  // r x r, invertible
  Matrix q;           // r x c with orthonormal rows, B = L * Q
};

/// LQ decomposition of a full-row-rank B (rows <= cols): B = L Q with L
/// square lower triangular and Q Q^T = I. Computed as a Householder QR of
/// B^T with the diagonal of R forced nonnegative.
inline LqResult lq_decompose(const Matrix& b) {
  require(!b.empty(), errc::shape_mismatch, "lq of empty matrix");
  require(b.rows() <= b.cols(), errc::shape_mismatch, "lq needs rows <= cols");
  const std::size_t m = b.cols(), n = b.rows();  // working on B^T: m x n
  Matrix a = b.transpose();

  struct Reflector {
    std::size_t k;
    std::vector<double> v;
    double beta;
  };
  std::vector<Reflector> reflectors;
  reflectors.reserve(n);

  for (std::size_t k = 0; k < n; ++k) {
    double norm = 0.0;
    for (std::size_t i = k; i < m; ++i) norm += a(i, k) * a(i, k);
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    const double alpha = a(k, k) >= 0.0 ? -norm : norm;
    std::vector<double> v(m - k);
    v[0] = a(k, k) - alpha;
    for (std::size_t i = k + 1; i < m; ++i) v[i - k] = a(i, k);
    double vnorm2 = 0.0;
    for (double x : v) vnorm2 += x * x;
    a(k, k) = alpha;
    for (std::size_t i = k + 1; i < m; ++i) a(i, k) = 0.0;
    if (vnorm2 == 0.0) continue;
    const double beta = 2.0 / vnorm2;
    for (std::size_t j = k + 1; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t i = k; i < m; ++i) dot += v[i - k] * a(i, j);
      dot *= beta;
      for (std::size_t i = k; i < m; ++i) a(i, j) -= dot * v[i - k];
    }
    reflectors.push_back({k, std::move(v), beta});
  }

  // Build thin Q (m x n) by applying reflectors to the identity block.
  Matrix q_thin(m, n);
  for (std::size_t j = 0; j < n; ++j) q_thin(j, j) = 1.0;
  for (auto it = reflectors.rbegin(); it != reflectors.rend(); ++it) {
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t i = it->k; i < m; ++i) dot += it->v[i - it->k] * q_thin(i, j);
      dot *= it->beta;
      for (std::size_t i = it->k; i < m; ++i) q_thin(i, j) -= dot * it->v[i - it->k];
    }
  }

  // Normalize signs so diag(L) >= 0, then check rank.
  const double rank_tol = 1e-12 * std::max(1.0, b.frobenius_norm());
  LowerTriangular l(n);
  Matrix q(n, m);
  for (std::size_t k = 0; k < n; ++k) {
    require(std::abs(a(k, k)) > rank_tol, errc::rank_deficient,
            "lq: input is rank deficient");
    const double sign = a(k, k) < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = k; j < n; ++j) l.at(j, k) = sign * a(k, j);
    for (std::size_t i = 0; i < m; ++i) q(k, i) = sign * q_thin(i, k);
  }
  return {std::move(l), std::move(q)};
}

}  // namespace dpmesh
