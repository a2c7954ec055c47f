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

#include <doctest.h>

#include <cstdlib>

#include "dpmesh/csv.hpp"
#include "dpmesh/linalg.hpp"
#include "dpmesh/matrix.hpp"
#include "test_util.hpp"

using namespace dpmesh;
using namespace dpmesh::testing;

TEST_CASE("cholesky: diagonal and identity cases") {
  const auto l = cholesky(Matrix::from_rows({{4, 0}, {0, 9}}));
  CHECK(l(0, 0) == doctest::Approx(2.0));
  CHECK(l(1, 1) == doctest::Approx(3.0));
  CHECK(l(1, 0) == 0.0);

  const auto id = cholesky(Matrix::identity(5));
  CHECK(max_abs_diff(id.mat(), Matrix::identity(5)) < 1e-14);
}

TEST_CASE("cholesky: L^T L reconstructs the input") {
  const Matrix h = Matrix::from_rows({{1, 1}, {1, 2}});
  const auto l = cholesky(h);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = i + 1; j < 2; ++j) CHECK(l(i, j) == 0.0);
  CHECK(rel_err(matmul_tn(l.mat(), l.mat()), h) < 1e-12);
}

TEST_CASE("cholesky: random PSD up to dim 200") {
  for (std::size_t n : {3u, 17u, 60u, 200u}) {
    CounterRng rng(n);
    const Matrix h = random_psd(rng, n);
    const auto l = cholesky(h);
    CHECK(rel_err(matmul_tn(l.mat(), l.mat()), h) < 1e-8);
  }
}

TEST_CASE("cholesky: rejects asymmetric and indefinite input") {
  CHECK_THROWS_AS(cholesky(Matrix::from_rows({{1, 2}, {0, 1}})), Error);
  try {
    cholesky(Matrix::from_rows({{1, 0}, {0, -1}}));
    FAIL("expected NotPSD");
  } catch (const Error& e) {
    CHECK(e.code() == errc::not_psd);
  }
}

TEST_CASE("cholesky: semidefinite input with tiny negative pivot is clamped") {
  // rank-1 PSD plus a rounding-scale perturbation
  Matrix h = Matrix::from_rows({{1, 1}, {1, 1}});
  h(1, 1) -= 1e-14;
  const auto l = cholesky(h);
  CHECK(rel_err(matmul_tn(l.mat(), l.mat()), Matrix::from_rows({{1, 1}, {1, 1}})) < 1e-7);
}

TEST_CASE("pseudoinverse: closed forms") {
  const Matrix p = pseudoinverse(Matrix::from_rows({{1, 0}, {0, 0}}));
  CHECK(max_abs_diff(p, Matrix::from_rows({{1, 0}, {0, 0}})) < 1e-12);

  const Matrix inv = pseudoinverse(Matrix::from_rows({{2, 0}, {0, 4}}));
  CHECK(max_abs_diff(inv, Matrix::from_rows({{0.5, 0}, {0, 0.25}})) < 1e-12);
}

TEST_CASE("pseudoinverse: tall full-column-rank gives a left inverse") {
  CounterRng rng(11);
  const Matrix b = random_full_rank(rng, 4, 2);
  const Matrix left = pseudoinverse(b) * b;
  CHECK(max_abs_diff(left, Matrix::identity(2)) < 1e-8);
}

TEST_CASE("pseudoinverse: Penrose identities on random shapes") {
  int case_id = 0;
  for (auto [r, c] : {std::pair<int, int>{5, 5}, {7, 3}, {3, 7}, {12, 12}}) {
    CounterRng rng(100 + case_id++);
    Matrix b = random_matrix(rng, r, c);
    if (r == 12) {
      // make it rank deficient: duplicate some columns
      for (int i = 0; i < r; ++i) {
        b(i, 11) = b(i, 0);
        b(i, 10) = 2.0 * b(i, 1) - b(i, 2);
      }
    }
    const Matrix bp = pseudoinverse(b);
    CHECK(rel_err(b * bp * b, b) < 1e-8);
    CHECK(rel_err(bp * b * bp, bp) < 1e-8);
    CHECK(max_abs_diff(b * bp, (b * bp).transpose()) < 1e-8);
    CHECK(max_abs_diff(bp * b, (bp * b).transpose()) < 1e-8);
  }
}

TEST_CASE("projector: square full-rank collapses to identity") {
  CounterRng rng(21);
  const Matrix b = random_full_rank(rng, 6, 6);
  CHECK(max_abs_diff(projector(b), Matrix::identity(6)) < 1e-8);
}

TEST_CASE("projector: rank-1 row and zero columns") {
  const Matrix p = projector(Matrix::from_rows({{1, 1}}));
  CHECK(max_abs_diff(p, Matrix::from_rows({{0.5, 0.5}, {0.5, 0.5}})) < 1e-12);

  // zero column in B -> zero row/column in the projector
  const Matrix q = projector(Matrix::from_rows({{1, 0, 2}, {0, 0, 1}}));
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(q(1, k) == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(q(k, 1) == doctest::Approx(0.0).epsilon(1e-10));
  }
}

TEST_CASE("projector: symmetric idempotent on random input") {
  for (int seed = 0; seed < 5; ++seed) {
    CounterRng rng(300 + seed);
    const Matrix b = random_matrix(rng, 4, 9);
    const Matrix p = projector(b);
    CHECK(max_abs_diff(p, p.transpose()) < 1e-8);
    CHECK(rel_err(p * p, p) < 1e-8);
  }
}

TEST_CASE("kron: block and scalar cases") {
  CounterRng rng(31);
  const Matrix w = random_matrix(rng, 2, 2);
  const Matrix block = kron(Matrix::identity(2), w);
  CHECK(max_abs_diff(block.block(0, 0, 2, 2), w) < 1e-15);
  CHECK(max_abs_diff(block.block(2, 2, 2, 2), w) < 1e-15);
  CHECK(block(0, 2) == 0.0);

  const Matrix scaled = kron(Matrix::from_rows({{2}}), w);
  CHECK(max_abs_diff(scaled, 2.0 * w) < 1e-15);
  CHECK(max_abs_diff(kron(w, Matrix::identity(1)), w) < 1e-15);
}

TEST_CASE("kron: oversized result trips the memory budget") {
  setenv("DPMESH_MEM_BUDGET_MB", "1", 1);
  try {
    kron(Matrix(500, 500, 1.0), Matrix(500, 500, 1.0));
    FAIL("expected OutOfMemory");
  } catch (const Error& e) {
    CHECK(e.code() == errc::out_of_memory);
  }
  unsetenv("DPMESH_MEM_BUDGET_MB");
}

TEST_CASE("commutation: identity, swap, inverse pairing") {
  CHECK(max_abs_diff(commutation(1, 4), Matrix::identity(4)) < 1e-15);

  const Matrix p22 = commutation(2, 2);
  Matrix swap = Matrix::identity(4);
  swap(1, 1) = swap(2, 2) = 0.0;
  swap(1, 2) = swap(2, 1) = 1.0;
  CHECK(max_abs_diff(p22, swap) < 1e-15);

  for (auto [t, n] : {std::pair<int, int>{2, 3}, {4, 5}, {3, 3}}) {
    CHECK(max_abs_diff(commutation(t, n) * commutation(n, t),
                       Matrix::identity(t * n)) < 1e-15);
  }
}

TEST_CASE("commutation: swaps Kronecker factors") {
  CounterRng rng(41);
  for (auto [t, n] : {std::pair<int, int>{2, 3}, {3, 4}}) {
    const Matrix x = random_matrix(rng, n, n);
    const Matrix y = random_matrix(rng, t, t);
    const Matrix p = commutation(t, n);
    CHECK(rel_err(p * kron(x, y), kron(y, x) * p) < 1e-12);
  }
}

TEST_CASE("lq: identity and single-row cases") {
  const auto id = lq_decompose(Matrix::identity(3));
  CHECK(max_abs_diff(id.l.mat(), Matrix::identity(3)) < 1e-12);
  CHECK(max_abs_diff(id.q, Matrix::identity(3)) < 1e-12);

  const auto row = lq_decompose(Matrix::from_rows({{3, 4}}));
  CHECK(row.l(0, 0) == doctest::Approx(5.0));
  CHECK(row.q(0, 0) == doctest::Approx(0.6));
  CHECK(row.q(0, 1) == doctest::Approx(0.8));
}

TEST_CASE("lq: reconstruction and orthonormal rows on random input") {
  for (int seed = 0; seed < 4; ++seed) {
    CounterRng rng(500 + seed);
    const Matrix b = random_full_rank(rng, 2 + seed, 6);
    const auto lq = lq_decompose(b);
    CHECK(rel_err(lq.l.mat() * lq.q, b) < 1e-8);
    CHECK(max_abs_diff(lq.q * lq.q.transpose(), Matrix::identity(b.rows())) < 1e-10);
    CHECK(lq.l.invertible());
  }
}

TEST_CASE("lq: rank-deficient input is rejected") {
  try {
    lq_decompose(Matrix::from_rows({{1, 2, 3}, {2, 4, 6}}));
    FAIL("expected RankDeficient");
  } catch (const Error& e) {
    CHECK(e.code() == errc::rank_deficient);
  }
}

TEST_CASE("lower triangular: inverse and right division") {
  CounterRng rng(61);
  const auto c = random_lower_invertible(rng, 8);
  const auto inv = c.inverse();
  CHECK(max_abs_diff(c.mat() * inv.mat(), Matrix::identity(8)) < 1e-10);

  const Matrix a = random_matrix(rng, 5, 8);
  CHECK(rel_err(right_divide_lower(a, c), a * inv.mat()) < 1e-10);
}

TEST_CASE("matrix csv: exact round trip") {
  CounterRng rng(71);
  const Matrix m = random_matrix(rng, 4, 3);
  const Matrix back = matrix_from_csv_text(matrix_to_csv(m));
  CHECK(m == back);  // bitwise, thanks to %.17g
}

TEST_CASE("matrix csv: parse failures") {
  CHECK_THROWS_AS(matrix_from_csv_text("1,2\n3\n"), Error);
  CHECK_THROWS_AS(matrix_from_csv_text("1,abc\n"), Error);
  CHECK_THROWS_AS(matrix_from_csv_text(""), Error);
}

TEST_CASE("svd: values match a known matrix") {
  // [[3, 0], [0, 4], [0, 0]] has singular values 4, 3
  const SvdResult s = svd(Matrix::from_rows({{3, 0}, {0, 4}, {0, 0}}));
  REQUIRE(s.sigma.size() == 2);
  CHECK(s.sigma[0] == doctest::Approx(4.0));
  CHECK(s.sigma[1] == doctest::Approx(3.0));
}

TEST_CASE("rank: detects constructed rank") {
  CounterRng rng(81);
  const Matrix u = random_matrix(rng, 9, 3);
  const Matrix v = random_matrix(rng, 3, 7);
  CHECK(rank(u * v) == 3);
  CHECK(rank(Matrix::identity(6)) == 6);
  CHECK(rank(Matrix(4, 4)) == 0);
}
