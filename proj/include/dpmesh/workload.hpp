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

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "dpmesh/budget.hpp"
#include "dpmesh/error.hpp"
#include "dpmesh/graph.hpp"
#include "dpmesh/linalg.hpp"
#include "dpmesh/matrix.hpp"
#include "dpmesh/rng.hpp"

namespace dpmesh {

/// Linear map from stacked gradients to network messages. apply() streams
/// repeated gossip multiplications and never forms the dense matrix;
/// materialize() does, subject to the memory budget.
class WorkloadOperator {
 public:
  using ApplyFn = std::function<Matrix(const Matrix&)>;
  using DenseFn = std::function<Matrix()>;

  WorkloadOperator() = default;
  WorkloadOperator(std::size_t out_dim, std::size_t in_dim, ApplyFn apply,
                   DenseFn dense)
      : out_dim_(out_dim), in_dim_(in_dim), apply_(std::move(apply)),
        dense_(std::move(dense)) {}

  std::size_t out_dim() const { return out_dim_; }
  std::size_t in_dim() const { return in_dim_; }

  Matrix apply(const Matrix& x) const {
    require(x.rows() == in_dim_, errc::shape_mismatch,
            "workload apply: input height mismatch");
    Matrix y = apply_(x);
    return y;
  }

  Matrix materialize() const {
    check_budget(std::uint64_t{8} * out_dim_ * in_dim_, "workload materialize");
    return dense_();
  }

 private:
  std::size_t out_dim_ = 0;
  std::size_t in_dim_ = 0;
  ApplyFn apply_;
  DenseFn dense_;
};

/// W^0 .. W^max_power.
inline std::vector<Matrix> gossip_powers(const Matrix& w, int max_power) {
  std::vector<Matrix> powers;
  powers.reserve(max_power + 1);
  powers.push_back(Matrix::identity(w.rows()));
  for (int k = 1; k <= max_power; ++k) powers.push_back(powers.back() * w);
  return powers;
}

/// Workload of decentralized SGD over T steps: block (t, tau) equals
/// W^{t-tau} for t >= tau (identity on the diagonal), zero above.
inline WorkloadOperator dsgd_workload(const GossipMatrix& gm, int T) {
  require(T >= 1, errc::invalid_argument, "dsgd_workload needs T >= 1");
  const std::size_t n = static_cast<std::size_t>(gm.n);
  const std::size_t dim = n * static_cast<std::size_t>(T);
  Matrix w = gm.w;
  auto apply = [w, n, T](const Matrix& x) {
    const std::size_t d = x.cols();
    Matrix y(x.rows(), d);
    Matrix acc(n, d);  // running sum_{tau<=t} W^{t-tau} X_tau
    for (int t = 0; t < T; ++t) {
      acc = (t == 0) ? x.block(0, 0, n, d) : Matrix(w * acc);
      if (t > 0) acc += x.block(n * t, 0, n, d);
      y.set_block(n * t, 0, acc);
    }
    return y;
  };
  auto dense = [w, n, T, dim] {
    const auto powers = gossip_powers(w, T - 1);
    Matrix a(dim, dim);
    for (int t = 0; t < T; ++t)
      for (int tau = 0; tau <= t; ++tau) a.set_block(n * t, n * tau, powers[t - tau]);
    return a;
  };
  return WorkloadOperator(dim, dim, std::move(apply), std::move(dense));
}

/// Stacked powers of W (starting with power 0) that propagate the initial
/// model through T steps: an nT x n matrix with block t equal to W^t.
inline Matrix stacked_powers(const GossipMatrix& gm, int T) {
  require(T >= 1, errc::invalid_argument, "stacked_powers needs T >= 1");
  const std::size_t n = static_cast<std::size_t>(gm.n);
  check_budget(std::uint64_t{8} * n * n * T, "stacked_powers");
  Matrix m(n * T, n);
  Matrix p = Matrix::identity(n);
  for (int t = 0; t < T; ++t) {
    m.set_block(n * t, 0, p);
    if (t + 1 < T) p = p * gm.w;
  }
  return m;
}

/// Workload with K gossip rounds per gradient step: the KT-step workload
/// composed with the injection I_T kron [I_n; 0] that places each gradient
/// at the first round of its group. Output is nKT x nT.
inline WorkloadOperator muffliato_workload(const GossipMatrix& gm, int T, int K) {
  require(T >= 1, errc::invalid_argument, "muffliato_workload needs T >= 1");
  require(K >= 1, errc::invalid_argument, "muffliato_workload needs K >= 1");
  const std::size_t n = static_cast<std::size_t>(gm.n);
  const std::size_t in_dim = n * static_cast<std::size_t>(T);
  const std::size_t out_dim = in_dim * static_cast<std::size_t>(K);
  Matrix w = gm.w;
  auto apply = [w, n, T, K](const Matrix& x) {
    const std::size_t d = x.cols();
    Matrix y(n * T * K, d);
    Matrix acc(n, d);
    for (int r = 0; r < T * K; ++r) {
      if (r == 0) {
        acc = x.block(0, 0, n, d);
      } else {
        acc = w * acc;
        if (r % K == 0) acc += x.block(n * (r / K), 0, n, d);
      }
      y.set_block(n * r, 0, acc);
    }
    return y;
  };
  auto dense = [w, n, T, K, out_dim, in_dim] {
    const auto powers = gossip_powers(w, T * K - 1);
    Matrix a(out_dim, in_dim);
    for (int r = 0; r < T * K; ++r)
      for (int t = 0; t <= r / K; ++t) a.set_block(n * r, n * t, powers[r - t * K]);
    return a;
  };
  return WorkloadOperator(out_dim, in_dim, std::move(apply), std::move(dense));
}

struct AntipgdFactorization {
  WorkloadOperator a_op;  // the gradient workload
  Matrix a;               // dense A (nT x nT)
  Matrix b;               // noise workload, identity diagonal, W^{t-1-tau}(W-I) below
  Matrix c;               // all-ones lower triangle kron I_n
};

/// Noise-cancellation factorization A = B C where C is the prefix-sum
/// correlation and B propagates each cancellation one gossip step late.
inline AntipgdFactorization antipgd_factorization(const GossipMatrix& gm, int T) {
  require(T >= 1, errc::invalid_argument, "antipgd_factorization needs T >= 1");
  const std::size_t n = static_cast<std::size_t>(gm.n);
  const std::size_t dim = n * static_cast<std::size_t>(T);
  check_budget(std::uint64_t{8} * dim * dim * 3, "antipgd factorization");
  AntipgdFactorization out;
  out.a_op = dsgd_workload(gm, T);
  out.a = out.a_op.materialize();
  const auto powers = gossip_powers(gm.w, T >= 2 ? T - 2 : 0);
  Matrix w_minus_i = gm.w - Matrix::identity(n);
  out.b = Matrix(dim, dim);
  for (int t = 0; t < T; ++t) {
    out.b.set_block(n * t, n * t, Matrix::identity(n));
    for (int tau = 0; tau < t; ++tau)
      out.b.set_block(n * t, n * tau, powers[t - 1 - tau] * w_minus_i);
  }
  out.c = kron(LowerTriangular::ones(T).mat(), Matrix::identity(n));
  return out;
}

struct DecorFactorization {
  Matrix a;  // message workload (= gradient workload), nT x nT
  Matrix b;  // a * (I_T kron [I_n  C_nodes]), nT x (n+|E|)T
  Matrix c;  // [I_nT; 0], (n+|E|)T x nT
  Matrix node_correlation;  // C_nodes: +1/-1 oriented incidence, n x |E|
  Matrix c_decor;           // I_T kron pinv([I_n  C_nodes])
  std::vector<std::pair<int, int>> oriented_edges;
};

/// Edge-wise correlated noise: every oriented edge carries a shared secret
/// that enters its endpoints with opposite signs. The orientation is a
/// deterministic function of (orientation_seed, sorted edge list).
inline DecorFactorization decor_factorization(const Graph& g, const GossipMatrix& gm,
                                              int T, std::uint64_t orientation_seed) {
  require(g.connected(), errc::disconnected, "decor needs a connected graph");
  require(T >= 1, errc::invalid_argument, "decor needs T >= 1");
  const std::size_t n = static_cast<std::size_t>(g.n);
  const std::size_t m = g.edges.size();
  const std::size_t dim = n * static_cast<std::size_t>(T);
  check_budget(std::uint64_t{8} * dim * (n + m) * T, "decor factorization");

  DecorFactorization out;
  out.node_correlation = Matrix(n, m);
  out.oriented_edges.reserve(m);
  for (std::size_t e = 0; e < m; ++e) {
    auto [u, v] = g.edges[e];
    const std::uint64_t h = splitmix64(
        orientation_seed ^ splitmix64((std::uint64_t(u) << 32) | std::uint64_t(v)));
    if (h & 1) std::swap(u, v);
    out.oriented_edges.emplace_back(u, v);
    out.node_correlation(u, e) = 1.0;
    out.node_correlation(v, e) = -1.0;
  }

  out.a = dsgd_workload(gm, T).materialize();
  const Matrix step = hstack(Matrix::identity(n), out.node_correlation);
  out.b = out.a * kron(Matrix::identity(T), step);
  // noise coordinates are laid out per step as [n local draws, m secrets];
  // the factorization C picks out the local block of every step
  out.c = Matrix((n + m) * T, dim);
  for (int t = 0; t < T; ++t)
    for (std::size_t u = 0; u < n; ++u)
      out.c((n + m) * static_cast<std::size_t>(t) + u,
            n * static_cast<std::size_t>(t) + u) = 1.0;
  out.c_decor = kron(Matrix::identity(T), pseudoinverse(step));
  return out;
}

struct ZipDlWorkload {
  int n = 0;
  int T = 0;
  Matrix routing;      // n^2 x n^2 virtual-node message routing
  Matrix averaging;    // n^2 x n^2 per-node aggregation
  Matrix correlation;  // n^2 x n^2 near-cancelling per-step noise map
  std::vector<std::size_t> active;  // slot n*i+j is a real message iff j in Gamma_i
  WorkloadOperator op;              // masked message workload, n^2 T x n^2 T
};

/// Message-wise workload over n^2 virtual nodes. Slot n*i+j holds node i's
/// message to j; routing places W[i,j] * slot(j,i) there, averaging sums a
/// node's incoming slots (the W weights are already in the routing), and the
/// mask keeps only slots that correspond to actual edges.
///
/// The per-step noise correlation gives every slot in Gamma_i union {i} a
/// noise and subtracts 1/(deg_i + 2) of their sum, so a node's noises nearly
/// cancel on aggregation while the map stays invertible on those slots.
inline ZipDlWorkload zipdl_workload(const Graph& g, const GossipMatrix& gm, int T,
                                    const Matrix* averaging_override = nullptr) {
  require(g.connected(), errc::disconnected, "zipdl needs a connected graph");
  require(T >= 1, errc::invalid_argument, "zipdl needs T >= 1");
  const std::size_t n = static_cast<std::size_t>(g.n);
  const std::size_t nn = n * n;
  check_budget(std::uint64_t{8} * nn * nn, "zipdl virtual-node matrices");

  ZipDlWorkload out;
  out.n = g.n;
  out.T = T;
  out.routing = Matrix(nn, nn);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (gm.w(i, j) != 0.0) out.routing(n * i + j, n * j + i) = gm.w(i, j);

  if (averaging_override != nullptr) {
    require(averaging_override->rows() == nn && averaging_override->cols() == nn,
            errc::missing_averaging_matrix,
            "averaging matrix must be n^2 x n^2");
    out.averaging = *averaging_override;
  } else {
    out.averaging = Matrix(nn, nn);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < n; ++k) out.averaging(n * i + j, n * i + k) = 1.0;
  }

  const auto adj = g.adjacency();
  for (std::size_t i = 0; i < n; ++i)
    for (int j : adj[i]) out.active.push_back(n * i + static_cast<std::size_t>(j));
  std::sort(out.active.begin(), out.active.end());

  out.correlation = Matrix(nn, nn);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> slots;
    for (int j : adj[i]) slots.push_back(n * i + static_cast<std::size_t>(j));
    slots.push_back(n * i + i);  // retained self copy
    const double shrink = 1.0 / (static_cast<double>(slots.size()) + 1.0);
    for (std::size_t a : slots)
      for (std::size_t b : slots)
        out.correlation(a, b) = (a == b ? 1.0 : 0.0) - shrink;
  }

  const std::size_t dim = nn * static_cast<std::size_t>(T);
  Matrix mix = out.averaging * out.routing;
  std::vector<char> mask(nn, 0);
  for (std::size_t s : out.active) mask[s] = 1;
  auto apply = [mix, mask, nn, T](const Matrix& x) {
    const std::size_t d = x.cols();
    Matrix y(nn * T, d);
    Matrix acc(nn, d);
    for (int t = 0; t < T; ++t) {
      acc = (t == 0) ? x.block(0, 0, nn, d) : Matrix(mix * acc);
      if (t > 0) acc += x.block(nn * t, 0, nn, d);
      for (std::size_t s = 0; s < nn; ++s)
        if (mask[s])
          for (std::size_t c = 0; c < d; ++c) y(nn * t + s, c) = acc(s, c);
    }
    return y;
  };
  auto dense = [mix, mask, nn, T, dim] {
    std::vector<Matrix> powers = gossip_powers(mix, T - 1);
    Matrix a(dim, dim);
    for (int t = 0; t < T; ++t)
      for (int tau = 0; tau <= t; ++tau) {
        const Matrix& p = powers[t - tau];
        for (std::size_t s = 0; s < nn; ++s) {
          if (!mask[s]) continue;
          for (std::size_t c = 0; c < nn; ++c)
            a(nn * t + s, nn * tau + c) = p(s, c);
        }
      }
    return a;
  };
  out.op = WorkloadOperator(dim, dim, std::move(apply), std::move(dense));
  return out;
}

/// Gradient injection for Zip-DL: I_{nT} kron 1_n copies gradient (t, i)
/// into all of node i's virtual slots at step t.
inline Matrix zipdl_gradient_injection(int n, int T) {
  const std::size_t nn = static_cast<std::size_t>(n) * n;
  Matrix inj(nn * T, static_cast<std::size_t>(n) * T);
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k)
        inj(nn * t + static_cast<std::size_t>(n) * i + k,
            static_cast<std::size_t>(n) * t + i) = 1.0;
  return inj;
}

/// Algorithm selector shared by the trust and accounting layers.
struct AlgorithmSpec {
  enum class Kind { dsgd, muffliato, antipgd, decor, zipdl };

  Kind kind = Kind::dsgd;
  Graph graph;
  GossipMatrix gossip;
  int T = 1;
  int K = 1;                            // muffliato rounds per gradient
  std::uint64_t orientation_seed = 0;   // decor edge orientation
};

inline const char* to_string(AlgorithmSpec::Kind k) {
  switch (k) {
    case AlgorithmSpec::Kind::dsgd: return "dsgd";
    case AlgorithmSpec::Kind::muffliato: return "muffliato";
    case AlgorithmSpec::Kind::antipgd: return "antipgd";
    case AlgorithmSpec::Kind::decor: return "decor";
    case AlgorithmSpec::Kind::zipdl: return "zipdl";
  }
  return "?";
}

}  // namespace dpmesh
