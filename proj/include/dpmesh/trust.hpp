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
#include <set>
#include <string>
#include <vector>

#include "dpmesh/error.hpp"
#include "dpmesh/graph.hpp"
#include "dpmesh/linalg.hpp"
#include "dpmesh/matrix.hpp"
#include "dpmesh/workload.hpp"

namespace dpmesh {

struct TrustModel {
  enum class Kind { ldp, pndp, secldp };

  Kind kind = Kind::ldp;
  std::vector<int> attackers;  // pndp / secldp

  static TrustModel ldp() { return {Kind::ldp, {}}; }
  static TrustModel pndp(std::vector<int> attackers) {
    return {Kind::pndp, std::move(attackers)};
  }
  static TrustModel secldp(std::vector<int> attackers) {
    return {Kind::secldp, std::move(attackers)};
  }
};

inline const char* to_string(TrustModel::Kind k) {
  switch (k) {
    case TrustModel::Kind::ldp: return "ldp";
    case TrustModel::Kind::pndp: return "pndp";
    case TrustModel::Kind::secldp: return "secldp";
  }
  return "?";
}

/// Everything the attacker sees, expressed as observations = A G + B Z with
/// A = B C. `a_pre` keeps the matrix before attacker-knowledge reduction.
struct AttackerView {
  Matrix a_pre;
  Matrix a;
  Matrix b;
  Matrix c;
  Matrix known_gradients;  // the noise-free rows; empty when none
  std::vector<std::string> row_labels;
  std::vector<int> attackers;
  double residual = 0.0;  // ||a - b c||_F
};

/// K_A selector over the ordered neighbor list of the attacker set, one
/// block per step: P = I_T kron K_A. Attacker rows themselves are included
/// by default (an attacker holds the models it sends), which is
/// information-equivalent to the received-messages view; pass false for the
/// received-only variant.
inline Matrix message_projector(const Graph& g, const std::vector<int>& attackers,
                                int T, bool include_attacker_rows = true) {
  require(!attackers.empty(), errc::empty_attacker_set,
          "message projector needs at least one attacker");
  const auto adj = g.adjacency();
  std::set<int> observed;
  for (int a : attackers) {
    require(a >= 0 && a < g.n, errc::invalid_argument, "attacker id out of range");
    observed.insert(adj[a].begin(), adj[a].end());
    if (include_attacker_rows) observed.insert(a);
  }
  const std::size_t n = static_cast<std::size_t>(g.n);
  Matrix p(observed.size() * T, n * T);
  std::size_t r = 0;
  for (int t = 0; t < T; ++t)
    for (int v : observed) p(r++, n * t + static_cast<std::size_t>(v)) = 1.0;
  return p;
}

/// Attacker-knowledge reduction: zeroes the gradient directions already
/// known to the attacker, A_tilde = A (I - K_G^+ K_G). Rows of A that equal
/// rows of K_G become zero, which is what makes A = B C feasible.
inline Matrix reduce_view(const Matrix& a, const Matrix& b,
                          const Matrix& known_gradients) {
  require(b.rows() == a.rows(), errc::shape_mismatch,
          "reduce_view: A and B row counts differ");
  if (known_gradients.rows() == 0) return a;
  require(known_gradients.cols() == a.cols(), errc::shape_mismatch,
          "reduce_view: K_G width mismatch");
  const Matrix p = projector(known_gradients);  // K_G^+ K_G
  return a - a * p;
}

/// Selects a maximal set of linearly independent rows of B in original
/// order; returns the 0/1 selector P with rank(P B) = rank(B). Linear
/// dependence is decided by Gram-Schmidt residual against the rows already
/// kept, threshold 1e-10 * ||row||.
inline Matrix row_selection(const Matrix& b) {
  require(!b.empty(), errc::shape_mismatch, "row_selection of empty matrix");
  const std::size_t cols = b.cols();
  std::vector<std::vector<double>> basis;
  std::vector<std::size_t> kept;
  std::vector<double> work(cols);
  for (std::size_t i = 0; i < b.rows(); ++i) {
    double norm0 = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      work[j] = b(i, j);
      norm0 += work[j] * work[j];
    }
    norm0 = std::sqrt(norm0);
    if (norm0 == 0.0) continue;
    for (int pass = 0; pass < 2; ++pass) {  // re-orthogonalize once
      for (const auto& q : basis) {
        double dot = 0.0;
        for (std::size_t j = 0; j < cols; ++j) dot += q[j] * work[j];
        for (std::size_t j = 0; j < cols; ++j) work[j] -= dot * q[j];
      }
    }
    double res = 0.0;
    for (std::size_t j = 0; j < cols; ++j) res += work[j] * work[j];
    res = std::sqrt(res);
    if (res > 1e-10 * norm0) {
      for (std::size_t j = 0; j < cols; ++j) work[j] /= res;
      basis.push_back(work);
      kept.push_back(i);
    }
  }
  Matrix p(kept.size(), b.rows());
  for (std::size_t k = 0; k < kept.size(); ++k) p(k, kept[k]) = 1.0;
  return p;
}

namespace detail {

inline std::string format_residual(double r) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3e", r);
  return buf;
}

}  // namespace detail

/// Least-squares fallback C = B^+ A, accepted only when the factorization is
/// exact within 1e-8 * max(1, ||A||_F).
inline Matrix solve_C(const Matrix& a, const Matrix& b) {
  require(b.rows() == a.rows(), errc::shape_mismatch,
          "solve_C: A and B row counts differ");
  const Matrix c = pseudoinverse(b) * a;
  const double residual = (a - b * c).frobenius_norm();
  require(residual <= 1e-8 * std::max(1.0, a.frobenius_norm()),
          errc::no_exact_factorization,
          "no exact factorization A = B C (residual " +
              detail::format_residual(residual) + ")");
  return c;
}

namespace detail {

/// Per-algorithm message matrices for the LDP view.
struct LdpParts {
  Matrix msg_grad;    // messages = msg_grad * G + msg_noise * Z
  Matrix msg_noise;
  Matrix c_closed;    // closed-form C (empty -> use solve_C)
  std::size_t noise_per_step = 0;  // noise coordinates per step
  std::vector<std::string> msg_labels;
};

inline std::vector<std::string> grad_step_labels(const char* prefix, int n, int T) {
  std::vector<std::string> labels;
  labels.reserve(static_cast<std::size_t>(n) * T);
  for (int t = 0; t < T; ++t)
    for (int u = 0; u < n; ++u)
      labels.push_back(std::string(prefix) + " t=" + std::to_string(t) +
                       " node=" + std::to_string(u));
  return labels;
}

inline LdpParts ldp_parts(const AlgorithmSpec& algo) {
  const int n = algo.gossip.n;
  const int T = algo.T;
  LdpParts parts;
  switch (algo.kind) {
    case AlgorithmSpec::Kind::dsgd: {
      parts.msg_grad = dsgd_workload(algo.gossip, T).materialize();
      parts.msg_noise = parts.msg_grad;
      parts.c_closed = Matrix::identity(parts.msg_grad.cols());
      parts.noise_per_step = static_cast<std::size_t>(n);
      parts.msg_labels = grad_step_labels("msg", n, T);
      break;
    }
    case AlgorithmSpec::Kind::muffliato: {
      parts.msg_grad = muffliato_workload(algo.gossip, T, algo.K).materialize();
      parts.msg_noise = parts.msg_grad;
      parts.c_closed = Matrix::identity(parts.msg_grad.cols());
      parts.noise_per_step = static_cast<std::size_t>(n);
      parts.msg_labels = grad_step_labels("msg", n, T * algo.K);
      break;
    }
    case AlgorithmSpec::Kind::antipgd: {
      AntipgdFactorization f = antipgd_factorization(algo.gossip, T);
      parts.msg_grad = std::move(f.a);
      parts.msg_noise = std::move(f.b);
      parts.c_closed = std::move(f.c);
      parts.noise_per_step = static_cast<std::size_t>(n);
      parts.msg_labels = grad_step_labels("msg", n, T);
      break;
    }
    case AlgorithmSpec::Kind::decor: {
      DecorFactorization f =
          decor_factorization(algo.graph, algo.gossip, T, algo.orientation_seed);
      parts.msg_grad = std::move(f.a);
      parts.msg_noise = std::move(f.b);
      parts.c_closed = std::move(f.c);
      parts.noise_per_step = static_cast<std::size_t>(n) + algo.graph.edges.size();
      parts.msg_labels = grad_step_labels("msg", n, T);
      break;
    }
    case AlgorithmSpec::Kind::zipdl: {
      ZipDlWorkload z = zipdl_workload(algo.graph, algo.gossip, T);
      const Matrix msg = z.op.materialize();
      parts.msg_grad = msg * zipdl_gradient_injection(n, T);
      parts.msg_noise = msg * kron(Matrix::identity(T), z.correlation);
      parts.noise_per_step = static_cast<std::size_t>(n) * n;
      parts.msg_labels.reserve(static_cast<std::size_t>(n) * n * T);
      for (int t = 0; t < T; ++t)
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j)
            parts.msg_labels.push_back("msg t=" + std::to_string(t) + " from=" +
                                       std::to_string(i) + " to=" + std::to_string(j));
      break;
    }
  }
  return parts;
}

/// Diagonal 0/1 mask zeroing the attacker-owned gradient coordinates.
inline Matrix attacker_grad_mask(int n, int T, const std::vector<int>& attackers) {
  Matrix d = Matrix::identity(static_cast<std::size_t>(n) * T);
  for (int t = 0; t < T; ++t)
    for (int a : attackers) d(static_cast<std::size_t>(n) * t + a,
                              static_cast<std::size_t>(n) * t + a) = 0.0;
  return d;
}

inline std::vector<std::size_t> attacker_grad_coords(int n, int T,
                                                     const std::vector<int>& attackers) {
  std::vector<std::size_t> coords;
  for (int t = 0; t < T; ++t)
    for (int a : attackers)
      coords.push_back(static_cast<std::size_t>(n) * t + static_cast<std::size_t>(a));
  std::sort(coords.begin(), coords.end());
  return coords;
}

inline Matrix selector(const std::vector<std::size_t>& coords, std::size_t width) {
  Matrix s(coords.size(), width);
  for (std::size_t i = 0; i < coords.size(); ++i) s(i, coords[i]) = 1.0;
  return s;
}

}  // namespace detail

/// Permutation over gradient coordinates that moves the attackers' rows to
/// the front (appendix-style layout), kept out of the main pipeline and
/// emitted only for comparisons.
inline Matrix attacker_first_permutation(int n, int T, const std::vector<int>& attackers) {
  std::vector<std::size_t> order = detail::attacker_grad_coords(n, T, attackers);
  std::vector<char> is_attacker(static_cast<std::size_t>(n) * T, 0);
  for (std::size_t c : order) is_attacker[c] = 1;
  for (std::size_t c = 0; c < is_attacker.size(); ++c)
    if (!is_attacker[c]) order.push_back(c);
  Matrix p(order.size(), order.size());
  for (std::size_t i = 0; i < order.size(); ++i) p(i, order[i]) = 1.0;
  return p;
}

/// Assembles the attacker view for a supported (algorithm, trust) pair and
/// verifies the factorization A = B C.
inline AttackerView build_view(const AlgorithmSpec& algo, const TrustModel& trust,
                               bool include_attacker_rows = true) {
  const int n = algo.gossip.n;
  const int T = algo.T;
  const std::size_t grad_dim = static_cast<std::size_t>(n) * T;

  const bool supported =
      trust.kind == TrustModel::Kind::ldp ||
      (trust.kind == TrustModel::Kind::pndp &&
       algo.kind != AlgorithmSpec::Kind::decor) ||
      (trust.kind == TrustModel::Kind::secldp &&
       algo.kind == AlgorithmSpec::Kind::decor);
  require(supported, errc::unsupported_combination,
          std::string("unsupported combination: ") + to_string(algo.kind) + " x " +
              to_string(trust.kind));

  detail::LdpParts parts = detail::ldp_parts(algo);
  const std::size_t noise_dim = parts.noise_per_step * static_cast<std::size_t>(T);

  AttackerView view;
  view.attackers = trust.attackers;

  if (trust.kind == TrustModel::Kind::ldp) {
    view.a_pre = parts.msg_grad;
    view.a = parts.msg_grad;
    view.b = parts.msg_noise;
    view.row_labels = parts.msg_labels;
    view.known_gradients = Matrix(0, grad_dim);
    view.c = parts.c_closed.empty() ? solve_C(view.a, view.b) : parts.c_closed;
    view.residual = (view.a - view.b * view.c).frobenius_norm();
    require(view.residual <= 1e-8 * std::max(1.0, view.a.frobenius_norm()),
            errc::factorization_failed,
            "LDP factorization residual " + detail::format_residual(view.residual));
    return view;
  }

  require(!trust.attackers.empty(), errc::empty_attacker_set,
          "pndp/secldp need a nonempty attacker set");

  // Observed message rows.
  Matrix p_msg;
  std::vector<std::string> msg_labels;
  if (algo.kind == AlgorithmSpec::Kind::zipdl) {
    const auto adj = algo.graph.adjacency();
    std::set<std::size_t> slots;
    for (int a : trust.attackers) {
      for (int j : adj[a]) {
        slots.insert(static_cast<std::size_t>(n) * j + a);  // received by a
        if (include_attacker_rows)
          slots.insert(static_cast<std::size_t>(n) * a + j);  // sent by a
      }
    }
    const std::size_t nn = static_cast<std::size_t>(n) * n;
    p_msg = Matrix(slots.size() * T, nn * T);
    std::size_t r = 0;
    for (int t = 0; t < T; ++t)
      for (std::size_t s : slots) {
        p_msg(r++, nn * t + s) = 1.0;
        msg_labels.push_back("msg t=" + std::to_string(t) + " from=" +
                             std::to_string(s / n) + " to=" + std::to_string(s % n));
      }
  } else {
    const int rounds = algo.kind == AlgorithmSpec::Kind::muffliato ? T * algo.K : T;
    p_msg = message_projector(algo.graph, trust.attackers, rounds,
                              include_attacker_rows);
    for (std::size_t r = 0; r < p_msg.rows(); ++r)
      for (std::size_t c = 0; c < p_msg.cols(); ++c)
        if (p_msg(r, c) == 1.0)
          msg_labels.push_back("msg round=" + std::to_string(c / n) + " node=" +
                               std::to_string(c % n));
  }

  const Matrix observed_grad = p_msg * parts.msg_grad;
  const Matrix observed_noise = p_msg * parts.msg_noise;

  // Known gradients: the attackers' own.
  const auto grad_coords = detail::attacker_grad_coords(n, T, trust.attackers);
  const Matrix k_g = detail::selector(grad_coords, grad_dim);

  // Known noise coordinates: the attackers' own draws, plus (SecLDP) the
  // edge secrets incident to an attacker.
  std::vector<std::size_t> noise_coords;
  if (algo.kind == AlgorithmSpec::Kind::zipdl) {
    const auto adj = algo.graph.adjacency();
    for (int t = 0; t < T; ++t)
      for (int a : trust.attackers) {
        const std::size_t base =
            static_cast<std::size_t>(n) * n * t + static_cast<std::size_t>(n) * a;
        for (int j : adj[a]) noise_coords.push_back(base + j);
        noise_coords.push_back(base + a);  // retained self copy
      }
  } else if (algo.kind == AlgorithmSpec::Kind::decor) {
    const std::size_t per_step = parts.noise_per_step;
    for (int t = 0; t < T; ++t) {
      for (int a : trust.attackers) noise_coords.push_back(per_step * t + a);
      for (std::size_t e = 0; e < algo.graph.edges.size(); ++e) {
        const auto& [u, v] = algo.graph.edges[e];
        const bool incident =
            std::find(trust.attackers.begin(), trust.attackers.end(), u) !=
                trust.attackers.end() ||
            std::find(trust.attackers.begin(), trust.attackers.end(), v) !=
                trust.attackers.end();
        if (incident) noise_coords.push_back(per_step * t + n + e);
      }
    }
  } else {
    noise_coords = detail::attacker_grad_coords(n, T, trust.attackers);
  }
  std::sort(noise_coords.begin(), noise_coords.end());
  const Matrix k_z = detail::selector(noise_coords, noise_dim);

  view.a_pre = vstack(vstack(observed_grad, k_g), Matrix(k_z.rows(), grad_dim));
  view.b = vstack(vstack(observed_noise, Matrix(k_g.rows(), noise_dim)), k_z);
  view.known_gradients = k_g;
  view.row_labels = std::move(msg_labels);
  for (std::size_t i = 0; i < k_g.rows(); ++i)
    view.row_labels.push_back("known-grad coord=" + std::to_string(grad_coords[i]));
  for (std::size_t i = 0; i < k_z.rows(); ++i)
    view.row_labels.push_back("known-noise coord=" + std::to_string(noise_coords[i]));

  view.a = reduce_view(view.a_pre, view.b, k_g);

  const Matrix mask = detail::attacker_grad_mask(n, T, trust.attackers);
  switch (algo.kind) {
    case AlgorithmSpec::Kind::dsgd:
    case AlgorithmSpec::Kind::muffliato:
      view.c = mask;
      break;
    case AlgorithmSpec::Kind::antipgd:
      view.c = kron(LowerTriangular::ones(T).mat(), Matrix::identity(n)) * mask;
      break;
    case AlgorithmSpec::Kind::decor: {
      // masked gradient coordinates land in the local-noise block, which
      // occupies the first n coordinates of each step
      Matrix c(noise_dim, grad_dim);
      for (int t = 0; t < T; ++t)
        for (int u = 0; u < n; ++u)
          for (std::size_t j = 0; j < grad_dim; ++j)
            c(parts.noise_per_step * t + u, j) =
                mask(static_cast<std::size_t>(n) * t + u, j);
      view.c = c;
      break;
    }
    case AlgorithmSpec::Kind::zipdl:
      view.c = solve_C(view.a, view.b);
      break;
  }

  view.residual = (view.a - view.b * view.c).frobenius_norm();
  require(view.residual <= 1e-8 * std::max(1.0, view.a.frobenius_norm()),
          errc::factorization_failed,
          "factorization residual " + detail::format_residual(view.residual));
  return view;
}

}  // namespace dpmesh
