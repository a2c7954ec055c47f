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
#include <string>
#include <vector>

#include "dpmesh/accounting.hpp"
#include "dpmesh/error.hpp"
#include "dpmesh/graph.hpp"
#include "dpmesh/hashutil.hpp"
#include "dpmesh/linalg.hpp"
#include "dpmesh/matrix.hpp"
#include "dpmesh/workload.hpp"

namespace dpmesh {

/// T x T Gram matrix of the per-node utility workload. Only depends on the
/// gossip matrix through inner products of its powers, so it is invariant
/// under node relabeling.
struct GramWorkload {
  int T = 0;
  Matrix h;  // symmetric PSD
  std::string provenance;
};

/// Streams the Gram accumulation without materializing the nT x nT
/// workload. With column (i, t) of the utility workload equal to the stack
/// of W^{r-t+1} e_i over rows r >= t, the per-node sums collapse to traces
/// of products of gossip powers:
///   H[s, t] = sum_{r >= max(s,t)} <W^{r-s+1}, W^{r-t+1}>,
/// which satisfies H[s, t] = H[s+1, t+1] + <W^{T-s}, W^{T-t}>.
inline GramWorkload gram_workload(const GossipMatrix& gm, int T) {
  require(T >= 1, errc::invalid_argument, "gram_workload needs T >= 1");
  check_budget(std::uint64_t{8} * T * T +
                   std::uint64_t{8} * gm.n * gm.n * (T + 1),
               "gram workload");
  const auto powers = gossip_powers(gm.w, T);

  // dots[a][b] = elementwise inner product of W^a and W^b, 1 <= a, b <= T.
  std::vector<std::vector<double>> dots(T + 1, std::vector<double>(T + 1, 0.0));
  const std::size_t nn = static_cast<std::size_t>(gm.n) * gm.n;
  for (int a = 1; a <= T; ++a)
    for (int b = a; b <= T; ++b) {
      double dot = 0.0;
      const double* pa = powers[a].data();
      const double* pb = powers[b].data();
      for (std::size_t k = 0; k < nn; ++k) dot += pa[k] * pb[k];
      dots[a][b] = dots[b][a] = dot;
    }

  GramWorkload out;
  out.T = T;
  out.h = Matrix(T, T);
  for (int s = T - 1; s >= 0; --s)
    for (int t = T - 1; t >= 0; --t) {
      double v = dots[T - s][T - t];
      if (s + 1 < T && t + 1 < T) v += out.h(s + 1, t + 1);
      out.h(s, t) = v;
    }

  std::uint64_t h = fnv1a64(gm.w.data(), sizeof(double) * nn);
  h = fnv1a64(&T, sizeof(T), h);
  const char* scheme = to_string(gm.scheme);
  out.provenance = std::string("gossip=") + scheme + " T=" + std::to_string(T) +
                   " whash=" + std::to_string(h);
  return out;
}

/// Centralized prefix-sum Gram (A_pre^T A_pre)[s, t] = T - max(s, t); the
/// graph-blind workload used by the D-MF baseline.
inline GramWorkload centralized_gram(int T) {
  require(T >= 1, errc::invalid_argument, "centralized_gram needs T >= 1");
  GramWorkload out;
  out.T = T;
  out.h = Matrix(T, T);
  for (int s = 0; s < T; ++s)
    for (int t = 0; t < T; ++t) out.h(s, t) = static_cast<double>(T - std::max(s, t));
  out.provenance = "centralized T=" + std::to_string(T);
  return out;
}

/// sens^2(C_local) * ||L C_local^{-1}||_F^2 on the local T x T problem.
inline double objective(const LowerTriangular& l, const LowerTriangular& c,
                        const ParticipationScheme& scheme) {
  require(l.dim() == c.dim(), errc::shape_mismatch, "objective: dim mismatch");
  require(c.invertible(), errc::singular_matrix, "objective: singular C");
  const auto patterns = enumerate_local_patterns(scheme, static_cast<int>(c.dim()));
  const double sens_sq = sensitivity_sq_bound(c.mat(), nullptr, patterns, 1.0);
  const Matrix m = right_divide_lower(l.mat(), c);
  const double util = m.frobenius_norm();
  return sens_sq * util * util;
}

/// All-ones lower triangle: the noise-cancellation correlation whose inverse
/// is the first-difference matrix.
inline LowerTriangular antipgd_local(int T) {
  require(T >= 1, errc::invalid_argument, "antipgd_local needs T >= 1");
  return LowerTriangular::ones(T);
}

struct OptimizerConfig {
  int max_iters = 2000;
  double rel_tol = 1e-7;
  double smoothing = 1e-6;   // |x| ~ sqrt(x^2 + smoothing^2)
  double temp_init = 0.1;    // pattern-max log-sum-exp temperature
  double temp_decay = 0.5;
  int anneal_every = 100;
  double temp_floor = 1e-9;
  double step_init = 0.05;
  int max_backtracks = 40;
  bool record_trajectory = false;
};

struct OptimizeResult {
  LowerTriangular c;          // scale-fixed so sens^2(C) = 1
  double objective_final = 0.0;
  double objective_identity = 0.0;
  double sens_sq = 0.0;       // of the returned C (1 after canonicalization)
  double utility = 0.0;       // ||L C^{-1}||_F^2 of the returned C
  std::vector<double> trajectory;
  int iterations = 0;
};

namespace detail {

struct SmoothObjective {
  const Matrix& h;
  const std::vector<std::vector<std::size_t>>& patterns;
  double smoothing;
  double temp;

  // Returns the smoothed objective; when grad is non-null, adds the
  // lower-triangular gradient with respect to C there.
  double eval(const LowerTriangular& c, Matrix* grad) const {
    const std::size_t t_dim = c.dim();
    const LowerTriangular k = c.inverse();
    // utility = tr(K^T H K)
    const Matrix hk = h * k.mat();
    double util = 0.0;
    for (std::size_t i = 0; i < t_dim; ++i)
      for (std::size_t j = 0; j < t_dim; ++j) util += k.mat()(i, j) * hk(i, j);

    // smoothed sensitivity: log-sum-exp over smoothed pattern sums
    const Matrix x = matmul_tn(c.mat(), c.mat());
    std::vector<double> sums(patterns.size(), 0.0);
    double max_sum = -std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < patterns.size(); ++p) {
      double s = 0.0;
      for (std::size_t a : patterns[p])
        for (std::size_t b : patterns[p]) {
          const double v = x(a, b);
          s += std::sqrt(v * v + smoothing * smoothing);
        }
      sums[p] = s;
      max_sum = std::max(max_sum, s);
    }
    double lse = 0.0;
    for (double s : sums) lse += std::exp((s - max_sum) / temp);
    const double sens_smooth = max_sum + temp * std::log(lse);

    if (grad != nullptr) {
      // d(util)/dC = -2 K^T H K K^T
      const Matrix kt_h_k = matmul_tn(k.mat(), hk);           // K^T H K
      const Matrix du = kt_h_k * k.mat().transpose() * -2.0;  // -2 K^T H K K^T

      // d(sens)/dC = 2 C G with G the softmax-weighted, sign-smoothed
      // pattern indicator
      Matrix g(t_dim, t_dim);
      for (std::size_t p = 0; p < patterns.size(); ++p) {
        const double w = std::exp((sums[p] - max_sum) / temp) / lse;
        for (std::size_t a : patterns[p])
          for (std::size_t b : patterns[p]) {
            const double v = x(a, b);
            g(a, b) += w * v / std::sqrt(v * v + smoothing * smoothing);
          }
      }
      const Matrix ds = c.mat() * g * 2.0;
      // product rule for f = sens * util, restricted to the lower triangle
      for (std::size_t i = 0; i < t_dim; ++i)
        for (std::size_t j = 0; j <= i; ++j)
          (*grad)(i, j) += util * ds(i, j) + sens_smooth * du(i, j);
    }
    return sens_smooth * util;
  }
};

inline double exact_objective(const Matrix& h, const LowerTriangular& c,
                              const std::vector<std::vector<std::size_t>>& patterns) {
  const double sens_sq = sensitivity_sq_bound(c.mat(), nullptr, patterns, 1.0);
  const LowerTriangular k = c.inverse();
  const Matrix hk = h * k.mat();
  double util = 0.0;
  for (std::size_t i = 0; i < c.dim(); ++i)
    for (std::size_t j = 0; j < c.dim(); ++j) util += k.mat()(i, j) * hk(i, j);
  return sens_sq * util;
}

inline void rescale_to_unit_sensitivity(LowerTriangular& c,
                                        const std::vector<std::vector<std::size_t>>& patterns) {
  const double sens_sq = sensitivity_sq_bound(c.mat(), nullptr, patterns, 1.0);
  if (sens_sq <= 0.0) return;
  const double scale = 1.0 / std::sqrt(sens_sq);  // divide by sens
  for (std::size_t i = 0; i < c.dim(); ++i)
    for (std::size_t j = 0; j <= i; ++j) c.at(i, j) *= scale;
}

}  // namespace detail

/// Gradient descent on the free entries of a lower-triangular C with a
/// log-parameterized diagonal. The pattern max is softened by annealed
/// log-sum-exp and |.| by a sqrt smoothing; the best iterate under the exact
/// objective is returned, scale-fixed to unit squared sensitivity. The run
/// is deterministic for a given configuration.
inline OptimizeResult optimize_correlation(const GramWorkload& gram,
                                           const ParticipationScheme& scheme,
                                           const OptimizerConfig& config = {}) {
  const int T = gram.T;
  const auto patterns = enumerate_local_patterns(scheme, T);
  OptimizeResult result;

  LowerTriangular identity = LowerTriangular::identity(T);
  result.objective_identity = detail::exact_objective(gram.h, identity, patterns);

  if (T == 1) {
    result.c = LowerTriangular::identity(1);
    result.objective_final = result.objective_identity;
    result.sens_sq = 1.0;
    result.utility = gram.h(0, 0);
    return result;
  }

  LowerTriangular c = identity;
  LowerTriangular best_c = c;
  double best_exact = result.objective_identity;

  detail::SmoothObjective smooth{gram.h, patterns, config.smoothing, config.temp_init};
  Matrix grad(T, T);
  double f = smooth.eval(c, nullptr);
  require(std::isfinite(f), errc::diverged, "non-finite objective at start");
  double step = config.step_init;
  int stall = 0;
  int iter = 0;

  for (; iter < config.max_iters; ++iter) {
    if (iter > 0 && iter % config.anneal_every == 0)
      smooth.temp = std::max(config.temp_floor, smooth.temp * config.temp_decay);

    grad = Matrix(T, T);
    f = smooth.eval(c, &grad);
    require(std::isfinite(f), errc::diverged, "objective diverged");
    if (config.record_trajectory) result.trajectory.push_back(f);

    // chain rule for the log-diagonal parameterization
    double grad_norm_sq = 0.0;
    for (int i = 0; i < T; ++i) {
      grad(i, i) *= c(i, i);
      for (int j = 0; j <= i; ++j) grad_norm_sq += grad(i, j) * grad(i, j);
    }
    if (grad_norm_sq == 0.0) break;

    bool accepted = false;
    double trial_f = f;
    for (int bt = 0; bt < config.max_backtracks; ++bt) {
      LowerTriangular trial(T);
      for (int i = 0; i < T; ++i) {
        for (int j = 0; j < i; ++j) trial.at(i, j) = c(i, j) - step * grad(i, j);
        const double log_d = std::log(c(i, i)) - step * grad(i, i);
        trial.at(i, i) = std::exp(std::clamp(log_d, -40.0, 40.0));
      }
      trial_f = smooth.eval(trial, nullptr);
      if (std::isfinite(trial_f) && trial_f <= f - 1e-4 * step * grad_norm_sq) {
        c = trial;
        accepted = true;
        step = std::min(step * 1.25, 10.0);
        break;
      }
      step *= 0.5;
    }

    if (accepted) {
      detail::rescale_to_unit_sensitivity(c, patterns);
      const double exact = detail::exact_objective(gram.h, c, patterns);
      if (exact < best_exact) {
        best_exact = exact;
        best_c = c;
      }
      if (std::abs(f - trial_f) <= config.rel_tol * std::max(1.0, std::abs(f)) &&
          smooth.temp <= config.temp_floor * 2.0) {
        ++stall;
        if (stall >= 10) break;
      } else {
        stall = 0;
      }
    } else {
      // step size exhausted at this temperature; sharpen or stop
      if (smooth.temp <= config.temp_floor * 2.0) break;
      smooth.temp = std::max(config.temp_floor, smooth.temp * config.temp_decay);
      step = config.step_init;
    }
  }

  detail::rescale_to_unit_sensitivity(best_c, patterns);
  result.c = best_c;
  result.iterations = iter;
  result.sens_sq =
      sensitivity_sq_bound(best_c.mat(), nullptr, patterns, 1.0);
  result.objective_final = detail::exact_objective(gram.h, best_c, patterns);
  const LowerTriangular k = best_c.inverse();
  const Matrix hk = gram.h * k.mat();
  result.utility = 0.0;
  for (std::size_t i = 0; i < best_c.dim(); ++i)
    for (std::size_t j = 0; j < best_c.dim(); ++j)
      result.utility += k.mat()(i, j) * hk(i, j);
  return result;
}

/// D-MF baseline: optimizes against the centralized prefix-sum Gram instead
/// of the decentralized one, i.e. ignores the graph.
inline OptimizeResult dmf_baseline(int T, const ParticipationScheme& scheme,
                                   const OptimizerConfig& config = {}) {
  return optimize_correlation(centralized_gram(T), scheme, config);
}

}  // namespace dpmesh
