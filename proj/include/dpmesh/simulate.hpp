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

#include <cmath>
#include <string>
#include <vector>

#include "dpmesh/accounting.hpp"
#include "dpmesh/dataset.hpp"
#include "dpmesh/error.hpp"
#include "dpmesh/graph.hpp"
#include "dpmesh/hashutil.hpp"
#include "dpmesh/mafalda.hpp"
#include "dpmesh/matrix.hpp"
#include "dpmesh/model.hpp"
#include "dpmesh/rng.hpp"

namespace dpmesh {

struct SimConfig {
  GossipMatrix gossip;
  int T = 100;
  double eta = 0.05;
  double clip = 1.0;
  double sigma = 0.0;             // noise std is clip * sigma per coordinate
  LowerTriangular c_local;        // T x T; identity when default-constructed
  ParticipationScheme scheme = ParticipationScheme::full();  // for accounting
  std::uint64_t seed = 1;
  int batch = 1;
  ModelSpec model;
  double divergence_threshold = 1e6;
};

struct TrainingTrace {
  std::vector<double> test_mse;   // per step, model averaged over nodes
  std::vector<double> train_mse;  // per step, minibatch loss averaged over nodes
  Matrix final_models;            // n x param_count
  bool diverged = false;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

namespace detail {

inline std::uint64_t sim_config_hash(const SimConfig& cfg) {
  std::uint64_t h = fnv1a64(cfg.gossip.w.data(),
                                  sizeof(double) * cfg.gossip.n * cfg.gossip.n);
  const double reals[] = {cfg.eta, cfg.clip, cfg.sigma, cfg.divergence_threshold};
  h = fnv1a64(reals, sizeof(reals), h);
  const int ints[] = {cfg.T, cfg.batch, cfg.model.input_dim, cfg.model.hidden,
                      static_cast<int>(cfg.model.arch)};
  h = fnv1a64(ints, sizeof(ints), h);
  if (cfg.c_local.dim() > 0)
    h = fnv1a64(cfg.c_local.mat().data(),
                      sizeof(double) * cfg.c_local.dim() * cfg.c_local.dim(), h);
  h = fnv1a64(&cfg.seed, sizeof(cfg.seed), h);
  return h;
}

constexpr std::uint64_t kNoiseStream = 0x4e4f4953'00000000ULL;  // "NOIS"

}  // namespace detail

/// One training run: per step, every node takes a clipped gradient step
/// with its slice of the correlated noise C_local^{-1} Z, then the models
/// are gossip-averaged. The trace records the test loss of the node-averaged
/// model after every step. The loop is sequential and bitwise deterministic
/// in (config, seed); noise draws come from per-(node, step) counter streams
/// so no evaluation order can change them.
inline TrainingTrace run_mf_dsgd(const SimConfig& cfg, const Dataset& ds) {
  const int n = cfg.gossip.n;
  require(n >= 1, errc::invalid_argument, "simulator needs a gossip matrix");
  require(cfg.T >= 1, errc::invalid_argument, "simulator needs T >= 1");
  require(cfg.batch >= 1, errc::invalid_argument, "batch must be >= 1");
  require(cfg.model.input_dim == static_cast<int>(ds.dim()), errc::shape_mismatch,
          "model input dim != dataset dim");

  LowerTriangular c_local = cfg.c_local.dim() == 0
                                ? LowerTriangular::identity(cfg.T)
                                : cfg.c_local;
  require(static_cast<int>(c_local.dim()) == cfg.T, errc::shape_mismatch,
          "C_local must be T x T");
  const LowerTriangular c_inv = c_local.inverse();

  const std::size_t d = cfg.model.param_count();
  const auto shards = partition_uniform(ds, n, cfg.seed);
  const std::vector<double> theta0 = init_params(cfg.model, cfg.seed);

  Matrix theta(n, d);
  for (int u = 0; u < n; ++u)
    for (std::size_t j = 0; j < d; ++j) theta(u, j) = theta0[j];

  // Raw per-(node, step) noise draws, kept for the running correlation.
  const bool noisy = cfg.sigma > 0.0;
  std::vector<Matrix> z_history;
  if (noisy) {
    check_budget(std::uint64_t{8} * n * cfg.T * d, "noise history");
    z_history.assign(cfg.T, Matrix(n, d));
  }
  const double noise_std = cfg.clip * cfg.sigma;

  TrainingTrace trace;
  trace.seed = cfg.seed;
  trace.config_hash = detail::sim_config_hash(cfg);

  Matrix theta_half(n, d);
  std::vector<double> grad(d);
  std::vector<double> sample_grad(d);

  for (int t = 0; t < cfg.T; ++t) {
    if (noisy) {
      for (int u = 0; u < n; ++u) {
        CounterRng rng(cfg.seed, detail::kNoiseStream | static_cast<std::uint64_t>(u),
                       static_cast<std::uint64_t>(t));
        for (std::size_t j = 0; j < d; ++j) z_history[t](u, j) = rng.gaussian() * noise_std;
      }
    }

    double train_loss = 0.0;
    for (int u = 0; u < n; ++u) {
      const auto& shard = shards[u];
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (int s = 0; s < cfg.batch; ++s) {
        const std::size_t pick =
            (static_cast<std::size_t>(t) * cfg.batch + s) % shard.size();
        const int row = shard[pick];
        std::fill(sample_grad.begin(), sample_grad.end(), 0.0);
        batch_loss += backprop_sample(cfg.model, theta.row_span(u),
                                      ds.features.row_span(row), ds.targets[row],
                                      sample_grad);
        double norm_sq = 0.0;
        for (double g : sample_grad) norm_sq += g * g;
        const double norm = std::sqrt(norm_sq);
        const double scale = norm > cfg.clip ? cfg.clip / norm : 1.0;
        for (std::size_t j = 0; j < d; ++j) grad[j] += scale * sample_grad[j];
      }
      const double inv_batch = 1.0 / cfg.batch;
      train_loss += batch_loss * inv_batch;

      for (std::size_t j = 0; j < d; ++j) {
        double update = grad[j] * inv_batch;
        if (noisy)
          for (int tau = 0; tau <= t; ++tau) {
            const double w = c_inv(t, tau);
            if (w != 0.0) update += w * z_history[tau](u, j);
          }
        theta_half(u, j) = theta(u, j) - cfg.eta * update;
      }
    }

    // gossip averaging, nodes processed in sorted order
    for (int u = 0; u < n; ++u)
      for (std::size_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (int v = 0; v < n; ++v) {
          const double w = cfg.gossip.w(u, v);
          if (w != 0.0) acc += w * theta_half(v, j);
        }
        theta(u, j) = acc;
      }

    // test loss of the node-averaged model
    std::vector<double> avg(d, 0.0);
    for (int u = 0; u < n; ++u)
      for (std::size_t j = 0; j < d; ++j) avg[j] += theta(u, j);
    for (double& v : avg) v /= n;
    const double test_loss =
        ds.test_idx.empty()
            ? 0.0
            : mean_squared_error(cfg.model, avg, ds, ds.test_idx);

    trace.train_mse.push_back(train_loss / n);
    trace.test_mse.push_back(test_loss);
    if (!std::isfinite(test_loss) || test_loss > cfg.divergence_threshold) {
      trace.diverged = true;
      break;
    }
  }

  trace.final_models = theta;
  return trace;
}

enum class Method { nonprivate, dpdsgd, antipgd, mafalda, dmf };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::nonprivate: return "nonprivate";
    case Method::dpdsgd: return "dpdsgd";
    case Method::antipgd: return "antipgd";
    case Method::mafalda: return "mafalda";
    case Method::dmf: return "dmf";
  }
  return "?";
}

struct ComparisonRow {
  Method method = Method::dpdsgd;
  double sigma = 0.0;
  int seeds = 0;
  int diverged_runs = 0;
  double mean_final_loss = 0.0;  // over last-50-step means of converged runs
  double std_final_loss = 0.0;
  double mu_ldp = 0.0;
  double eps_rdp2 = 0.0;
  double eps_delta = 0.0;
};

struct ComparisonResult {
  std::vector<ComparisonRow> rows;
  std::vector<std::vector<TrainingTrace>> traces;  // [method][seed]
  std::vector<Method> methods;
  double delta = 1e-6;
};

/// Mean of the last `window` recorded test losses (fewer if truncated).
inline double final_loss(const TrainingTrace& trace, int window = 50) {
  if (trace.test_mse.empty()) return std::numeric_limits<double>::infinity();
  const std::size_t take =
      std::min<std::size_t>(window, trace.test_mse.size());
  double sum = 0.0;
  for (std::size_t i = trace.test_mse.size() - take; i < trace.test_mse.size(); ++i)
    sum += trace.test_mse[i];
  return sum / static_cast<double>(take);
}

/// C_local for a method at horizon T; the optimizer-backed choices are
/// deterministic, so all seeds share one matrix.
inline LowerTriangular method_correlation(Method method, const GossipMatrix& gossip,
                                          int T, const ParticipationScheme& scheme,
                                          const OptimizerConfig& opt = {}) {
  switch (method) {
    case Method::nonprivate:
    case Method::dpdsgd: return LowerTriangular::identity(T);
    case Method::antipgd: return antipgd_local(T);
    case Method::mafalda:
      return optimize_correlation(gram_workload(gossip, T), scheme, opt).c;
    case Method::dmf: return dmf_baseline(T, scheme, opt).c;
  }
  return LowerTriangular::identity(T);
}

/// Runs the listed methods across seeds at a shared (graph, T, sigma) and
/// summarizes the last-50-step test loss, together with each method's LDP
/// accounting at the shared noise level.
inline ComparisonResult run_comparison(const SimConfig& base, const Dataset& ds,
                                       const std::vector<Method>& methods,
                                       const std::vector<std::uint64_t>& seeds,
                                       double delta = 1e-6,
                                       const OptimizerConfig& opt = {}) {
  require(!methods.empty() && !seeds.empty(), errc::invalid_argument,
          "need methods and seeds");
  ComparisonResult result;
  result.methods = methods;
  result.delta = delta;
  for (Method method : methods) {
    SimConfig cfg = base;
    cfg.sigma = method == Method::nonprivate ? 0.0 : base.sigma;
    cfg.c_local = method_correlation(method, base.gossip, base.T, base.scheme, opt);

    ComparisonRow row;
    row.method = method;
    row.sigma = cfg.sigma;
    row.seeds = static_cast<int>(seeds.size());
    if (cfg.sigma > 0.0) {
      const PrivacyReport r = ldp_account_local(cfg.c_local, cfg.sigma, base.scheme,
                                                base.clip, {2.0}, {delta});
      row.mu_ldp = r.mu;
      row.eps_rdp2 = r.rdp.front().second;
      row.eps_delta = r.eps_delta.front().second;
    }

    std::vector<TrainingTrace> runs;
    std::vector<double> finals;
    for (std::uint64_t seed : seeds) {
      cfg.seed = seed;
      TrainingTrace trace = run_mf_dsgd(cfg, ds);
      if (trace.diverged)
        ++row.diverged_runs;
      else
        finals.push_back(final_loss(trace));
      runs.push_back(std::move(trace));
    }
    if (finals.empty()) {
      row.mean_final_loss = std::numeric_limits<double>::infinity();
      row.std_final_loss = 0.0;
    } else {
      double mean = 0.0;
      for (double f : finals) mean += f;
      mean /= static_cast<double>(finals.size());
      double var = 0.0;
      for (double f : finals) var += (f - mean) * (f - mean);
      var /= static_cast<double>(finals.size());
      row.mean_final_loss = mean;
      row.std_final_loss = std::sqrt(var);
    }
    result.rows.push_back(row);
    result.traces.push_back(std::move(runs));
  }
  return result;
}

}  // namespace dpmesh
