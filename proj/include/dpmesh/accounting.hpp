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
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "dpmesh/error.hpp"
#include "dpmesh/graph.hpp"
#include "dpmesh/linalg.hpp"
#include "dpmesh/matrix.hpp"
#include "dpmesh/trust.hpp"
#include "dpmesh/workload.hpp"

namespace dpmesh {

/// Which rows of the stacked gradient a single record may influence.
/// Patterns are node-localized: a record of node u only ever touches rows
/// {u, n+u, ..., (T-1)n+u}.
struct ParticipationScheme {
  enum class Kind { single, cyclic_kb, full };

  Kind kind = Kind::full;
  int step = 0;                // single
  int k = 1;                   // cyclic: participations per record
  int b = 1;                   // cyclic: gap between participations
  std::optional<int> phase;    // cyclic: restrict to one phase

  static ParticipationScheme single_step(int step) {
    ParticipationScheme s;
    s.kind = Kind::single;
    s.step = step;
    return s;
  }
  static ParticipationScheme cyclic(int k, int b, std::optional<int> phase = {}) {
    ParticipationScheme s;
    s.kind = Kind::cyclic_kb;
    s.k = k;
    s.b = b;
    s.phase = phase;
    return s;
  }
  static ParticipationScheme full() { return {}; }

  std::string name() const {
    switch (kind) {
      case Kind::single: return "single:" + std::to_string(step);
      case Kind::cyclic_kb: return "kb:" + std::to_string(k) + "," + std::to_string(b);
      case Kind::full: return "full";
    }
    return "?";
  }
};

/// Local (per-node time index) patterns of the scheme over T steps.
inline std::vector<std::vector<std::size_t>> enumerate_local_patterns(
    const ParticipationScheme& scheme, int T) {
  require(T >= 1, errc::invalid_argument, "patterns need T >= 1");
  std::vector<std::vector<std::size_t>> patterns;
  switch (scheme.kind) {
    case ParticipationScheme::Kind::single:
      require(scheme.step >= 0 && scheme.step < T, errc::phase_out_of_range,
              "single-step participation outside [0, T)");
      patterns.push_back({static_cast<std::size_t>(scheme.step)});
      break;
    case ParticipationScheme::Kind::cyclic_kb: {
      require(scheme.k >= 1 && scheme.b >= 1, errc::invalid_argument,
              "cyclic participation needs k, b >= 1");
      int first = 0, last = scheme.b;
      if (scheme.phase) {
        require(*scheme.phase >= 0 && *scheme.phase < scheme.b,
                errc::phase_out_of_range, "phase outside [0, b)");
        first = *scheme.phase;
        last = first + 1;
      }
      for (int s = first; s < last; ++s) {
        std::vector<std::size_t> pattern;
        for (int j = 0; j < scheme.k; ++j) {
          const long long t = static_cast<long long>(s) + static_cast<long long>(j) * scheme.b;
          if (t >= T) break;
          pattern.push_back(static_cast<std::size_t>(t));
        }
        if (!pattern.empty()) patterns.push_back(std::move(pattern));
      }
      break;
    }
    case ParticipationScheme::Kind::full: {
      std::vector<std::size_t> pattern(T);
      for (int t = 0; t < T; ++t) pattern[t] = static_cast<std::size_t>(t);
      patterns.push_back(std::move(pattern));
      break;
    }
  }
  return patterns;
}

/// Global row patterns for a record held by `node`: local step t maps to
/// row t*n + node.
inline std::vector<std::vector<std::size_t>> enumerate_patterns(
    const ParticipationScheme& scheme, int T, int node, int n) {
  require(node >= 0 && node < n, errc::invalid_argument, "node out of range");
  auto patterns = enumerate_local_patterns(scheme, T);
  for (auto& p : patterns)
    for (auto& row : p) row = row * static_cast<std::size_t>(n) + node;
  return patterns;
}

/// max over patterns of sum_{s,t in pi} |X[s,t]|.
inline double max_pattern_abs_sum(const Matrix& x,
                                  const std::vector<std::vector<std::size_t>>& patterns) {
  double best = 0.0;
  for (const auto& p : patterns) {
    double sum = 0.0;
    for (std::size_t s : p)
      for (std::size_t t : p) sum += std::abs(x(s, t));
    best = std::max(best, sum);
  }
  return best;
}

/// Pattern bound on the squared sensitivity:
/// clip^2 * max_pi sum_{s,t in pi} |(C^T P C)_{s,t}| with P the projector
/// (identity when `proj` is null). Only the columns touched by a pattern are
/// formed, so C never needs to be multiplied out in full.
inline double sensitivity_sq_bound(const Matrix& c, const Matrix* proj,
                                   const std::vector<std::vector<std::size_t>>& patterns,
                                   double clip) {
  require(clip > 0.0, errc::non_positive, "clip must be positive");
  if (proj != nullptr)
    require(proj->rows() == c.rows() && proj->cols() == c.rows(),
            errc::shape_mismatch, "projector must match C row count");
  std::vector<std::size_t> touched;
  for (const auto& p : patterns) touched.insert(touched.end(), p.begin(), p.end());
  std::sort(touched.begin(), touched.end());
  touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
  for (std::size_t idx : touched)
    require(idx < c.cols(), errc::shape_mismatch, "pattern row outside C columns");

  const Matrix cu = c.select_cols(touched);
  const Matrix x = proj ? matmul_tn(cu, *proj * cu) : matmul_tn(cu, cu);

  std::vector<std::size_t> pos(c.cols(), 0);
  for (std::size_t i = 0; i < touched.size(); ++i) pos[touched[i]] = i;

  double best = 0.0;
  for (const auto& p : patterns) {
    double sum = 0.0;
    for (std::size_t s : p)
      for (std::size_t t : p) sum += std::abs(x(pos[s], pos[t]));
    best = std::max(best, sum);
  }
  return clip * clip * best;
}

/// Exact worst-case sensitivity for scalar gradients: maximizes
/// ||C delta||_{B^+ B} over per-row differences delta in {+-clip} supported
/// on each pattern, by explicit sign enumeration. Exponential; inputs are
/// capped at 16 gradient coordinates.
inline double sensitivity_bruteforce(const Matrix& c, const Matrix* b,
                                     const std::vector<std::vector<std::size_t>>& patterns,
                                     double clip) {
  require(c.cols() <= 16, errc::too_large,
          "brute-force sensitivity is capped at 16 gradient coordinates");
  const Matrix gram =
      b ? matmul_tn(c, projector(*b) * c) : matmul_tn(c, c);  // C^T P C
  double best = 0.0;
  for (const auto& p : patterns) {
    require(p.size() <= 20, errc::too_large, "pattern too large for enumeration");
    const std::size_t count = std::size_t{1} << p.size();
    for (std::size_t bits = 0; bits < count; ++bits) {
      double val = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double si = (bits >> i) & 1 ? -1.0 : 1.0;
        for (std::size_t j = 0; j < p.size(); ++j) {
          const double sj = (bits >> j) & 1 ? -1.0 : 1.0;
          val += si * sj * gram(p[i], p[j]);
        }
      }
      best = std::max(best, val);
    }
  }
  return clip * std::sqrt(std::max(0.0, best));
}

/// mu = sens / nu; with nu = sigma * sens this is 1/sigma.
inline double gdp_mu(double sens, double nu) {
  require(sens > 0.0, errc::non_positive, "sensitivity must be positive");
  require(nu > 0.0, errc::non_positive, "noise level must be positive");
  return sens / nu;
}

/// Renyi bound of a mu-GDP mechanism at order alpha: alpha * mu^2 / 2.
inline double gdp_to_rdp(double mu, double alpha) {
  require(alpha > 1.0, errc::alpha_out_of_range, "alpha must exceed 1");
  require(mu >= 0.0, errc::non_positive, "mu must be nonnegative");
  return alpha * mu * mu / 2.0;
}

inline double standard_normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

/// delta(eps) along the Gaussian trade-off curve for a mu-GDP mechanism.
inline double gdp_delta_for_eps(double mu, double eps) {
  return standard_normal_cdf(-eps / mu + mu / 2.0) -
         std::exp(eps) * standard_normal_cdf(-eps / mu - mu / 2.0);
}

/// Smallest eps >= 0 with delta(eps) <= delta, by bisection to 1e-9.
/// Returns +infinity when the requested delta is below numeric reach.
inline double gdp_to_eps_delta(double mu, double delta) {
  require(mu > 0.0, errc::non_positive, "mu must be positive");
  require(delta > 0.0 && delta < 1.0, errc::invalid_argument,
          "delta must lie in (0, 1)");
  if (gdp_delta_for_eps(mu, 0.0) <= delta) return 0.0;
  double lo = 0.0;
  double hi = mu * mu / 2.0 + mu * std::sqrt(2.0 * std::log(1.0 / delta)) + 10.0;
  if (!(gdp_delta_for_eps(mu, hi) <= delta))
    return std::numeric_limits<double>::infinity();
  while (hi - lo > 1e-9) {
    const double mid = 0.5 * (lo + hi);
    if (gdp_delta_for_eps(mu, mid) <= delta)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

/// One (attacker set, target) privacy statement with its conversions.
struct PrivacyReport {
  double mu = 0.0;
  double sens = 0.0;           // clip * sqrt(sens_sq_bound)
  double sens_sq_bound = 0.0;  // pattern bound at unit clip (squared convention)
  double sens_sq_bound_raw = 0.0;  // before any observation-monotonicity cap
  double sigma = 0.0;
  double nu = 0.0;             // noise std actually injected, sigma * clip
  double clip = 1.0;
  std::vector<std::pair<double, double>> rdp;        // (alpha, eps_alpha)
  std::vector<std::pair<double, double>> eps_delta;  // (delta, eps)
  std::vector<int> attackers;                        // empty for LDP
  int target = -1;                                   // -1: pair-independent
  int distance = -1;
};

inline void fill_conversions(PrivacyReport& report, const std::vector<double>& alphas,
                             const std::vector<double>& deltas) {
  report.rdp.clear();
  report.eps_delta.clear();
  for (double a : alphas) report.rdp.emplace_back(a, gdp_to_rdp(report.mu, a));
  for (double d : deltas)
    report.eps_delta.emplace_back(
        d, report.mu > 0.0 ? gdp_to_eps_delta(report.mu, d) : 0.0);
}

namespace detail {

inline PrivacyReport report_from_bound(double bound_sq_unit_clip, double sigma,
                                       double clip) {
  PrivacyReport r;
  r.sens_sq_bound = bound_sq_unit_clip;
  r.sens_sq_bound_raw = bound_sq_unit_clip;
  r.sigma = sigma;
  r.clip = clip;
  r.sens = clip * std::sqrt(std::max(0.0, bound_sq_unit_clip));
  r.nu = sigma * clip;
  r.mu = sigma > 0.0 ? r.sens / r.nu : 0.0;
  return r;
}

}  // namespace detail

/// LDP accounting of gossip SGD with a node-local correlation C_local
/// (C = C_local kron I_n): the noise workload is invertible, so the
/// projector drops out and the bound reduces to the T x T local problem.
/// Covers plain DP-D-SGD (C_local = I) and every local baseline.
inline PrivacyReport ldp_account_local(const LowerTriangular& c_local, double sigma,
                                       const ParticipationScheme& scheme,
                                       double clip = 1.0,
                                       const std::vector<double>& alphas = {2.0},
                                       const std::vector<double>& deltas = {1e-6}) {
  require(sigma >= 0.0, errc::non_positive, "sigma must be nonnegative");
  const int T = static_cast<int>(c_local.dim());
  const auto patterns = enumerate_local_patterns(scheme, T);
  const double bound = sensitivity_sq_bound(c_local.mat(), nullptr, patterns, 1.0);
  PrivacyReport r = detail::report_from_bound(bound, sigma, clip);
  if (sigma > 0.0) fill_conversions(r, alphas, deltas);
  return r;
}

/// LDP accounting for a full algorithm spec. Workloads whose noise matrix
/// is invertible by construction (dsgd, muffliato, antipgd) reduce to the
/// local T x T problem; the rest go through the dense view with the
/// row-space projector of B. LDP reports are pair-independent; the bound is
/// the worst case over the per-node localized patterns.
inline PrivacyReport ldp_account(const AlgorithmSpec& algo, double sigma,
                                 const ParticipationScheme& scheme, double clip = 1.0,
                                 const std::vector<double>& alphas = {2.0},
                                 const std::vector<double>& deltas = {1e-6}) {
  require(sigma > 0.0, errc::non_positive, "sigma must be positive");
  switch (algo.kind) {
    case AlgorithmSpec::Kind::dsgd:
    case AlgorithmSpec::Kind::muffliato:
      return ldp_account_local(LowerTriangular::identity(algo.T), sigma, scheme,
                               clip, alphas, deltas);
    case AlgorithmSpec::Kind::antipgd:
      return ldp_account_local(LowerTriangular::ones(algo.T), sigma, scheme, clip,
                               alphas, deltas);
    default:
      break;
  }
  const AttackerView view = build_view(algo, TrustModel::ldp());
  const Matrix proj = projector(view.b);
  double bound = 0.0;
  for (int u = 0; u < algo.gossip.n; ++u) {
    const auto patterns = enumerate_patterns(scheme, algo.T, u, algo.gossip.n);
    bound = std::max(bound, sensitivity_sq_bound(view.c, &proj, patterns, 1.0));
  }
  PrivacyReport r = detail::report_from_bound(bound, sigma, clip);
  fill_conversions(r, alphas, deltas);
  return r;
}

/// Tighter PNDP accounting for DP-D-SGD: C_a = I, B_a = P_a A, and per
/// target the pattern-restricted absolute sum of the projector B_a^+ B_a.
/// The observed messages are a row selection of the all-messages view, so
/// the LDP bound stays valid for them by post-processing; the reported
/// bound is capped there (the pattern sum of a projector submatrix can
/// exceed the pattern size by its off-diagonal mass, and near targets do
/// hit that). The uncapped value is kept in sens_sq_bound_raw.
/// Returns one report per non-attacker node, sorted by node id, with hop
/// distances to the attacker set for bucketing.
inline std::vector<PrivacyReport> pndp_account_dsgd(
    const Graph& g, const GossipMatrix& gm, int T, const std::vector<int>& attackers,
    double sigma, const ParticipationScheme& scheme, double clip = 1.0,
    const std::vector<double>& alphas = {2.0},
    const std::vector<double>& deltas = {1e-6},
    bool include_attacker_rows = true) {
  require(!attackers.empty(), errc::empty_attacker_set, "need attackers");
  require(sigma > 0.0, errc::non_positive, "sigma must be positive");
  const Matrix a = dsgd_workload(gm, T).materialize();
  const Matrix p = message_projector(g, attackers, T, include_attacker_rows);
  const Matrix observed = p * a;
  const Matrix proj = projector(observed);  // B_a^+ B_a, computed once

  const auto dist = distances_from_set(g, attackers);
  std::vector<PrivacyReport> reports;
  for (int u = 0; u < g.n; ++u) {
    if (std::find(attackers.begin(), attackers.end(), u) != attackers.end()) continue;
    const auto patterns = enumerate_patterns(scheme, T, u, g.n);
    const double raw = max_pattern_abs_sum(proj, patterns);
    std::size_t largest = 0;
    for (const auto& pat : patterns) largest = std::max(largest, pat.size());
    const double ldp_bound = static_cast<double>(largest);  // X = I under LDP
    PrivacyReport r = detail::report_from_bound(std::min(raw, ldp_bound), sigma, clip);
    r.sens_sq_bound_raw = raw;
    r.attackers = attackers;
    r.target = u;
    r.distance = dist[u];
    fill_conversions(r, alphas, deltas);
    reports.push_back(std::move(r));
  }
  return reports;
}

/// Distance-bucketed min/mean/max of the alpha=2 Renyi bound.
struct DistanceBucket {
  int distance = 0;
  int count = 0;
  double min_eps = 0.0;
  double mean_eps = 0.0;
  double max_eps = 0.0;
};

inline std::vector<DistanceBucket> distance_buckets(const std::vector<PrivacyReport>& reports) {
  std::vector<DistanceBucket> buckets;
  for (const auto& r : reports) {
    const double eps = gdp_to_rdp(r.mu, 2.0);
    auto it = std::find_if(buckets.begin(), buckets.end(),
                           [&](const DistanceBucket& b) { return b.distance == r.distance; });
    if (it == buckets.end()) {
      buckets.push_back({r.distance, 1, eps, eps, eps});
    } else {
      it->count += 1;
      it->min_eps = std::min(it->min_eps, eps);
      it->max_eps = std::max(it->max_eps, eps);
      it->mean_eps += eps;  // finalized below
    }
  }
  for (auto& b : buckets) b.mean_eps /= b.count;
  std::sort(buckets.begin(), buckets.end(),
            [](const DistanceBucket& x, const DistanceBucket& y) {
              return x.distance < y.distance;
            });
  return buckets;
}

}  // namespace dpmesh
