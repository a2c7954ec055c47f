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

#include <chrono>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dpmesh/dpmesh.hpp"

namespace {

using nlohmann::json;
using namespace dpmesh;

constexpr int kExitUsage = 2;
constexpr int kExitInput = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitMemory = 5;

int exit_code_for(errc code) {
  switch (code) {
    case errc::out_of_memory:
      return kExitMemory;
    case errc::parse_error:
    case errc::empty_graph:
    case errc::missing_column:
    case errc::non_numeric:
    case errc::invalid_argument:
    case errc::too_many_nodes:
    case errc::unsupported_combination:
    case errc::disconnected:
    case errc::missing_averaging_matrix:
    case errc::empty_attacker_set:
    case errc::phase_out_of_range:
    case errc::shape_mismatch:
      return kExitInput;
    default:
      return kExitNumeric;
  }
}

// ---------------------------------------------------------------------------
// shared argument plumbing

struct GraphArg {
  Graph graph;
  std::string source;                  // "florentine" or a path
  std::optional<std::string> input_path;  // set when read from disk
};

GraphArg load_graph_arg(const std::string& spec) {
  GraphArg g;
  g.source = spec;
  if (spec == "florentine") {
    g.graph = builtin_florentine();
  } else {
    g.graph = load_edge_list(spec);
    g.input_path = spec;
  }
  return g;
}

GossipScheme parse_gossip_scheme(const std::string& s) {
  if (s == "mh" || s == "metropolis-hastings") return GossipScheme::metropolis_hastings;
  if (s == "uniform" || s == "uniform-neighbor") return GossipScheme::uniform_neighbor;
  fail(errc::invalid_argument, "unknown gossip scheme: " + s);
}

ParticipationScheme parse_participation(const std::string& s) {
  if (s == "full") return ParticipationScheme::full();
  if (s.rfind("single:", 0) == 0)
    return ParticipationScheme::single_step(std::stoi(s.substr(7)));
  if (s.rfind("kb:", 0) == 0) {
    const auto comma = s.find(',', 3);
    require(comma != std::string::npos, errc::invalid_argument,
            "participation kb:K,B needs two numbers");
    return ParticipationScheme::cyclic(std::stoi(s.substr(3, comma - 3)),
                                       std::stoi(s.substr(comma + 1)));
  }
  fail(errc::invalid_argument, "unknown participation scheme: " + s);
}

AlgorithmSpec::Kind parse_algo(const std::string& s) {
  if (s == "dsgd") return AlgorithmSpec::Kind::dsgd;
  if (s == "muffliato") return AlgorithmSpec::Kind::muffliato;
  if (s == "antipgd") return AlgorithmSpec::Kind::antipgd;
  if (s == "decor") return AlgorithmSpec::Kind::decor;
  if (s == "zipdl") return AlgorithmSpec::Kind::zipdl;
  fail(errc::invalid_argument, "unknown algorithm: " + s);
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::istringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stoi(item));
  return out;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::istringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stod(item));
  return out;
}

// "1..5" or "1,4,9"
std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  const auto dots = s.find("..");
  if (dots != std::string::npos) {
    const long long lo = std::stoll(s.substr(0, dots));
    const long long hi = std::stoll(s.substr(dots + 2));
    require(lo <= hi, errc::invalid_argument, "bad seed range");
    for (long long v = lo; v <= hi; ++v) out.push_back(static_cast<std::uint64_t>(v));
    return out;
  }
  std::istringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stoull(item));
  return out;
}

std::string stem_insert(const std::string& path, const std::string& tag) {
  const auto dot = path.find_last_of('.');
  const auto slash = path.find_last_of('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
    return path + tag;
  return path.substr(0, dot) + tag + path.substr(dot);
}

/// Applies --config JSON defaults to options the user did not pass. Values
/// may live at the top level or under a section named after the subcommand.
struct ConfigDefaults {
  json values = json::object();

  static ConfigDefaults load(const std::string& path, const std::string& section) {
    ConfigDefaults cfg;
    if (path.empty()) return cfg;
    json j = load_json(path);
    require(j.is_object(), errc::parse_error, path + ": config must be an object");
    if (j.contains(section) && j[section].is_object()) {
      cfg.values = j[section];
    } else {
      cfg.values = j;
    }
    return cfg;
  }

  template <typename T>
  void apply(const CLI::Option* opt, const char* key, T& field) const {
    if (opt != nullptr && opt->count() > 0) return;
    if (!values.contains(key)) return;
    field = values.at(key).get<T>();
  }
};

/// Collects output files, hashes them into the manifest and writes the
/// manifest next to the primary output.
struct Emitter {
  RunManifest manifest;
  std::string manifest_path;

  void note_input(const std::string& path) {
    manifest.inputs[path] = file_hash(path);
  }
  void write_text(const std::string& path, const std::string& text) {
    save_text(path, text);
    manifest.outputs[path] = file_hash(path);
    if (manifest_path.empty()) manifest_path = path + ".manifest.json";
  }
  void write_matrix(const std::string& path, const Matrix& m) {
    save_matrix_csv(m, path);
    manifest.outputs[path] = file_hash(path);
    if (manifest_path.empty()) manifest_path = path + ".manifest.json";
  }
  void write_json(const std::string& path, const json& j) {
    save_text(path, j.dump(2) + "\n");
    manifest.outputs[path] = file_hash(path);
    if (manifest_path.empty()) manifest_path = path + ".manifest.json";
  }
  void finish(long long wallclock_ms) {
    manifest.wallclock_ms = wallclock_ms;
    if (!manifest_path.empty()) manifest.save(manifest_path);
  }
};

json report_to_json(const PrivacyReport& r) {
  json rdp = json::array();
  for (const auto& [alpha, eps] : r.rdp) rdp.push_back({{"alpha", alpha}, {"eps", eps}});
  json ed = json::array();
  for (const auto& [delta, eps] : r.eps_delta)
    ed.push_back({{"delta", delta}, {"eps", eps}});
  json j = {
      {"mu", r.mu},
      {"sens", r.sens},
      {"sens_sq_bound", r.sens_sq_bound},
      {"sum_abs_bound", r.sens_sq_bound},  // same number read as the linear convention
      {"sigma", r.sigma},
      {"nu", r.nu},
      {"clip", r.clip},
      {"rdp", rdp},
      {"eps_delta", ed},
      {"attackers", r.attackers},
      {"target", r.target},
      {"distance", r.distance},
  };
  return j;
}

// ---------------------------------------------------------------------------
// subcommand payloads

struct CommonArgs {
  std::string config_path;
  int threads = 1;
};

int run_command(const std::vector<std::string>& argv);

int cmd_graph_gen(const CommonArgs& common, const std::vector<std::string>& argv,
                  const std::string& type, int n, double p, std::uint64_t seed,
                  const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  Graph g;
  if (type == "er")
    g = erdos_renyi(n, p, seed);
  else if (type == "complete")
    g = complete_graph(n);
  else if (type == "ring")
    g = ring_graph(n);
  else
    fail(errc::invalid_argument, "unknown graph type: " + type);

  Emitter em;
  em.manifest.command = argv;
  em.manifest.threads = common.threads;
  em.manifest.config = {{"type", type}, {"n", n}, {"p", p}, {"seed", seed}};
  std::string text = "# manifest " + em.manifest.hash() + "\n";
  text += edge_list_to_text(g);
  em.write_text(out, text);
  em.finish(std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - t0)
                .count());
  std::printf("wrote %s (n=%d m=%zu)\n", out.c_str(), g.n, g.edges.size());
  return 0;
}

int cmd_graph_info(const CommonArgs& common, const std::vector<std::string>& argv,
                   const std::string& graph_spec, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  GraphArg g = load_graph_arg(graph_spec);
  const auto dist = pairwise_distances(g.graph);
  std::map<int, int> histogram;
  for (int u = 0; u < g.graph.n; ++u)
    for (int v = u + 1; v < g.graph.n; ++v) ++histogram[dist[u][v]];

  Emitter em;
  em.manifest.command = argv;
  em.manifest.threads = common.threads;
  em.manifest.config = {{"graph", graph_spec}};
  if (g.input_path) em.note_input(*g.input_path);

  std::string csv;
  csv += "metric,value\n";
  csv += "nodes," + std::to_string(g.graph.n) + "\n";
  csv += "edges," + std::to_string(g.graph.edges.size()) + "\n";
  for (const auto& [d, count] : histogram)
    csv += "pairs_at_distance_" + std::to_string(d) + "," + std::to_string(count) + "\n";

  if (out.empty()) {
    std::fputs(csv.c_str(), stdout);
  } else {
    em.write_text(out, "# manifest " + em.manifest.hash() + "\n" + csv);
    em.finish(std::chrono::duration_cast<std::chrono::milliseconds>(
                  std::chrono::steady_clock::now() - t0)
                  .count());
  }
  return 0;
}

struct WorkloadArgs {
  std::string algo = "dsgd";
  std::string graph;
  std::string gossip_scheme = "mh";
  int T = 1;
  int K = 1;
  std::uint64_t orientation_seed = 0;
  std::string materialize;
};

int cmd_workload(const CommonArgs& common, const std::vector<std::string>& argv,
                 const WorkloadArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  GraphArg g = load_graph_arg(a.graph);
  const GossipMatrix gm = gossip_from_graph(g.graph, parse_gossip_scheme(a.gossip_scheme));
  const AlgorithmSpec::Kind kind = parse_algo(a.algo);

  Matrix dense;
  std::size_t out_dim = 0, in_dim = 0;
  switch (kind) {
    case AlgorithmSpec::Kind::dsgd: {
      auto op = dsgd_workload(gm, a.T);
      out_dim = op.out_dim();
      in_dim = op.in_dim();
      if (!a.materialize.empty()) dense = op.materialize();
      break;
    }
    case AlgorithmSpec::Kind::muffliato: {
      auto op = muffliato_workload(gm, a.T, a.K);
      out_dim = op.out_dim();
      in_dim = op.in_dim();
      if (!a.materialize.empty()) dense = op.materialize();
      break;
    }
    case AlgorithmSpec::Kind::antipgd: {
      auto f = antipgd_factorization(gm, a.T);
      out_dim = f.a.rows();
      in_dim = f.a.cols();
      if (!a.materialize.empty()) dense = f.a;
      break;
    }
    case AlgorithmSpec::Kind::decor: {
      auto f = decor_factorization(g.graph, gm, a.T, a.orientation_seed);
      out_dim = f.a.rows();
      in_dim = f.a.cols();
      if (!a.materialize.empty()) dense = f.a;
      break;
    }
    case AlgorithmSpec::Kind::zipdl: {
      auto z = zipdl_workload(g.graph, gm, a.T);
      out_dim = z.op.out_dim();
      in_dim = z.op.in_dim();
      if (!a.materialize.empty()) dense = z.op.materialize();
      break;
    }
  }

  std::printf("workload %s: %zu x %zu (graph n=%d, T=%d)\n", a.algo.c_str(), out_dim,
              in_dim, g.graph.n, a.T);
  if (!a.materialize.empty()) {
    Emitter em;
    em.manifest.command = argv;
    em.manifest.threads = common.threads;
    em.manifest.config = {{"algo", a.algo},   {"graph", a.graph}, {"T", a.T},
                          {"K", a.K},         {"gossip_scheme", a.gossip_scheme},
                          {"orientation_seed", a.orientation_seed}};
    if (g.input_path) em.note_input(*g.input_path);
    em.write_matrix(a.materialize, dense);
    em.finish(std::chrono::duration_cast<std::chrono::milliseconds>(
                  std::chrono::steady_clock::now() - t0)
                  .count());
  }
  return 0;
}

struct TrustArgs {
  std::string algo = "dsgd";
  std::string trust = "ldp";
  std::string attackers;
  std::string graph;
  std::string gossip_scheme = "mh";
  int T = 1;
  int K = 1;
  std::uint64_t orientation_seed = 0;
  std::string out_prefix;
};

int cmd_trust(const CommonArgs& common, const std::vector<std::string>& argv,
              const TrustArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  GraphArg g = load_graph_arg(a.graph);
  AlgorithmSpec spec;
  spec.kind = parse_algo(a.algo);
  spec.graph = g.graph;
  spec.gossip = gossip_from_graph(g.graph, parse_gossip_scheme(a.gossip_scheme));
  spec.T = a.T;
  spec.K = a.K;
  spec.orientation_seed = a.orientation_seed;

  TrustModel trust;
  if (a.trust == "ldp")
    trust = TrustModel::ldp();
  else if (a.trust == "pndp")
    trust = TrustModel::pndp(parse_int_list(a.attackers));
  else if (a.trust == "secldp")
    trust = TrustModel::secldp(parse_int_list(a.attackers));
  else
    fail(errc::invalid_argument, "unknown trust model: " + a.trust);

  const AttackerView view = build_view(spec, trust);

  Emitter em;
  em.manifest.command = argv;
  em.manifest.threads = common.threads;
  em.manifest.config = {{"algo", a.algo},
                        {"trust", a.trust},
                        {"attackers", a.attackers},
                        {"graph", a.graph},
                        {"T", a.T},
                        {"K", a.K},
                        {"gossip_scheme", a.gossip_scheme}};
  if (g.input_path) em.note_input(*g.input_path);
  em.manifest_path = a.out_prefix + ".manifest.json";
  em.write_matrix(a.out_prefix + "_A.csv", view.a);
  em.write_matrix(a.out_prefix + "_B.csv", view.b);
  em.write_matrix(a.out_prefix + "_C.csv", view.c);
  const json meta = {
      {"manifest", em.manifest.hash()},
      {"algo", a.algo},
      {"trust", a.trust},
      {"attackers", view.attackers},
      {"residual", view.residual},
      {"rank_a", rank(view.a)},
      {"rank_b", rank(view.b)},
      {"rows", view.a.rows()},
      {"grad_cols", view.a.cols()},
      {"noise_cols", view.b.cols()},
      {"row_labels", view.row_labels},
  };
  em.write_json(a.out_prefix + ".meta.json", meta);
  em.finish(std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - t0)
                .count());
  std::printf("view %s x %s: residual %.3e, wrote %s_{A,B,C}.csv\n", a.algo.c_str(),
              a.trust.c_str(), view.residual, a.out_prefix.c_str());
  return 0;
}

struct AccountArgs {
  std::string algo = "dsgd";
  std::string trust = "ldp";
  std::string attackers;
  std::string graph;
  std::string gossip_scheme = "mh";
  int T = 1;
  int K = 1;
  double sigma = 0.0;
  double clip = 1.0;
  std::string participation = "full";
  std::string alphas = "2";
  double delta = 1e-6;
  std::string out;
  std::string csv;
};

int cmd_account(const CommonArgs& common, const std::vector<std::string>& argv,
                const AccountArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  GraphArg g = load_graph_arg(a.graph);
  const GossipMatrix gm = gossip_from_graph(g.graph, parse_gossip_scheme(a.gossip_scheme));
  const ParticipationScheme scheme = parse_participation(a.participation);
  const std::vector<double> alphas = parse_double_list(a.alphas);
  const std::vector<double> deltas = {a.delta};

  std::vector<PrivacyReport> reports;
  if (a.trust == "ldp") {
    AlgorithmSpec spec;
    spec.kind = parse_algo(a.algo);
    spec.graph = g.graph;
    spec.gossip = gm;
    spec.T = a.T;
    spec.K = a.K;
    reports.push_back(ldp_account(spec, a.sigma, scheme, a.clip, alphas, deltas));
  } else if (a.trust == "pndp") {
    require(parse_algo(a.algo) == AlgorithmSpec::Kind::dsgd,
            errc::unsupported_combination,
            "pndp accounting is implemented for dsgd");
    reports = pndp_account_dsgd(g.graph, gm, a.T, parse_int_list(a.attackers), a.sigma,
                                scheme, a.clip, alphas, deltas);
  } else {
    fail(errc::invalid_argument, "account supports --trust ldp|pndp");
  }

  Emitter em;
  em.manifest.command = argv;
  em.manifest.threads = common.threads;
  em.manifest.config = {{"algo", a.algo},       {"trust", a.trust},
                        {"attackers", a.attackers}, {"graph", a.graph},
                        {"T", a.T},             {"K", a.K},
                        {"sigma", a.sigma},     {"clip", a.clip},
                        {"participation", a.participation},
                        {"alphas", a.alphas},   {"delta", a.delta},
                        {"gossip_scheme", a.gossip_scheme}};
  if (g.input_path) em.note_input(*g.input_path);
  em.manifest_path = a.out + ".manifest.json";

  json out = {
      {"manifest", em.manifest.hash()},
      {"tool_version", kToolVersion},
      {"algo", a.algo},
      {"trust", a.trust},
      {"graph", {{"nodes", g.graph.n}, {"edges", g.graph.edges.size()}, {"source", a.graph}}},
      {"gossip_scheme", std::string(to_string(gm.scheme))},
      {"T", a.T},
      {"sigma", a.sigma},
      {"clip", a.clip},
      {"participation", scheme.name()},
      {"bound_convention", "squared"},
      {"reports", json::array()},
  };
  for (const auto& r : reports) out["reports"].push_back(report_to_json(r));
  if (a.trust == "pndp") {
    json buckets = json::array();
    for (const auto& b : distance_buckets(reports))
      buckets.push_back({{"distance", b.distance},
                         {"count", b.count},
                         {"min_eps", b.min_eps},
                         {"mean_eps", b.mean_eps},
                         {"max_eps", b.max_eps}});
    out["distance_buckets"] = buckets;
  }
  em.write_json(a.out, out);

  if (!a.csv.empty()) {
    std::string text = "# manifest " + em.manifest.hash() + "\n";
    text += "attacker_set,target,distance,mu,eps_rdp_2,eps_delta\n";
    for (const auto& r : reports) {
      std::string att;
      for (std::size_t i = 0; i < r.attackers.size(); ++i)
        att += (i ? ";" : "") + std::to_string(r.attackers[i]);
      text += att + "," + std::to_string(r.target) + "," + std::to_string(r.distance) +
              "," + format_double(r.mu) + "," + format_double(gdp_to_rdp(r.mu, 2.0)) +
              "," + format_double(r.eps_delta.empty() ? 0.0 : r.eps_delta.front().second) +
              "\n";
    }
    em.write_text(a.csv, text);
  }
  em.finish(std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - t0)
                .count());
  std::printf("account %s/%s: %zu report(s) -> %s\n", a.algo.c_str(), a.trust.c_str(),
              reports.size(), a.out.c_str());
  return 0;
}

struct OptimizeArgs {
  std::string graph;
  std::string gossip_scheme = "mh";
  int T = 1;
  std::string participation = "full";
  std::string baseline;  // antipgd | dmf | identity | (empty = mafalda)
  int max_iters = 2000;
  std::string out;
};

int cmd_optimize(const CommonArgs& common, const std::vector<std::string>& argv,
                 const OptimizeArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  GraphArg g = load_graph_arg(a.graph);
  const GossipMatrix gm = gossip_from_graph(g.graph, parse_gossip_scheme(a.gossip_scheme));
  const ParticipationScheme scheme = parse_participation(a.participation);

  OptimizerConfig opt;
  opt.max_iters = a.max_iters;
  opt.record_trajectory = true;

  const GramWorkload gram = gram_workload(gm, a.T);
  const LowerTriangular l = cholesky(gram.h);

  LowerTriangular c;
  json sidecar;
  if (a.baseline == "identity") {
    c = LowerTriangular::identity(a.T);
  } else if (a.baseline == "antipgd") {
    c = antipgd_local(a.T);
  } else if (a.baseline == "dmf") {
    c = dmf_baseline(a.T, scheme, opt).c;
  } else if (a.baseline.empty() || a.baseline == "mafalda") {
    OptimizeResult res = optimize_correlation(gram, scheme, opt);
    c = res.c;
    sidecar["trajectory"] = res.trajectory;
    sidecar["iterations"] = res.iterations;
  } else {
    fail(errc::invalid_argument, "unknown baseline: " + a.baseline);
  }

  const double obj = objective(l, c, scheme);
  const double obj_identity = objective(l, LowerTriangular::identity(a.T), scheme);
  const auto patterns = enumerate_local_patterns(scheme, a.T);
  const double sens_sq = sensitivity_sq_bound(c.mat(), nullptr, patterns, 1.0);
  const Matrix lc = right_divide_lower(l.mat(), c);
  const double util = lc.frobenius_norm() * lc.frobenius_norm();

  Emitter em;
  em.manifest.command = argv;
  em.manifest.threads = common.threads;
  em.manifest.config = {{"graph", a.graph},     {"T", a.T},
                        {"participation", a.participation},
                        {"baseline", a.baseline}, {"max_iters", a.max_iters},
                        {"gossip_scheme", a.gossip_scheme}};
  if (g.input_path) em.note_input(*g.input_path);
  em.manifest_path = a.out + ".manifest.json";
  em.write_matrix(a.out, c.mat());
  sidecar["manifest"] = em.manifest.hash();
  sidecar["objective"] = obj;
  sidecar["objective_identity"] = obj_identity;
  sidecar["sens_sq"] = sens_sq;
  sidecar["utility_norm_sq"] = util;
  sidecar["gram_provenance"] = gram.provenance;
  em.write_json(a.out + ".meta.json", sidecar);
  em.finish(std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - t0)
                .count());
  std::printf("optimize T=%d: objective %.6g (identity %.6g) -> %s\n", a.T, obj,
              obj_identity, a.out.c_str());
  return 0;
}

struct SimulateArgs {
  std::string graph;
  std::string gossip_scheme = "mh";
  std::string dataset;
  std::string target = "target";
  double test_fraction = 0.2;
  std::string algo = "dpdsgd";
  std::string c_matrix;
  int T = 100;
  double sigma = 0.0;
  double clip = 1.0;
  double eta = 0.05;
  int batch = 1;
  std::string model = "mlp";
  int hidden = 64;
  std::string seeds = "1";
  std::string participation = "full";
  double delta = 1e-6;
  bool compare = false;
  std::string methods = "none,dpdsgd,antipgd,mafalda,dmf";
  std::string out;
};

Method parse_method(const std::string& s) {
  if (s == "none" || s == "nonprivate") return Method::nonprivate;
  if (s == "dpdsgd") return Method::dpdsgd;
  if (s == "antipgd") return Method::antipgd;
  if (s == "mafalda") return Method::mafalda;
  if (s == "dmf") return Method::dmf;
  fail(errc::invalid_argument, "unknown method: " + s);
}

std::string trace_csv(const TrainingTrace& trace, const std::string& manifest_hash) {
  std::string text = "# manifest " + manifest_hash + "\n";
  text += "step,test_mse,train_mse,wallclock_ms\n";
  for (std::size_t t = 0; t < trace.test_mse.size(); ++t)
    text += std::to_string(t) + "," + format_double(trace.test_mse[t]) + "," +
            format_double(trace.train_mse[t]) + ",0\n";
  if (trace.diverged) text += "# diverged\n";
  return text;
}

int cmd_simulate(const CommonArgs& common, const std::vector<std::string>& argv,
                 const SimulateArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  GraphArg g = load_graph_arg(a.graph);

  Dataset ds;
  const bool synth = a.dataset.rfind("synth:", 0) == 0;
  if (synth) {
    // synth:N,d[,seed]
    const auto nums = parse_int_list(a.dataset.substr(6));
    require(nums.size() >= 2, errc::invalid_argument, "synth:N,d[,seed]");
    ds = synth_regression(nums[0], nums[1], nums.size() > 2 ? nums[2] : 1,
                          0.1, a.test_fraction);
  } else {
    ds = load_csv_dataset(a.dataset, a.target, a.test_fraction, 1);
  }

  SimConfig cfg;
  cfg.gossip = gossip_from_graph(g.graph, parse_gossip_scheme(a.gossip_scheme));
  cfg.T = a.T;
  cfg.eta = a.eta;
  cfg.clip = a.clip;
  cfg.sigma = a.sigma;
  cfg.batch = a.batch;
  cfg.scheme = parse_participation(a.participation);
  cfg.model.arch = a.model == "linear" ? ModelSpec::Arch::linear : ModelSpec::Arch::mlp;
  cfg.model.input_dim = static_cast<int>(ds.dim());
  cfg.model.hidden = a.hidden;

  const std::vector<std::uint64_t> seeds = parse_seed_list(a.seeds);
  require(!seeds.empty(), errc::invalid_argument, "need at least one seed");

  Emitter em;
  em.manifest.command = argv;
  em.manifest.threads = common.threads;
  em.manifest.config = {{"graph", a.graph},     {"dataset", a.dataset},
                        {"target", a.target},   {"algo", a.algo},
                        {"c_matrix", a.c_matrix}, {"T", a.T},
                        {"sigma", a.sigma},     {"clip", a.clip},
                        {"eta", a.eta},         {"batch", a.batch},
                        {"model", a.model},     {"hidden", a.hidden},
                        {"seeds", a.seeds},     {"participation", a.participation},
                        {"compare", a.compare}, {"methods", a.methods},
                        {"gossip_scheme", a.gossip_scheme},
                        {"test_fraction", a.test_fraction},
                        {"delta", a.delta}};
  if (g.input_path) em.note_input(*g.input_path);
  if (!synth) em.note_input(a.dataset);
  if (!a.c_matrix.empty()) em.note_input(a.c_matrix);
  em.manifest_path = a.out + ".manifest.json";
  const std::string mh = em.manifest.hash();

  if (a.compare) {
    std::vector<Method> methods;
    {
      std::istringstream ss(a.methods);
      std::string item;
      while (std::getline(ss, item, ','))
        if (!item.empty()) methods.push_back(parse_method(item));
    }
    const ComparisonResult result = run_comparison(cfg, ds, methods, seeds, a.delta);
    std::string text = "# manifest " + mh + "\n";
    text += "method,sigma,seeds,diverged,mean_final_loss,std_final_loss,mu_ldp,eps_rdp_2,eps_delta\n";
    json jrows = json::array();
    for (const auto& row : result.rows) {
      text += std::string(to_string(row.method)) + "," + format_double(row.sigma) + "," +
              std::to_string(row.seeds) + "," + std::to_string(row.diverged_runs) + "," +
              format_double(row.mean_final_loss) + "," + format_double(row.std_final_loss) +
              "," + format_double(row.mu_ldp) + "," + format_double(row.eps_rdp2) + "," +
              format_double(row.eps_delta) + "\n";
      jrows.push_back({{"method", to_string(row.method)},
                       {"sigma", row.sigma},
                       {"seeds", row.seeds},
                       {"diverged", row.diverged_runs},
                       {"mean_final_loss", row.mean_final_loss},
                       {"std_final_loss", row.std_final_loss},
                       {"mu_ldp", row.mu_ldp},
                       {"eps_rdp_2", row.eps_rdp2},
                       {"eps_delta", row.eps_delta}});
    }
    for (std::size_t m = 0; m < result.methods.size(); ++m)
      for (std::size_t s = 0; s < seeds.size(); ++s) {
        const std::string path = stem_insert(
            a.out, std::string("_") + to_string(result.methods[m]) + "_seed" +
                       std::to_string(seeds[s]));
        em.write_text(path, trace_csv(result.traces[m][s], mh));
      }
    em.write_text(a.out, text);
    em.write_json(a.out + ".meta.json", {{"manifest", mh}, {"rows", jrows}});
  } else {
    const Method method = parse_method(a.algo);
    if (!a.c_matrix.empty()) {
      cfg.c_local = LowerTriangular::from_matrix(load_matrix_csv(a.c_matrix));
    } else {
      cfg.c_local = method_correlation(method, cfg.gossip, cfg.T, cfg.scheme);
    }
    if (method == Method::nonprivate) cfg.sigma = 0.0;

    std::vector<double> finals;
    int diverged = 0;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      cfg.seed = seeds[s];
      const TrainingTrace trace = run_mf_dsgd(cfg, ds);
      if (trace.diverged) ++diverged;
      finals.push_back(final_loss(trace));
      const std::string path =
          seeds.size() == 1
              ? a.out
              : stem_insert(a.out, "_seed" + std::to_string(seeds[s]));
      em.write_text(path, trace_csv(trace, mh));
    }
    if (seeds.size() > 1) {
      double mean = 0.0;
      for (double f : finals) mean += f;
      mean /= static_cast<double>(finals.size());
      double var = 0.0;
      for (double f : finals) var += (f - mean) * (f - mean);
      var /= static_cast<double>(finals.size());
      std::string text = "# manifest " + mh + "\n";
      text += "seed,final_loss\n";
      for (std::size_t s = 0; s < seeds.size(); ++s)
        text += std::to_string(seeds[s]) + "," + format_double(finals[s]) + "\n";
      text += "mean," + format_double(mean) + "\n";
      text += "std," + format_double(std::sqrt(var)) + "\n";
      em.write_text(a.out, text);
    }
  }

  em.finish(std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - t0)
                .count());
  std::printf("simulate %s: wrote %s\n", a.algo.c_str(), a.out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------

int run_command(const std::vector<std::string>& argv) {
  CLI::App app{"matrix-factorization privacy accounting and simulation for "
               "decentralized learning"};
  app.require_subcommand(1);

  CommonArgs common;
  app.add_option("--threads", common.threads,
                 "worker cap; outputs are thread-count independent");
  app.add_option("--config", common.config_path, "JSON config with default values");

  // graph
  auto* graph = app.add_subcommand("graph", "graph tooling");
  graph->require_subcommand(1);
  auto* gen = graph->add_subcommand("gen", "generate a graph");
  std::string gen_type = "er";
  int gen_n = 10;
  double gen_p = 0.2;
  std::uint64_t gen_seed = 1;
  std::string gen_out;
  auto* gen_type_o = gen->add_option("--type", gen_type, "er|complete|ring");
  auto* gen_n_o = gen->add_option("--n", gen_n, "node count");
  auto* gen_p_o = gen->add_option("--p", gen_p, "edge probability (er)");
  auto* gen_seed_o = gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--out", gen_out, "edge-list output path")->required();

  auto* info = graph->add_subcommand("info", "node/edge counts and distance histogram");
  std::string info_graph, info_out;
  info->add_option("graph", info_graph, "edge-list path or 'florentine'")->required();
  info->add_option("--out", info_out, "write CSV here instead of stdout");

  // workload
  auto* workload = app.add_subcommand("workload", "build workload operators");
  auto* wbuild = workload->add_subcommand("build", "build a workload");
  WorkloadArgs wargs;
  auto* w_algo = wbuild->add_option("--algo", wargs.algo, "dsgd|muffliato|antipgd|decor|zipdl");
  wbuild->add_option("--graph", wargs.graph, "edge-list path or 'florentine'")->required();
  auto* w_T = wbuild->add_option("--T", wargs.T, "steps");
  auto* w_K = wbuild->add_option("--K", wargs.K, "gossip rounds per step (muffliato)");
  auto* w_gs = wbuild->add_option("--gossip-scheme", wargs.gossip_scheme, "mh|uniform");
  auto* w_os = wbuild->add_option("--orientation-seed", wargs.orientation_seed,
                                  "decor edge orientation seed");
  wbuild->add_option("--materialize", wargs.materialize, "write dense matrix CSV");

  // trust
  auto* trust = app.add_subcommand("trust", "attacker views");
  auto* tview = trust->add_subcommand("view", "emit the (A, B, C) view");
  TrustArgs targs;
  auto* t_algo = tview->add_option("--algo", targs.algo, "algorithm");
  auto* t_trust = tview->add_option("--trust", targs.trust, "ldp|pndp|secldp");
  auto* t_att = tview->add_option("--attackers", targs.attackers, "comma-separated node ids");
  tview->add_option("--graph", targs.graph, "edge-list path or 'florentine'")->required();
  auto* t_T = tview->add_option("--T", targs.T, "steps");
  auto* t_K = tview->add_option("--K", targs.K, "muffliato rounds");
  auto* t_gs = tview->add_option("--gossip-scheme", targs.gossip_scheme, "mh|uniform");
  auto* t_os = tview->add_option("--orientation-seed", targs.orientation_seed, "decor");
  tview->add_option("--out-prefix", targs.out_prefix, "prefix for A/B/C/meta files")
      ->required();

  // account
  auto* account = app.add_subcommand("account", "privacy accounting reports");
  AccountArgs aargs;
  auto* a_algo = account->add_option("--algo", aargs.algo, "algorithm");
  auto* a_trust = account->add_option("--trust", aargs.trust, "ldp|pndp");
  auto* a_att = account->add_option("--attackers", aargs.attackers, "pndp attackers");
  account->add_option("--graph", aargs.graph, "edge-list path or 'florentine'")->required();
  auto* a_T = account->add_option("--T", aargs.T, "steps");
  auto* a_K = account->add_option("--K", aargs.K, "muffliato rounds");
  account->add_option("--sigma", aargs.sigma, "noise multiplier")->required();
  auto* a_clip = account->add_option("--clip", aargs.clip, "clipping threshold");
  auto* a_part = account->add_option("--participation", aargs.participation,
                                     "single:t|kb:K,B|full");
  auto* a_alphas = account->add_option("--alphas", aargs.alphas, "RDP orders");
  auto* a_delta = account->add_option("--delta", aargs.delta, "delta for (eps,delta)");
  auto* a_gs = account->add_option("--gossip-scheme", aargs.gossip_scheme, "mh|uniform");
  account->add_option("--out", aargs.out, "JSON report path")->required();
  account->add_option("--csv", aargs.csv, "also write per-target CSV");

  // optimize
  auto* optimize = app.add_subcommand("optimize", "optimize the local correlation");
  OptimizeArgs oargs;
  optimize->add_option("--graph", oargs.graph, "edge-list path or 'florentine'")->required();
  auto* o_T = optimize->add_option("--T", oargs.T, "steps");
  auto* o_part = optimize->add_option("--participation", oargs.participation,
                                      "single:t|kb:K,B|full");
  auto* o_base = optimize->add_option("--baseline", oargs.baseline,
                                      "antipgd|dmf|identity (default: optimize)");
  auto* o_iters = optimize->add_option("--max-iters", oargs.max_iters, "iteration cap");
  auto* o_gs = optimize->add_option("--gossip-scheme", oargs.gossip_scheme, "mh|uniform");
  optimize->add_option("--out", oargs.out, "C matrix CSV path")->required();

  // simulate
  auto* simulate =
      app.add_subcommand("simulate", "run correlated-noise gossip SGD training");
  SimulateArgs sargs;
  simulate->add_option("--graph", sargs.graph, "edge-list path or 'florentine'")->required();
  simulate->add_option("--dataset", sargs.dataset, "CSV path or synth:N,d[,seed]")->required();
  auto* s_target = simulate->add_option("--target", sargs.target, "target column");
  auto* s_algo = simulate->add_option("--algo", sargs.algo,
                                      "none|dpdsgd|antipgd|mafalda|dmf");
  auto* s_cm = simulate->add_option("--c-matrix", sargs.c_matrix, "C_local CSV override");
  auto* s_T = simulate->add_option("--T", sargs.T, "steps");
  auto* s_sigma = simulate->add_option("--sigma", sargs.sigma, "noise multiplier");
  auto* s_clip = simulate->add_option("--clip", sargs.clip, "clipping threshold");
  auto* s_eta = simulate->add_option("--eta", sargs.eta, "learning rate");
  auto* s_batch = simulate->add_option("--batch", sargs.batch, "per-node batch size");
  auto* s_model = simulate->add_option("--model", sargs.model, "linear|mlp");
  auto* s_hidden = simulate->add_option("--hidden", sargs.hidden, "mlp hidden width");
  auto* s_seed = simulate->add_option("--seed", sargs.seeds, "seed");
  auto* s_seeds = simulate->add_option("--seeds", sargs.seeds, "seed list, e.g. 1..5");
  auto* s_part = simulate->add_option("--participation", sargs.participation,
                                      "accounting participation scheme");
  auto* s_delta = simulate->add_option("--delta", sargs.delta, "delta for reports");
  auto* s_tf = simulate->add_option("--test-fraction", sargs.test_fraction, "test split");
  simulate->add_flag("--compare", sargs.compare, "run the method comparison");
  auto* s_methods = simulate->add_option("--methods", sargs.methods, "compare methods");
  simulate->add_option("--out", sargs.out, "trace/aggregate CSV path")->required();

  // replay
  auto* replay = app.add_subcommand("replay", "re-run a recorded manifest");
  std::string replay_path;
  replay->add_option("manifest", replay_path, "manifest JSON path")->required();

  std::vector<const char*> cargv;
  cargv.reserve(argv.size());
  for (const auto& s : argv) cargv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  if (replay->parsed()) {
    const RunManifest m = RunManifest::load(replay_path);
    require(!m.command.empty(), errc::parse_error, "manifest has no command");
    return run_command(m.command);
  }

  if (gen->parsed()) {
    const auto cfg = ConfigDefaults::load(common.config_path, "graph");
    cfg.apply(gen_type_o, "type", gen_type);
    cfg.apply(gen_n_o, "n", gen_n);
    cfg.apply(gen_p_o, "p", gen_p);
    cfg.apply(gen_seed_o, "seed", gen_seed);
    return cmd_graph_gen(common, argv, gen_type, gen_n, gen_p, gen_seed, gen_out);
  }
  if (info->parsed()) return cmd_graph_info(common, argv, info_graph, info_out);
  if (wbuild->parsed()) {
    const auto cfg = ConfigDefaults::load(common.config_path, "workload");
    cfg.apply(w_algo, "algo", wargs.algo);
    cfg.apply(w_T, "T", wargs.T);
    cfg.apply(w_K, "K", wargs.K);
    cfg.apply(w_gs, "gossip_scheme", wargs.gossip_scheme);
    cfg.apply(w_os, "orientation_seed", wargs.orientation_seed);
    return cmd_workload(common, argv, wargs);
  }
  if (tview->parsed()) {
    const auto cfg = ConfigDefaults::load(common.config_path, "trust");
    cfg.apply(t_algo, "algo", targs.algo);
    cfg.apply(t_trust, "trust", targs.trust);
    cfg.apply(t_att, "attackers", targs.attackers);
    cfg.apply(t_T, "T", targs.T);
    cfg.apply(t_K, "K", targs.K);
    cfg.apply(t_gs, "gossip_scheme", targs.gossip_scheme);
    cfg.apply(t_os, "orientation_seed", targs.orientation_seed);
    return cmd_trust(common, argv, targs);
  }
  if (account->parsed()) {
    const auto cfg = ConfigDefaults::load(common.config_path, "account");
    cfg.apply(a_algo, "algo", aargs.algo);
    cfg.apply(a_trust, "trust", aargs.trust);
    cfg.apply(a_att, "attackers", aargs.attackers);
    cfg.apply(a_T, "T", aargs.T);
    cfg.apply(a_K, "K", aargs.K);
    cfg.apply(a_clip, "clip", aargs.clip);
    cfg.apply(a_part, "participation", aargs.participation);
    cfg.apply(a_alphas, "alphas", aargs.alphas);
    cfg.apply(a_delta, "delta", aargs.delta);
    cfg.apply(a_gs, "gossip_scheme", aargs.gossip_scheme);
    return cmd_account(common, argv, aargs);
  }
  if (optimize->parsed()) {
    const auto cfg = ConfigDefaults::load(common.config_path, "optimize");
    cfg.apply(o_T, "T", oargs.T);
    cfg.apply(o_part, "participation", oargs.participation);
    cfg.apply(o_base, "baseline", oargs.baseline);
    cfg.apply(o_iters, "max_iters", oargs.max_iters);
    cfg.apply(o_gs, "gossip_scheme", oargs.gossip_scheme);
    return cmd_optimize(common, argv, oargs);
  }
  if (simulate->parsed()) {
    const auto cfg = ConfigDefaults::load(common.config_path, "simulate");
    cfg.apply(s_target, "target", sargs.target);
    cfg.apply(s_algo, "algo", sargs.algo);
    cfg.apply(s_cm, "c_matrix", sargs.c_matrix);
    cfg.apply(s_T, "T", sargs.T);
    cfg.apply(s_sigma, "sigma", sargs.sigma);
    cfg.apply(s_clip, "clip", sargs.clip);
    cfg.apply(s_eta, "eta", sargs.eta);
    cfg.apply(s_batch, "batch", sargs.batch);
    cfg.apply(s_model, "model", sargs.model);
    cfg.apply(s_hidden, "hidden", sargs.hidden);
    if ((s_seed == nullptr || s_seed->count() == 0) &&
        (s_seeds == nullptr || s_seeds->count() == 0))
      cfg.apply(static_cast<const CLI::Option*>(nullptr), "seeds", sargs.seeds);
    cfg.apply(s_part, "participation", sargs.participation);
    cfg.apply(s_delta, "delta", sargs.delta);
    cfg.apply(s_tf, "test_fraction", sargs.test_fraction);
    cfg.apply(s_methods, "methods", sargs.methods);
    return cmd_simulate(common, argv, sargs);
  }
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  try {
    return run_command(args);
  } catch (const dpmesh::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumeric;
  }
}
