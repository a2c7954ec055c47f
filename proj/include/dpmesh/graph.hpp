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
#include <deque>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dpmesh/error.hpp"
#include "dpmesh/matrix.hpp"
#include "dpmesh/rng.hpp"

namespace dpmesh {

/// Undirected simple graph on 0-based node ids. Self-loops live in the
/// gossip matrix, never in the edge set.
struct Graph {
  int n = 0;
  std::vector<std::pair<int, int>> edges;  // u < v, sorted, unique

  void canonicalize() {
    for (auto& [u, v] : edges)
      if (u > v) std::swap(u, v);
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  }

  std::vector<std::vector<int>> adjacency() const {
    std::vector<std::vector<int>> adj(n);
    for (const auto& [u, v] : edges) {
      adj[u].push_back(v);
      adj[v].push_back(u);
    }
    for (auto& nb : adj) std::sort(nb.begin(), nb.end());
    return adj;
  }

  std::vector<int> degrees() const {
    std::vector<int> deg(n, 0);
    for (const auto& [u, v] : edges) {
      ++deg[u];
      ++deg[v];
    }
    return deg;
  }

  bool connected() const {
    if (n == 0) return false;
    const auto adj = adjacency();
    std::vector<char> seen(n, 0);
    std::deque<int> queue{0};
    seen[0] = 1;
    int count = 1;
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      for (int v : adj[u])
        if (!seen[v]) {
          seen[v] = 1;
          ++count;
          queue.push_back(v);
        }
    }
    return count == n;
  }
};

/// Erdos-Renyi G(n, p), resampled with a derived seed until connected.
inline Graph erdos_renyi(int n, double p, std::uint64_t seed) {
  require(n >= 2, errc::invalid_argument, "erdos_renyi needs n >= 2");
  require(p > 0.0 && p <= 1.0, errc::invalid_argument,
          "erdos_renyi needs 0 < p <= 1");
  for (int attempt = 0; attempt < 1000; ++attempt) {
    CounterRng rng(seed, 0x4752u /* "GR" */, static_cast<std::uint64_t>(attempt));
    Graph g;
    g.n = n;
    for (int u = 0; u < n; ++u)
      for (int v = u + 1; v < n; ++v)
        if (rng.uniform() < p) g.edges.emplace_back(u, v);
    if (g.connected()) return g;
  }
  fail(errc::connectivity_retries_exhausted,
       "no connected Erdos-Renyi sample in 1000 attempts");
}

inline Graph complete_graph(int n) {
  require(n >= 2, errc::invalid_argument, "complete graph needs n >= 2");
  Graph g;
  g.n = n;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v) g.edges.emplace_back(u, v);
  return g;
}

inline Graph ring_graph(int n) {
  require(n >= 3, errc::invalid_argument, "ring graph needs n >= 3");
  Graph g;
  g.n = n;
  for (int u = 0; u + 1 < n; ++u) g.edges.emplace_back(u, u + 1);
  g.edges.emplace_back(0, n - 1);
  g.canonicalize();
  return g;
}

inline Graph path_graph(int n) {
  require(n >= 2, errc::invalid_argument, "path graph needs n >= 2");
  Graph g;
  g.n = n;
  for (int u = 0; u + 1 < n; ++u) g.edges.emplace_back(u, u + 1);
  return g;
}

struct EdgeListLoad {
  Graph graph;
  std::vector<std::string> labels;  // label of node id i
  int dropped_self_loops = 0;
};

/// Parses "label label" lines; '#' starts a comment; labels are mapped to
/// dense 0-based ids in first-appearance order. Duplicate edges are merged
/// and self-loops dropped (counted).
inline EdgeListLoad parse_edge_list(std::istream& in, const std::string& origin) {
  EdgeListLoad out;
  std::map<std::string, int> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    std::string a, b, extra;
    if (!(ss >> a)) continue;  // blank or comment-only line
    if (!(ss >> b) || (ss >> extra))
      fail(errc::parse_error, origin + ":" + std::to_string(lineno) +
                                  ": expected exactly two labels");
    auto intern = [&](const std::string& label) {
      auto [it, inserted] = ids.emplace(label, static_cast<int>(out.labels.size()));
      if (inserted) out.labels.push_back(label);
      return it->second;
    };
    const int u = intern(a), v = intern(b);
    if (u == v) {
      ++out.dropped_self_loops;
      continue;
    }
    out.graph.edges.emplace_back(u, v);
  }
  out.graph.n = static_cast<int>(out.labels.size());
  require(out.graph.n > 0, errc::empty_graph, origin + ": no edges found");
  out.graph.canonicalize();
  return out;
}

inline EdgeListLoad load_edge_list_full(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), errc::parse_error, "cannot open: " + path);
  return parse_edge_list(in, path);
}

inline Graph load_edge_list(const std::string& path) {
  return load_edge_list_full(path).graph;
}

inline std::string edge_list_to_text(const Graph& g) {
  std::string out;
  out += "# nodes " + std::to_string(g.n) + " edges " +
         std::to_string(g.edges.size()) + "\n";
  for (const auto& [u, v] : g.edges)
    out += std::to_string(u) + " " + std::to_string(v) + "\n";
  return out;
}

inline void save_edge_list(const Graph& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), errc::parse_error, "cannot open for writing: " + path);
  out << edge_list_to_text(g);
  require(out.good(), errc::parse_error, "write failed: " + path);
}

/// Marriage ties between fifteenth-century Florentine families. The isolated
/// Pucci family is excluded (as in the usual 15-node form of the dataset) so
/// the graph is connected.
inline const char* florentine_edge_list_text() {
  return
      "# Florentine families marriage network, 15 nodes / 20 edges.\n"
      "# The 16th family (Pucci) has no marriage ties and is omitted,\n"
      "# keeping the graph connected.\n"
      "Acciaiuoli Medici\n"
      "Albizzi Ginori\n"
      "Albizzi Guadagni\n"
      "Albizzi Medici\n"
      "Barbadori Castellani\n"
      "Barbadori Medici\n"
      "Bischeri Guadagni\n"
      "Bischeri Peruzzi\n"
      "Bischeri Strozzi\n"
      "Castellani Peruzzi\n"
      "Castellani Strozzi\n"
      "Guadagni Lamberteschi\n"
      "Guadagni Tornabuoni\n"
      "Medici Ridolfi\n"
      "Medici Salviati\n"
      "Medici Tornabuoni\n"
      "Pazzi Salviati\n"
      "Peruzzi Strozzi\n"
      "Ridolfi Strozzi\n"
      "Ridolfi Tornabuoni\n";
}

inline EdgeListLoad builtin_florentine_full() {
  std::istringstream in(florentine_edge_list_text());
  return parse_edge_list(in, "<florentine>");
}

inline Graph builtin_florentine() { return builtin_florentine_full().graph; }

enum class GossipScheme { metropolis_hastings, uniform_neighbor };

inline const char* to_string(GossipScheme s) {
  return s == GossipScheme::metropolis_hastings ? "metropolis-hastings"
                                                : "uniform-neighbor";
}

/// Row-stochastic mixing matrix supported on the graph edges plus self-loops.
struct GossipMatrix {
  int n = 0;
  Matrix w;
  GossipScheme scheme = GossipScheme::metropolis_hastings;
};

inline GossipMatrix gossip_from_graph(const Graph& g, GossipScheme scheme) {
  require(g.connected(), errc::disconnected, "gossip matrix needs a connected graph");
  const auto deg = g.degrees();
  GossipMatrix gm;
  gm.n = g.n;
  gm.scheme = scheme;
  gm.w = Matrix(g.n, g.n);
  if (scheme == GossipScheme::metropolis_hastings) {
    for (const auto& [u, v] : g.edges) {
      const double w = 1.0 / (1.0 + std::max(deg[u], deg[v]));
      gm.w(u, v) = w;
      gm.w(v, u) = w;
    }
    for (int u = 0; u < g.n; ++u) {
      double off = 0.0;
      for (int v = 0; v < g.n; ++v)
        if (v != u) off += gm.w(u, v);
      gm.w(u, u) = 1.0 - off;
    }
  } else {
    const auto adj = g.adjacency();
    for (int u = 0; u < g.n; ++u) {
      const double w = 1.0 / (deg[u] + 1.0);
      gm.w(u, u) = w;
      for (int v : adj[u]) gm.w(u, v) = w;
    }
  }
  return gm;
}

/// All-pairs hop distances by breadth-first search from every node.
inline std::vector<std::vector<int>> pairwise_distances(const Graph& g) {
  require(g.connected(), errc::disconnected, "distance table needs a connected graph");
  const auto adj = g.adjacency();
  std::vector<std::vector<int>> dist(g.n, std::vector<int>(g.n, -1));
  for (int src = 0; src < g.n; ++src) {
    auto& d = dist[src];
    d[src] = 0;
    std::deque<int> queue{src};
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      for (int v : adj[u])
        if (d[v] < 0) {
          d[v] = d[u] + 1;
          queue.push_back(v);
        }
    }
  }
  return dist;
}

/// Minimum hop distance from each node to the given source set.
inline std::vector<int> distances_from_set(const Graph& g, const std::vector<int>& sources) {
  require(!sources.empty(), errc::empty_attacker_set, "empty source set");
  const auto adj = g.adjacency();
  std::vector<int> d(g.n, -1);
  std::deque<int> queue;
  for (int s : sources) {
    require(s >= 0 && s < g.n, errc::invalid_argument, "source out of range");
    if (d[s] != 0) {
      d[s] = 0;
      queue.push_back(s);
    }
  }
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    for (int v : adj[u])
      if (d[v] < 0) {
        d[v] = d[u] + 1;
        queue.push_back(v);
      }
  }
  return d;
}

}  // namespace dpmesh
