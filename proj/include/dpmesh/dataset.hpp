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

#include "dpmesh/csv.hpp"
#include "dpmesh/error.hpp"
#include "dpmesh/matrix.hpp"
#include "dpmesh/rng.hpp"

namespace dpmesh {

/// Regression dataset, standardized to zero mean / unit variance per column
/// using train-split statistics only.
struct Dataset {
  Matrix features;             // N x d
  std::vector<double> targets; // N
  std::vector<int> train_idx;
  std::vector<int> test_idx;
  int constant_feature_columns = 0;  // zeroed by the sigma guard

  std::size_t size() const { return targets.size(); }
  std::size_t dim() const { return features.cols(); }
};

namespace detail {

inline void shuffled_split(std::size_t n, double test_fraction, std::uint64_t seed,
                           std::vector<int>& train, std::vector<int>& test) {
  require(test_fraction >= 0.0 && test_fraction < 1.0, errc::invalid_argument,
          "test fraction must lie in [0, 1)");
  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  CounterRng rng(seed, 0x53504c49u /* "SPLI" */);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(order[i - 1], order[j]);
  }
  const std::size_t n_test = static_cast<std::size_t>(std::llround(
      test_fraction * static_cast<double>(n)));
  test.assign(order.begin(), order.begin() + n_test);
  train.assign(order.begin() + n_test, order.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
}

/// Standardizes features and target in place with train statistics.
inline void standardize(Dataset& ds) {
  const double guard = 1e-12;
  for (std::size_t j = 0; j < ds.features.cols(); ++j) {
    double mean = 0.0;
    for (int i : ds.train_idx) mean += ds.features(i, j);
    mean /= static_cast<double>(ds.train_idx.size());
    double var = 0.0;
    for (int i : ds.train_idx) {
      const double c = ds.features(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<double>(ds.train_idx.size());
    const double sd = std::sqrt(var);
    if (sd <= guard) {
      ++ds.constant_feature_columns;
      for (std::size_t i = 0; i < ds.features.rows(); ++i) ds.features(i, j) = 0.0;
      continue;
    }
    for (std::size_t i = 0; i < ds.features.rows(); ++i)
      ds.features(i, j) = (ds.features(i, j) - mean) / sd;
  }
  double mean = 0.0;
  for (int i : ds.train_idx) mean += ds.targets[i];
  mean /= static_cast<double>(ds.train_idx.size());
  double var = 0.0;
  for (int i : ds.train_idx) {
    const double c = ds.targets[i] - mean;
    var += c * c;
  }
  var /= static_cast<double>(ds.train_idx.size());
  const double sd = std::sqrt(var);
  for (double& y : ds.targets) y = sd <= guard ? 0.0 : (y - mean) / sd;
}

}  // namespace detail

inline Dataset make_dataset(Matrix features, std::vector<double> targets,
                            double test_fraction, std::uint64_t seed) {
  require(features.rows() == targets.size(), errc::shape_mismatch,
          "feature/target row counts differ");
  require(!targets.empty(), errc::parse_error, "empty dataset");
  Dataset ds;
  ds.features = std::move(features);
  ds.targets = std::move(targets);
  detail::shuffled_split(ds.targets.size(), test_fraction, seed, ds.train_idx,
                         ds.test_idx);
  require(!ds.train_idx.empty(), errc::invalid_argument, "empty train split");
  detail::standardize(ds);
  return ds;
}

/// CSV ingestion: header row names the columns; every column must be
/// numeric; the named target column becomes y and the rest the features.
inline Dataset load_csv_dataset(const std::string& path, const std::string& target_column,
                                double test_fraction, std::uint64_t seed) {
  const CsvTable table = load_csv_table(path);
  const auto target_it =
      std::find(table.columns.begin(), table.columns.end(), target_column);
  require(target_it != table.columns.end(), errc::missing_column,
          "target column '" + target_column + "' not in " + path);
  const std::size_t target_pos =
      static_cast<std::size_t>(target_it - table.columns.begin());
  require(table.columns.size() >= 2, errc::missing_column,
          "need at least one feature column");
  require(!table.rows.empty(), errc::parse_error, path + ": no data rows");

  auto parse = [&](const std::string& cell, std::size_t row) {
    try {
      std::size_t used = 0;
      const double v = std::stod(cell, &used);
      while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used])))
        ++used;
      require(used == cell.size(), errc::non_numeric, "trailing junk");
      return v;
    } catch (const Error&) {
      fail(errc::non_numeric,
           path + " row " + std::to_string(row + 2) + ": non-numeric '" + cell + "'");
    } catch (...) {
      fail(errc::non_numeric,
           path + " row " + std::to_string(row + 2) + ": non-numeric '" + cell + "'");
    }
  };

  Matrix features(table.rows.size(), table.columns.size() - 1);
  std::vector<double> targets(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    std::size_t out_j = 0;
    for (std::size_t j = 0; j < table.columns.size(); ++j) {
      const double v = parse(table.rows[i][j], i);
      if (j == target_pos)
        targets[i] = v;
      else
        features(i, out_j++) = v;
    }
  }
  return make_dataset(std::move(features), std::move(targets), test_fraction, seed);
}

/// Synthetic linear-regression data: x ~ N(0, I), y = <w, x> + noise.
inline Dataset synth_regression(int n_samples, int d, std::uint64_t seed,
                                double noise_std = 0.1, double test_fraction = 0.2) {
  require(n_samples >= 2 && d >= 1, errc::invalid_argument, "bad synth size");
  CounterRng rng(seed, 0x53594e54u /* "SYNT" */);
  std::vector<double> w(d);
  for (double& v : w) v = rng.gaussian();
  Matrix x(n_samples, d);
  std::vector<double> y(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    double dot = 0.0;
    for (int j = 0; j < d; ++j) {
      x(i, j) = rng.gaussian();
      dot += w[j] * x(i, j);
    }
    y[i] = dot + noise_std * rng.gaussian();
  }
  return make_dataset(std::move(x), std::move(y), test_fraction, seed);
}

/// Random near-equal shards of the train split, remainder spread over the
/// first shards; deterministic per seed.
inline std::vector<std::vector<int>> partition_uniform(const Dataset& ds, int n_nodes,
                                                       std::uint64_t seed) {
  require(n_nodes >= 1, errc::invalid_argument, "need at least one node");
  require(static_cast<std::size_t>(n_nodes) <= ds.train_idx.size(),
          errc::too_many_nodes, "more nodes than training points");
  std::vector<int> order = ds.train_idx;
  CounterRng rng(seed, 0x50415254u /* "PART" */);
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(order[i - 1], order[j]);
  }
  const std::size_t base = order.size() / n_nodes;
  const std::size_t extra = order.size() % n_nodes;
  std::vector<std::vector<int>> shards(n_nodes);
  std::size_t pos = 0;
  for (int u = 0; u < n_nodes; ++u) {
    const std::size_t count = base + (static_cast<std::size_t>(u) < extra ? 1 : 0);
    shards[u].assign(order.begin() + pos, order.begin() + pos + count);
    pos += count;
  }
  return shards;
}

}  // namespace dpmesh
