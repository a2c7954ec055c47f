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
#include <span>
#include <vector>

#include "dpmesh/dataset.hpp"
#include "dpmesh/error.hpp"
#include "dpmesh/rng.hpp"

namespace dpmesh {

/// Regression model with a flat parameter vector: either linear or the
/// fixed one-hidden-layer ReLU perceptron. Gradients are hand-written
/// backpropagation of the squared error.
struct ModelSpec {
  enum class Arch { linear, mlp };

  Arch arch = Arch::mlp;
  int input_dim = 0;
  int hidden = 64;

  std::size_t param_count() const {
    if (arch == Arch::linear) return static_cast<std::size_t>(input_dim) + 1;
    // W1 (hidden x d), b1, w2, b2
    return static_cast<std::size_t>(hidden) * input_dim + hidden + hidden + 1;
  }
};

inline std::vector<double> init_params(const ModelSpec& spec, std::uint64_t seed) {
  std::vector<double> p(spec.param_count(), 0.0);
  if (spec.arch == ModelSpec::Arch::linear) return p;  // zeros
  CounterRng rng(seed, 0x494e4954u /* "INIT" */);
  const double a1 = std::sqrt(6.0 / (spec.input_dim + spec.hidden));
  const double a2 = std::sqrt(6.0 / (spec.hidden + 1));
  std::size_t k = 0;
  for (int i = 0; i < spec.hidden * spec.input_dim; ++i) p[k++] = rng.uniform(-a1, a1);
  k += spec.hidden;  // b1 = 0
  for (int i = 0; i < spec.hidden; ++i) p[k++] = rng.uniform(-a2, a2);
  return p;
}

inline double predict(const ModelSpec& spec, std::span<const double> params,
                      std::span<const double> x) {
  if (spec.arch == ModelSpec::Arch::linear) {
    double out = params[spec.input_dim];
    for (int j = 0; j < spec.input_dim; ++j) out += params[j] * x[j];
    return out;
  }
  const int d = spec.input_dim, h = spec.hidden;
  const double* w1 = params.data();
  const double* b1 = w1 + static_cast<std::size_t>(h) * d;
  const double* w2 = b1 + h;
  const double b2 = w2[h];
  double out = b2;
  for (int i = 0; i < h; ++i) {
    double z = b1[i];
    const double* row = w1 + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < d; ++j) z += row[j] * x[j];
    if (z > 0.0) out += w2[i] * z;
  }
  return out;
}

/// Squared error of one sample; accumulates d(pred - y)^2 / dparams into
/// grad_out.
inline double backprop_sample(const ModelSpec& spec, std::span<const double> params,
                              std::span<const double> x, double y,
                              std::span<double> grad_out) {
  if (spec.arch == ModelSpec::Arch::linear) {
    double pred = params[spec.input_dim];
    for (int j = 0; j < spec.input_dim; ++j) pred += params[j] * x[j];
    const double dpred = 2.0 * (pred - y);
    for (int j = 0; j < spec.input_dim; ++j) grad_out[j] += dpred * x[j];
    grad_out[spec.input_dim] += dpred;
    const double err = pred - y;
    return err * err;
  }
  const int d = spec.input_dim, h = spec.hidden;
  const double* w1 = params.data();
  const double* b1 = w1 + static_cast<std::size_t>(h) * d;
  const double* w2 = b1 + h;
  const double b2 = w2[h];

  std::vector<double> act(h);
  double pred = b2;
  for (int i = 0; i < h; ++i) {
    double z = b1[i];
    const double* row = w1 + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < d; ++j) z += row[j] * x[j];
    act[i] = z > 0.0 ? z : 0.0;
    pred += w2[i] * act[i];
  }
  const double dpred = 2.0 * (pred - y);

  double* g_w1 = grad_out.data();
  double* g_b1 = g_w1 + static_cast<std::size_t>(h) * d;
  double* g_w2 = g_b1 + h;
  g_w2[h] += dpred;                       // b2
  for (int i = 0; i < h; ++i) {
    g_w2[i] += dpred * act[i];
    if (act[i] > 0.0) {
      const double dh = dpred * w2[i];
      g_b1[i] += dh;
      double* row = g_w1 + static_cast<std::size_t>(i) * d;
      for (int j = 0; j < d; ++j) row[j] += dh * x[j];
    }
  }
  const double err = pred - y;
  return err * err;
}

inline double mean_squared_error(const ModelSpec& spec, std::span<const double> params,
                                 const Dataset& ds, const std::vector<int>& idx) {
  require(!idx.empty(), errc::invalid_argument, "mse over empty index set");
  double sum = 0.0;
  for (int i : idx) {
    const double err = predict(spec, params, ds.features.row_span(i)) - ds.targets[i];
    sum += err * err;
  }
  return sum / static_cast<double>(idx.size());
}

}  // namespace dpmesh
