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

#include <stdexcept>
#include <string>

namespace dpmesh {

/// Error categories used across the library. The CLI maps these onto
/// process exit codes (usage/input/numeric/memory).
enum class errc {
  // linear algebra
  not_symmetric,
  not_psd,
  svd_no_convergence,
  rank_deficient,
  out_of_memory,
  // graphs
  connectivity_retries_exhausted,
  parse_error,
  empty_graph,
  disconnected,
  // workloads
  missing_averaging_matrix,
  // trust
  empty_attacker_set,
  shape_mismatch,
  unsupported_combination,
  factorization_failed,
  no_exact_factorization,
  // accounting
  phase_out_of_range,
  too_large,
  non_positive,
  alpha_out_of_range,
  no_solution,
  // optimizer
  singular_matrix,
  diverged,
  // datasets / simulation
  missing_column,
  non_numeric,
  too_many_nodes,
  non_finite_loss,
  invalid_argument,
};

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace dpmesh
