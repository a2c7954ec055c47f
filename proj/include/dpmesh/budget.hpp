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
#include <cstdlib>
#include <string>

#include "dpmesh/error.hpp"

namespace dpmesh {

/// Dense materialization cap. Controlled by DPMESH_MEM_BUDGET_MB; defaults
/// to 2 GiB. Read on every call so tests can adjust the environment.
inline std::uint64_t memory_budget_bytes() {
  if (const char* env = std::getenv("DPMESH_MEM_BUDGET_MB")) {
    char* end = nullptr;
    const unsigned long long mb = std::strtoull(env, &end, 10);
    if (end != env && mb > 0) return static_cast<std::uint64_t>(mb) << 20;
  }
  return std::uint64_t{2} << 30;
}

inline void check_budget(std::uint64_t bytes, const std::string& what) {
  const std::uint64_t budget = memory_budget_bytes();
  if (bytes > budget) {
    fail(errc::out_of_memory,
         what + " needs " + std::to_string(bytes) + " bytes, budget is " +
             std::to_string(budget) + " (set DPMESH_MEM_BUDGET_MB to raise)");
  }
}

}  // namespace dpmesh
