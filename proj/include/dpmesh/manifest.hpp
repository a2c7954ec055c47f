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

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpmesh/error.hpp"
#include "dpmesh/hashutil.hpp"

namespace dpmesh {

inline constexpr const char* kToolVersion = "0.1.0";

/// Record of one CLI invocation. The manifest hash identifies the
/// computation: tool, version, effective config and input hashes. Output
/// locations, thread counts, wallclock and the raw argv stay out of it, so
/// the same computation carries the same hash wherever it writes and a
/// replayed run's outputs can be byte-compared.
struct RunManifest {
  std::string tool = "dpmesh";
  std::string version = kToolVersion;
  std::vector<std::string> command;            // argv, kept for replay
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, std::string> inputs;   // path -> content hash
  std::map<std::string, std::string> outputs;  // path -> content hash
  long long wallclock_ms = 0;
  int threads = 1;

  std::string hash() const {
    nlohmann::json core = {
        {"tool", tool},
        {"version", version},
        {"config", config},
        {"inputs", inputs},
    };
    return hash_hex(fnv1a64(core.dump()));
  }

  nlohmann::json to_json() const {
    return {
        {"tool", tool},
        {"version", version},
        {"command", command},
        {"config", config},
        {"inputs", inputs},
        {"outputs", outputs},
        {"manifest_hash", hash()},
        {"wallclock_ms", wallclock_ms},
        {"threads", threads},
    };
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), errc::parse_error, "cannot write manifest: " + path);
    out << to_json().dump(2) << "\n";
  }

  static RunManifest load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), errc::parse_error, "cannot open manifest: " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const std::exception& e) {
      fail(errc::parse_error, path + ": " + e.what());
    }
    RunManifest m;
    m.tool = j.value("tool", "dpmesh");
    m.version = j.value("version", "");
    m.command = j.value("command", std::vector<std::string>{});
    m.config = j.value("config", nlohmann::json::object());
    m.inputs = j.value("inputs", std::map<std::string, std::string>{});
    m.outputs = j.value("outputs", std::map<std::string, std::string>{});
    m.wallclock_ms = j.value("wallclock_ms", 0LL);
    m.threads = j.value("threads", 1);
    return m;
  }
};

/// Validates a JSON value against the subset of JSON Schema this project
/// ships: type, properties, required, items. Returns false and fills `err`
/// on the first violation.
inline bool validate_schema(const nlohmann::json& value, const nlohmann::json& schema,
                            std::string* err, const std::string& where = "$") {
  auto set_err = [&](const std::string& msg) {
    if (err) *err = where + ": " + msg;
    return false;
  };
  if (schema.contains("type")) {
    const std::string type = schema["type"].get<std::string>();
    const bool ok =
        (type == "object" && value.is_object()) ||
        (type == "array" && value.is_array()) ||
        (type == "string" && value.is_string()) ||
        (type == "number" && value.is_number()) ||
        (type == "integer" && value.is_number_integer()) ||
        (type == "boolean" && value.is_boolean());
    if (!ok) return set_err("expected type " + type);
  }
  if (schema.contains("required")) {
    for (const auto& key : schema["required"]) {
      const std::string k = key.get<std::string>();
      if (!value.contains(k)) return set_err("missing required key '" + k + "'");
    }
  }
  if (schema.contains("properties") && value.is_object()) {
    for (const auto& [key, sub] : schema["properties"].items()) {
      if (!value.contains(key)) continue;
      if (!validate_schema(value[key], sub, err, where + "." + key)) return false;
    }
  }
  if (schema.contains("items") && value.is_array()) {
    std::size_t i = 0;
    for (const auto& item : value) {
      if (!validate_schema(item, schema["items"], err,
                           where + "[" + std::to_string(i) + "]"))
        return false;
      ++i;
    }
  }
  return true;
}

inline nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), errc::parse_error, "cannot open: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    fail(errc::parse_error, path + ": " + e.what());
  }
  return j;
}

inline void save_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), errc::parse_error, "cannot write: " + path);
  out << text;
  require(out.good(), errc::parse_error, "write failed: " + path);
}

}  // namespace dpmesh
