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

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dpmesh/error.hpp"
#include "dpmesh/matrix.hpp"

namespace dpmesh {

/// Shortest decimal form that round-trips a double exactly.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Matrix CSV: one row per line, comma-separated decimals, no header.
inline std::string matrix_to_csv(const Matrix& m) {
  std::string out;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += format_double(m(i, j));
    }
    out += '\n';
  }
  return out;
}

inline void save_matrix_csv(const Matrix& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), errc::parse_error, "cannot open for writing: " + path);
  out << matrix_to_csv(m);
  require(out.good(), errc::parse_error, "write failed: " + path);
}

inline Matrix matrix_from_csv_text(const std::string& text,
                                   const std::string& origin = "<string>") {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used])))
          ++used;
        require(used == cell.size(), errc::parse_error, "trailing junk");
        row.push_back(v);
      } catch (const Error&) {
        throw;
      } catch (...) {
        fail(errc::parse_error, origin + ":" + std::to_string(lineno) +
                                    ": bad number '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      fail(errc::parse_error,
           origin + ":" + std::to_string(lineno) + ": ragged row");
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), errc::parse_error, origin + ": empty matrix CSV");
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

inline Matrix load_matrix_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), errc::parse_error, "cannot open: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return matrix_from_csv_text(buf.str(), path);
}

/// General table CSV with a header row; used for datasets.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

inline CsvTable load_csv_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), errc::parse_error, "cannot open: " + path);
  CsvTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.push_back("");
    if (table.columns.empty()) {
      table.columns = std::move(cells);
    } else {
      if (cells.size() != table.columns.size())
        fail(errc::parse_error,
             path + ":" + std::to_string(lineno) + ": ragged row");
      table.rows.push_back(std::move(cells));
    }
  }
  require(!table.columns.empty(), errc::parse_error, path + ": empty CSV");
  return table;
}

}  // namespace dpmesh
