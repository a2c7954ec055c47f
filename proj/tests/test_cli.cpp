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

#include <doctest.h>

#include <cstdlib>
#include <sys/wait.h>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "dpmesh/csv.hpp"
#include "dpmesh/manifest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = DPMESH_CLI_PATH;
const std::string kSource = DPMESH_SOURCE_DIR;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("dpmesh_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace

TEST_CASE("cli: graph gen then info") {
  TempDir tmp;
  const std::string graph = tmp.file("er.txt");
  REQUIRE(run("graph gen --type er --n 12 --p 0.4 --seed 3 --out " + graph) == 0);
  REQUIRE(fs::exists(graph));
  const std::string info = tmp.file("info.csv");
  REQUIRE(run("graph info " + graph + " --out " + info) == 0);
  const std::string body = slurp(info);
  CHECK(body.find("metric,value") != std::string::npos);
  CHECK(body.find("nodes,12") != std::string::npos);
}

TEST_CASE("cli: missing required option exits with usage code") {
  TempDir tmp;
  // --sigma is required for account
  CHECK(run("account --graph florentine --algo dsgd --trust ldp --T 3 --out " +
            tmp.file("r.json")) == 2);
}

TEST_CASE("cli: bad input file exits with input code") {
  TempDir tmp;
  CHECK(run("graph info " + tmp.file("missing.txt")) == 3);
}

TEST_CASE("cli: numeric failure exits with the numeric code") {
  TempDir tmp;
  // sigma = 0 is rejected by the accountant
  CHECK(run("account --graph florentine --algo dsgd --trust ldp --T 3 --sigma 0 "
            "--out " + tmp.file("r.json")) == 4);
}

TEST_CASE("cli: account report validates against the shipped schema") {
  TempDir tmp;
  const std::string report = tmp.file("report.json");
  REQUIRE(run("account --graph florentine --algo dsgd --trust pndp --attackers 0 "
              "--T 5 --sigma 1 --participation full --out " +
              report + " --csv " + tmp.file("report.csv")) == 0);
  const json schema = dpmesh::load_json(kSource + "/data/report.schema.json");
  const json doc = dpmesh::load_json(report);
  std::string err;
  const bool ok = dpmesh::validate_schema(doc, schema, &err);
  INFO(err);
  CHECK(ok);
  CHECK(doc["reports"].size() == 14);  // one row per non-attacker node

  // the CSV carries a header and one row per target
  const std::string csv = slurp(tmp.file("report.csv"));
  CHECK(csv.find("attacker_set,target,distance,mu,eps_rdp_2,eps_delta") !=
        std::string::npos);

  // ldp gives a single pair-independent row
  const std::string ldp_report = tmp.file("ldp.json");
  REQUIRE(run("account --graph florentine --algo dsgd --trust ldp --T 5 --sigma 1 "
              "--participation full --out " +
              ldp_report) == 0);
  CHECK(dpmesh::load_json(ldp_report)["reports"].size() == 1);
}

TEST_CASE("cli: optimize emits a lower-triangular C and its sidecar") {
  TempDir tmp;
  const std::string graph = tmp.file("er.txt");
  REQUIRE(run("graph gen --type er --n 10 --p 0.5 --seed 2 --out " + graph) == 0);
  const std::string c_path = tmp.file("C.csv");
  REQUIRE(run("optimize --graph " + graph +
              " --T 8 --participation kb:2,4 --max-iters 150 --out " + c_path) == 0);
  const json meta = dpmesh::load_json(c_path + ".meta.json");
  CHECK(meta["objective"].get<double>() <= meta["objective_identity"].get<double>());
  CHECK(meta.contains("trajectory"));

  const std::string body = slurp(c_path);
  std::istringstream lines(body);
  std::string first;
  std::getline(lines, first);
  CHECK(first.find(',') != std::string::npos);

  // baseline identity emits the identity matrix
  const std::string id_path = tmp.file("I.csv");
  REQUIRE(run("optimize --graph " + graph +
              " --T 3 --participation full --baseline identity --out " + id_path) == 0);
  CHECK(slurp(id_path) == "1,0,0\n0,1,0\n0,0,1\n");
}

TEST_CASE("cli: simulate writes a trace with the declared columns") {
  TempDir tmp;
  const std::string trace = tmp.file("trace.csv");
  REQUIRE(run("simulate --graph florentine --dataset synth:200,4 --algo none "
              "--model linear --T 12 --sigma 0 --out " +
              trace) == 0);
  const std::string body = slurp(trace);
  CHECK(body.find("step,test_mse,train_mse,wallclock_ms") != std::string::npos);
  // training on synthetic linear data actually reduces the loss
  double first = -1, last = -1;
  std::istringstream lines(body);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty() || line[0] == '#' || line[0] == 's') continue;
    std::istringstream cells(line);
    std::string step, mse;
    std::getline(cells, step, ',');
    std::getline(cells, mse, ',');
    if (first < 0) first = std::stod(mse);
    last = std::stod(mse);
  }
  CHECK(last < first);
}

TEST_CASE("cli: multi-seed simulate emits per-seed traces and an aggregate") {
  TempDir tmp;
  const std::string out = tmp.file("agg.csv");
  REQUIRE(run("simulate --graph florentine --dataset synth:120,3 --algo dpdsgd "
              "--model linear --T 6 --sigma 0.5 --seeds 1..3 --out " +
              out) == 0);
  CHECK(fs::exists(tmp.file("agg_seed1.csv")));
  CHECK(fs::exists(tmp.file("agg_seed2.csv")));
  CHECK(fs::exists(tmp.file("agg_seed3.csv")));
  CHECK(slurp(out).find("mean,") != std::string::npos);
}

TEST_CASE("cli: byte-identical outputs across re-runs, thread counts, replay") {
  TempDir tmp;
  const std::string graph = tmp.file("g.txt");
  REQUIRE(run("graph gen --type er --n 9 --p 0.5 --seed 5 --out " + graph) == 0);

  auto account_run = [&](const std::string& out, int threads) {
    REQUIRE(run("--threads " + std::to_string(threads) +
                " account --graph " + graph +
                " --algo dsgd --trust pndp --attackers 0 --T 4 --sigma 1 "
                "--participation kb:2,2 --out " +
                out + " --csv " + out + ".csv") == 0);
  };
  account_run(tmp.file("a1.json"), 1);
  account_run(tmp.file("a2.json"), 4);
  CHECK(slurp(tmp.file("a1.json")) == slurp(tmp.file("a2.json")));
  CHECK(slurp(tmp.file("a1.json.csv")) == slurp(tmp.file("a2.json.csv")));

  // simulate twice: identical bytes
  const std::string t1 = tmp.file("t1.csv"), t2 = tmp.file("t2.csv");
  const std::string sim_args =
      "simulate --graph " + graph +
      " --dataset synth:100,3 --algo antipgd --model mlp --hidden 6 --T 8 "
      "--sigma 0.7 --seed 4 --out ";
  REQUIRE(run(sim_args + t1) == 0);
  REQUIRE(run(sim_args + t2) == 0);
  std::string body1 = slurp(t1), body2 = slurp(t2);
  CHECK(body1 == body2);

  // replay the manifest and compare bytes again
  const std::string manifest = t1 + ".manifest.json";
  REQUIRE(fs::exists(manifest));
  const std::string replayed = slurp(t1);
  REQUIRE(run("replay " + manifest) == 0);
  CHECK(slurp(t1) == replayed);

  // manifest hash is stable and embedded in the trace header
  const dpmesh::RunManifest m = dpmesh::RunManifest::load(manifest);
  CHECK(body1.find(m.hash()) != std::string::npos);
}

TEST_CASE("cli: config file supplies defaults, flags win") {
  TempDir tmp;
  const std::string cfg = tmp.file("cfg.json");
  {
    std::ofstream out(cfg);
    out << R"({"account": {"T": 4, "participation": "kb:2,2", "clip": 2.0}})";
  }
  const std::string r1 = tmp.file("r1.json");
  REQUIRE(run("--config " + cfg +
              " account --graph florentine --algo dsgd --trust ldp --sigma 1 "
              "--out " + r1) == 0);
  const json doc = dpmesh::load_json(r1);
  CHECK(doc["T"] == 4);
  CHECK(doc["participation"] == "kb:2,2");
  CHECK(doc["clip"] == 2.0);

  // explicit flag overrides the config value
  const std::string r2 = tmp.file("r2.json");
  REQUIRE(run("--config " + cfg +
              " account --graph florentine --algo dsgd --trust ldp --sigma 1 "
              "--T 7 --out " + r2) == 0);
  CHECK(dpmesh::load_json(r2)["T"] == 7);
}

TEST_CASE("cli: trust view emits factors plus metadata") {
  TempDir tmp;
  const std::string prefix = tmp.file("view");
  REQUIRE(run("trust view --algo antipgd --trust pndp --attackers 1 "
              "--graph florentine --T 2 --out-prefix " + prefix) == 0);
  REQUIRE(fs::exists(prefix + "_A.csv"));
  REQUIRE(fs::exists(prefix + "_B.csv"));
  REQUIRE(fs::exists(prefix + "_C.csv"));
  const json meta = dpmesh::load_json(prefix + ".meta.json");
  CHECK(meta["residual"].get<double>() < 1e-8);
  CHECK(meta["row_labels"].size() == meta["rows"].get<std::size_t>());
}

TEST_CASE("cli: workload build materializes the dense matrix") {
  TempDir tmp;
  const std::string out = tmp.file("W.csv");
  REQUIRE(run("workload build --algo dsgd --graph florentine --T 2 --materialize " +
              out) == 0);
  const dpmesh::Matrix a = dpmesh::load_matrix_csv(out);
  CHECK(a.rows() == 30);
  CHECK(a.cols() == 30);
}

TEST_CASE("cli: memory budget env produces the memory exit code") {
  TempDir tmp;
  const std::string cmd = "DPMESH_MEM_BUDGET_MB=1 " + kCli +
                          " workload build --algo dsgd --graph florentine --T 40 "
                          "--materialize " +
                          tmp.file("big.csv") + " >/dev/null 2>&1";
  CHECK(WEXITSTATUS(std::system(cmd.c_str())) == 5);
}
