#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "nmdp/sampler.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Workdir {
  fs::path path;
  Workdir() {
    path = fs::temp_directory_path() / ("nmdp_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~Workdir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

int run(const std::string& args) {
  const std::string cmd = std::string(NMDP_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int observation_lines(const std::string& path) {
  std::ifstream in(path);
  int n = 0;
  for (std::string line; std::getline(in, line);) n += json::parse(line).contains("R");
  return n;
}

json read_json(const std::string& path) { return json::parse(slurp(path)); }

}  // namespace

TEST_CASE("generate") {
  Workdir w;
  REQUIRE(run("generate --env tetris --value=-3,-15,-1 --steps 500 --seed 7 --out " + (w / "a")) == 0);
  REQUIRE(run("generate --env tetris --value=-3,-15,-1 --steps 500 --seed 7 --out " + (w / "b")) == 0);
  CHECK(observation_lines(w / "a/dataset.jsonl") == 500);
  CHECK(slurp(w / "a/dataset.jsonl") == slurp(w / "b/dataset.jsonl"));
  REQUIRE(run("generate --env tetris --value=-3,-15,-1 --steps 500 --seed 8 --out " + (w / "c")) == 0);
  CHECK(slurp(w / "a/dataset.jsonl") != slurp(w / "c/dataset.jsonl"));

  std::ifstream in(w / "a/dataset.jsonl");
  const nmdp::Dataset d = nmdp::read_dataset(in);
  CHECK(d.size() == 500);
  CHECK(d.dim == 3);

  CHECK(run("generate --env tetris --value=1,2 --steps 5 --out " + (w / "bad")) != 0);
  CHECK(run("generate --env chess --steps 5 --out " + (w / "bad")) != 0);
}

TEST_CASE("infer and predict") {
  Workdir w;
  SUBCASE("tabular smoke run") {
    REQUIRE(run("generate --env tabular --steps 20 --seed 3 --out " + (w / "t")) == 0);
    CHECK(fs::exists(w / "t/model.json"));
    REQUIRE(run("infer --data " + (w / "t/dataset.jsonl") + " --iterations 10000 --burn-in 1000 --out " + (w / "i")) == 0);
    std::ifstream in(w / "i/posterior.jsonl");
    const nmdp::PosteriorSamples s = nmdp::read_posterior(in);
    CHECK(s.size() == 9000);
    for (const auto& v : s.draws) REQUIRE(std::abs(v.values.sum()) < 1e-8);
    const json summary = read_json(w / "i/summary.json");
    CHECK(summary.contains("acceptance_overall"));
    CHECK(summary["acceptance_overall"].get<double>() > 0.5);
    const json& echo = summary["config"]["infer"];
    CHECK(echo["kappa"] == "2500");
    CHECK(echo["ig-a"] == "3");
    CHECK(echo["ig-b"] == "100000");
    CHECK(echo["moves"] == "scale+translate");
    for (const char* f : {"trace.csv", "histogram.csv", "acf_v1.csv", "acf_v7.csv"}) CHECK(fs::exists(w / ("i/" + std::string(f))));
  }
  SUBCASE("predict beats the uniform guess with the true value") {
    REQUIRE(run("generate --env tetris --value=-3,-15,-1 --steps 200 --seed 4 --out " + (w / "h")) == 0);
    REQUIRE(run("predict --value=-3,-15,-1 --holdout " + (w / "h/dataset.jsonl") + " --out " + (w / "p")) == 0);
    const json p = read_json(w / "p/predictions.json");
    CHECK(p["error"].get<double>() < p["uniform_baseline"].get<double>());
    CHECK(p["predicted"].size() == 200);

    std::ofstream(w / "empty.jsonl").close();
    CHECK(run("predict --value=-3,-15,-1 --holdout " + (w / "empty.jsonl") + " --out " + (w / "p2")) != 0);
    CHECK(run("predict --value=1,2 --holdout " + (w / "h/dataset.jsonl") + " --out " + (w / "p3")) != 0);
  }
}

TEST_CASE("config file") {
  Workdir w;
  std::ofstream(w / "c.json") << R"({"generate":{"env":"tetris","value":[-3,-15,-1],"steps":25,"seed":4}})";
  REQUIRE(run("--config " + (w / "c.json") + " generate --out " + (w / "g")) == 0);
  CHECK(observation_lines(w / "g/dataset.jsonl") == 25);
  REQUIRE(run("generate --env tetris --value=-3,-15,-1 --steps 25 --seed 4 --out " + (w / "h")) == 0);
  // Same resolved options, same data.
  std::ifstream a(w / "g/dataset.jsonl"), b(w / "h/dataset.jsonl");
  const nmdp::Dataset da = nmdp::read_dataset(a), db = nmdp::read_dataset(b);
  REQUIRE(da.size() == db.size());
  for (int t = 0; t < da.size(); ++t) CHECK(da.observations[t].action == db.observations[t].action);
  // Command-line flags override the file.
  REQUIRE(run("--config " + (w / "c.json") + " generate --steps 10 --out " + (w / "k")) == 0);
  CHECK(observation_lines(w / "k/dataset.jsonl") == 10);
  CHECK(run("--config " + (w / "missing.json") + " generate --out " + (w / "m")) != 0);
}

TEST_CASE("usage errors") {
  CHECK(run("") != 0);
  CHECK(run("frobnicate") != 0);
  CHECK(run("infer") != 0);
  CHECK(run("--help") == 0);
}
