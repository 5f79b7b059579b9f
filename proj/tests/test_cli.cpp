#include <doctest.h>

#include <fstream>
#include <sstream>

#include "selbias/cli.hpp"
#include "selbias/config.hpp"
#include "selbias/report.hpp"
#include "selbias/store.hpp"
#include "support.hpp"

using namespace selbias;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "selbias");
  std::ostringstream out, err;
  const int code = cli::run_main(args, out, err);
  return {code, out.str(), err.str()};
}

const fs::path kModels = fs::path(SELBIAS_RESOURCE_DIR) / "models";

std::string sim_config(const std::string& provider_ref = "sim", int trials = 40) {
  return R"({
  "grid": {
    "providers": [")" + provider_ref + R"("],
    "temperatures": [0.0],
    "list_lengths": [5],
    "pool_kinds": ["letters"],
    "pipelines": ["two_step", "direct"],
    "trials": )" + std::to_string(trials) + R"(,
    "master_seed": 3
  },
  "providers": [
    {"id": "sim", "adapter": "simulator", "model": "toy", "bias_model": {"primacy_rate": 0.2}}
  ],
  "store": "store",
  "parallelism": 4
}
)";
}

fs::path write(const fs::path& path, const std::string& text) {
  std::ofstream(path) << text;
  return path;
}

std::string store_bytes(const fs::path& store) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(store)) {
    if (e.path().extension() == ".jsonl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) all += read_file(f);
  return all;
}

}  // namespace

TEST_CASE("run with a valid simulator config writes the store") {
  testing::TempDir dir;
  const auto config = write(dir / "run.json", sim_config());
  const auto r = invoke({"run", "--config", config.string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("trials: 80/80") != std::string::npos);
  const auto manifest = load_manifest(dir / "store");
  REQUIRE(manifest);
  CHECK(manifest->complete());
  CHECK(manifest->conditions.size() == 2);
}

TEST_CASE("an unknown provider id is reported with file and line") {
  testing::TempDir dir;
  const auto config = write(dir / "bad.json", sim_config("nope"));
  const auto r = invoke({"run", "--config", config.string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("nope") != std::string::npos);
  CHECK(r.err.find("bad.json:3:") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "store"));
}

TEST_CASE("rerunning after an interruption completes the remaining trials") {
  testing::TempDir dir;
  const auto config = write(dir / "run.json", sim_config());
  REQUIRE(invoke({"run", "--config", config.string()}).code == 0);
  const auto full = store_bytes(dir / "store");

  // Cut every condition file back to its first 13 lines plus a torn record.
  for (const auto& e : fs::directory_iterator(dir / "store")) {
    if (e.path().extension() != ".jsonl") continue;
    std::istringstream in(read_file(e.path()));
    std::string line, kept;
    for (int i = 0; i < 13 && std::getline(in, line); ++i) kept += line + "\n";
    std::getline(in, line);
    write_file_atomic(e.path(), kept + line.substr(0, line.size() / 2));
  }
  const auto r = invoke({"run", "--config", config.string()});
  CHECK(r.code == 0);
  CHECK(store_bytes(dir / "store") == full);
}

TEST_CASE("run flags override the config") {
  testing::TempDir dir;
  const auto config = write(dir / "run.json", sim_config());
  CHECK(invoke({"run", "--config", config.string(), "--store", (dir / "a").string(), "--seed", "9"}).code == 0);
  CHECK(invoke({"run", "--config", config.string(), "--store", (dir / "b").string(), "--seed", "9",
             "--parallelism", "1"})
            .code == 0);
  CHECK(store_bytes(dir / "a") == store_bytes(dir / "b"));
  CHECK(invoke({"run", "--config", config.string(), "--store", (dir / "a").string(), "--seed", "10"}).code == 1);
}

TEST_CASE("analyze is deterministic and fails without a manifest") {
  testing::TempDir dir;
  const auto config = write(dir / "run.json", sim_config());
  REQUIRE(invoke({"run", "--config", config.string()}).code == 0);
  const auto store = (dir / "store").string();
  const auto a = invoke({"analyze", "--store", store, "--out", (dir / "r1").string(), "--bootstrap", "200"});
  const auto b = invoke({"analyze", "--store", store, "--out", (dir / "r2").string(), "--bootstrap", "200"});
  CHECK(a.code == 0);
  CHECK(b.code == 0);
  for (const char* f : {"headline.csv", "positions.csv", "objects.csv", "mi.csv", "pipelines.csv",
                        "positions_plot.json", "objects_plot.json", "mi_plot.json"}) {
    CHECK(read_file(dir / "r1" / f) == read_file(dir / "r2" / f));
  }
  CHECK(invoke({"analyze", "--store", store, "--bootstrap", "50"}).code == 0);
  CHECK(fs::exists(dir / "store" / "report" / "headline.csv"));

  const auto missing = invoke({"analyze", "--store", (dir / "nowhere").string()});
  CHECK(missing.code == 1);
  CHECK(missing.err.find("manifest") != std::string::npos);
}

TEST_CASE("simulate with the bundled bias models") {
  testing::TempDir dir;
  const auto uniform = invoke({"simulate", "--model", (kModels / "uniform.json").string(), "--store",
                            (dir / "u").string(), "--lengths", "5", "--trials", "100"});
  CHECK(uniform.code == 0);
  CHECK(load_manifest(dir / "u")->conditions.size() == 2);

  const auto biased = invoke({"simulate", "--model", (kModels / "gpt35-like.json").string(), "--store",
                           (dir / "g").string(), "--lengths", "5", "--pipelines", "two_step", "--trials",
                           "400"});
  REQUIRE(biased.code == 0);
  AnalyzeOptions opts;
  opts.bootstrap = {100, 1};
  const auto bundles = analyze_run(dir / "g", opts);
  REQUIRE(bundles.size() == 1);
  CHECK(bundles[0].headline.primacy > bundles[0].baselines.primacy_p);
}

TEST_CASE("simulate rejects a malformed bias model with the field path") {
  testing::TempDir dir;
  const auto model = write(dir / "m.json", R"({"primacy_rate": 0.1, "position_weights": {"2": -3}})");
  const auto r = invoke({"simulate", "--model", model.string(), "--store", (dir / "s").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("position_weights[2]") != std::string::npos);
  const auto junk = write(dir / "j.json", "{oops");
  CHECK(invoke({"simulate", "--model", junk.string(), "--store", (dir / "s").string()}).code == 1);
}

TEST_CASE("simulate with a fixed seed is byte-identical") {
  testing::TempDir dir;
  const auto model = (kModels / "gpt35-like.json").string();
  for (const char* name : {"x", "y"}) {
    CHECK(invoke({"simulate", "--model", model, "--store", (dir / name).string(), "--lengths", "5,10",
               "--trials", "60", "--seed", "5", "--parallelism", name[0] == 'x' ? "1" : "8"})
              .code == 0);
  }
  CHECK(store_bytes(dir / "x") == store_bytes(dir / "y"));
}

TEST_CASE("baselines prints the uniform-chance table") {
  const auto r = invoke({"baselines"});
  CHECK(r.code == 0);
  for (const char* denom : {"60", "720", "2730", "6840", "15600"}) CHECK(r.out.find(denom) != std::string::npos);
  CHECK(invoke({"baselines", "--lengths", "2"}).code == 1);
}

TEST_CASE("usage errors") {
  CHECK(invoke({}).code == 1);
  CHECK(invoke({"frobnicate"}).code == 1);
  CHECK(invoke({"run"}).code == 1);
  CHECK(invoke({"analyze", "--store"}).code == 1);
  CHECK(invoke({"--help"}).code == 0);
}

TEST_CASE("bundled configs validate") {
  const auto dir = fs::path(SELBIAS_RESOURCE_DIR).parent_path() / "configs";
  int seen = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".json") continue;
    CAPTURE(e.path().string());
    CHECK_NOTHROW(load_run_config(e.path()));
    ++seen;
  }
  CHECK(seen >= 3);
}
