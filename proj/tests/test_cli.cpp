#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

#include "doctest.h"
#include "ps/cli.hpp"
#include "ps/json_io.hpp"
#include "support.hpp"

using ps::cli::run_command;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "psentinel");
  std::ostringstream out, err;
  const int code = run_command(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// One synthesized and extracted corpus shared by the CLI cases.
const std::filesystem::path& corpus() {
  static ps::test::TempDir dir("cli");
  static bool ready = false;
  if (!ready) {
    const auto d = dir.path.string();
    REQUIRE(run({"synth", "--hours", "4", "--seed", "11", "--out", d + "/data"}).code == 0);
    REQUIRE(run({"extract", "--data", d + "/data", "--train", "0.6", "--val", "0.2", "--test", "0.2", "--seed", "2",
                 "--out", d + "/inst"})
                .code == 0);
    ready = true;
  }
  return dir.path;
}

std::vector<std::string> quick_model() {
  return {"--model", "linear", "--epochs", "2", "--stride", "30", "--seed", "5"};
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run({}).code == ps::cli::kExitUsage);
  CHECK(run({"nonsense"}).code == ps::cli::kExitUsage);
  CHECK(run({"train", "--out", "x.psm"}).code == ps::cli::kExitUsage);
  const auto r = run({"eval", "--model", "m", "--instances", "i", "--out", "o", "--threshold", "abc"});
  CHECK(r.code == ps::cli::kExitUsage);
  CHECK_FALSE(r.err.empty());
}

TEST_CASE("domain errors exit with 1") {
  ps::test::TempDir dir("clierr");
  const auto r = run({"eval", "--model", (dir.path / "missing.psm").string(), "--instances", dir.path.string(),
                      "--out", (dir.path / "r.json").string()});
  CHECK(r.code == ps::cli::kExitDomainError);
  CHECK_FALSE(r.err.empty());
}

TEST_CASE("synth, extract, train and eval") {
  const auto d = corpus().string();
  CHECK(std::filesystem::exists(corpus() / "data" / "truth.json"));
  CHECK(std::filesystem::exists(corpus() / "inst" / "split.json"));
  for (const char* s : {"train", "val", "test"}) CHECK(std::filesystem::exists(corpus() / "inst" / s / "instances.json"));

  auto args = std::vector<std::string>{"train", "--instances", d + "/inst", "--out", d + "/a.psm"};
  const auto q = quick_model();
  args.insert(args.end(), q.begin(), q.end());
  REQUIRE(run(args).code == 0);
  args[4] = d + "/b.psm";
  REQUIRE(run(args).code == 0);
  CHECK(slurp(corpus() / "a.psm") == slurp(corpus() / "b.psm"));

  const auto e = run({"eval", "--model", d + "/a.psm", "--instances", d + "/inst", "--out", d + "/eval.json"});
  REQUIRE(e.code == 0);
  const auto report = ps::load_json(corpus() / "eval.json");
  CHECK(report.at("version") == 1);
  for (const char* key : {"threshold", "mse_test", "n_outages", "n_detected", "n_early", "n_late", "false_negatives",
                          "n_non_outages", "false_positives", "per_class"})
    CHECK(report.contains(key));
}

TEST_CASE("synth output is reproducible") {
  ps::test::TempDir dir("clisynth");
  const auto d = dir.path.string();
  REQUIRE(run({"synth", "--hours", "1", "--seed", "3", "--out", d + "/x"}).code == 0);
  REQUIRE(run({"synth", "--hours", "1", "--seed", "3", "--out", d + "/y"}).code == 0);
  for (const auto& entry : std::filesystem::directory_iterator(dir.path / "x"))
    CHECK(slurp(entry.path()) == slurp(dir.path / "y" / entry.path().filename()));
}

TEST_CASE("labeling commands") {
  const auto d = corpus().string();
  REQUIRE(run({"label-train", "--instances", d + "/inst", "--trees", "10", "--folds", "2", "--repeats", "1",
               "--cv-out", d + "/cv.json", "--out", d + "/f.psf"})
              .code == 0);
  CHECK(ps::load_json(corpus() / "cv.json").contains("confusion"));
  REQUIRE(run({"label-apply", "--forest", d + "/f.psf", "--instances", d + "/inst", "--out", d + "/rf.json"}).code == 0);
  REQUIRE(run({"bitlabel-learn", "--instances", d + "/inst", "--out", d + "/bits.json"}).code == 0);
  REQUIRE(run({"bitlabel-apply", "--table", d + "/bits.json", "--instances", d + "/inst", "--out", d + "/bl.json"})
              .code == 0);
  REQUIRE(run({"compare-labelers", "--forest", d + "/f.psf", "--table", d + "/bits.json", "--instances",
               d + "/inst", "--out", d + "/cmp.json"})
              .code == 0);
  REQUIRE(run({"stats", "--events", d + "/data/truth.json", "--out", d + "/stats.json"}).code == 0);
  CHECK(ps::load_json(corpus() / "stats.json").at("bin_edges_s").size() == 13);
}

TEST_CASE("sweep, bench and replay") {
  const auto d = corpus().string();
  auto args = std::vector<std::string>{"sweep", "--kind", "threshold", "--grid", "0.3,0.5", "--instances",
                                       d + "/inst", "--out", d + "/sw.json"};
  const auto q = quick_model();
  args.insert(args.end(), q.begin(), q.end());
  REQUIRE(run(args).code == 0);
  CHECK(ps::load_json(corpus() / "sw.json").at("cells").size() == 2);

  REQUIRE(run({"bench", "--model", "linear", "--features", "4", "--windows-per-instance", "20", "--out",
               d + "/bench.json"})
              .code == 0);
  CHECK(ps::load_json(corpus() / "bench.json").contains("n_parameters"));

  if (!std::filesystem::exists(corpus() / "a.psm")) {
    auto t = std::vector<std::string>{"train", "--instances", d + "/inst", "--out", d + "/a.psm"};
    t.insert(t.end(), q.begin(), q.end());
    REQUIRE(run(t).code == 0);
  }
  REQUIRE(run({"replay", "--data", d + "/data", "--model", d + "/a.psm", "--speed", "0", "--max-ticks", "2000",
               "--out", d + "/replay.json"})
              .code == 0);
  const auto rep = ps::load_json(corpus() / "replay.json");
  CHECK(rep.at("ticks_emitted") == 2000);
  CHECK(rep.at("ticks_processed") == 2000 - 29);
}

TEST_CASE("PS_SEED overrides the seed") {
  ps::test::TempDir dir("cliseed");
  const auto d = dir.path.string();
  ::setenv("PS_SEED", "3", 1);
  REQUIRE(run({"synth", "--hours", "1", "--out", d + "/env"}).code == 0);
  ::unsetenv("PS_SEED");
  REQUIRE(run({"synth", "--hours", "1", "--seed", "3", "--out", d + "/flag"}).code == 0);
  CHECK(slurp(dir.path / "env" / "truth.json") == slurp(dir.path / "flag" / "truth.json"));
}
