#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "promptboost/dataset_io.hpp"
#include "promptboost/mask_fill_server.hpp"
#include "promptboost/pipeline.hpp"
#include "promptboost/synthetic.hpp"
#include "synthetic_run.hpp"
#include "temp_dir.hpp"

namespace fs = std::filesystem;
using namespace promptboost;
using nlohmann::json;

namespace {

struct Run {
  int status = -1;
  std::string out;
  std::string err;
};

std::string quote(const std::string& s) { return "'" + s + "'"; }

// Runs pb with PB_ENDPOINT set to `endpoint` (unset when empty).
Run pb(const fs::path& dir, const std::string& args, const std::string& endpoint = {}) {
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  std::string cmd = endpoint.empty() ? "env -u PB_ENDPOINT " : "env PB_ENDPOINT=" + quote(endpoint) + " ";
  cmd += quote(PB_CLI_PATH) + " " + args + " >" + quote(out.string()) + " 2>" +
         quote(err.string());
  Run r;
  const int raw = std::system(cmd.c_str());
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = read_text_file(out);
  r.err = read_text_file(err);
  return r;
}

// Synthetic dataset plus an in-process mask-fill service over it.
struct Fixture {
  test_util::TempDir dir;
  RunConfig cfg;
  SyntheticOracle oracle{{21, 0.6, 2, 40}};
  MaskFillServer server{oracle};
  fs::path config_path;

  explicit Fixture(json extra = json::object()) {
    cfg = test_util::write_synthetic_run(dir.path(), {2, 32, 25, 10, 4});
    oracle.bind(load_dataset_split(cfg.dataset, SplitTag::train));
    oracle.bind(load_dataset_split(cfg.dataset, SplitTag::test));
    server.bind("127.0.0.1", 0);
    server.start();
    json j{{"dataset", "data"},     {"prompts", "prompts.json"}, {"cache_dir", "cache"},
           {"k", 16},               {"seed", 3},                 {"max_learners", 40},
           {"workers", 2}};
    j.update(extra);
    config_path = dir.path() / "config.json";
    write_text_file_atomic(config_path, j.dump(2));
  }

  std::string config() const { return "--config " + quote(config_path.string()); }
  Run run(const std::string& args) { return pb(dir.path(), args, server.endpoint()); }
  Run offline(const std::string& args) { return pb(dir.path(), args); }
};

std::uint64_t sum_values(const json& j) {
  std::uint64_t n = 0;
  for (const auto& [k, v] : j.items()) n += v.get<std::uint64_t>();
  return n;
}

}  // namespace

TEST_CASE("cache: cold fills every split, warm issues nothing") {
  Fixture f;
  auto cold = f.run("cache " + f.config());
  REQUIRE_MESSAGE(cold.status == 0, cold.err);
  const auto j = json::parse(cold.out);
  CHECK(j["train"].size() == 10);
  CHECK(sum_values(j["train"]) + sum_values(j["validation"]) == 640);
  CHECK(sum_values(j["test"]) == 500);
  CHECK(j["queries"] == 1140);
  CHECK(f.oracle.queries_issued() == 1140);
  CHECK(cold.err.find("1140 queries issued") != std::string::npos);

  // Warm cache with the service gone still succeeds.
  auto warm = pb(f.dir.path(), "cache " + f.config(), "http://127.0.0.1:1");
  CHECK(warm.status == 0);
  CHECK(warm.err.find("0 queries issued") != std::string::npos);
  CHECK(json::parse(warm.out)["queries"] == 0);
  CHECK(f.oracle.queries_issued() == 1140);
}

TEST_CASE("cache: --k override changes the sample size") {
  Fixture f;
  auto r = f.run("cache " + f.config() + " --k 8");
  REQUIRE_MESSAGE(r.status == 0, r.err);
  const auto j = json::parse(r.out);
  CHECK(sum_values(j["train"]) + sum_values(j["validation"]) == 320);
}

TEST_CASE("cache: unreachable endpoint with a cold cache names the endpoint") {
  Fixture f;
  const std::string dead = "http://127.0.0.1:1";
  auto r = pb(f.dir.path(), "cache " + f.config(), dead);
  CHECK(r.status == 1);
  CHECK(r.err.find(dead) != std::string::npos);
  CHECK(r.out.empty());
}

TEST_CASE("train: missing cache without an endpoint fails") {
  Fixture f;
  auto r = f.offline("train " + f.config() + " --out " + quote((f.dir.path() / "e.json").string()));
  CHECK(r.status == 1);
  CHECK(r.err.find("pb train") != std::string::npos);
  CHECK_FALSE(fs::exists(f.dir.path() / "e.json"));
}

TEST_CASE("train: seeded runs are byte-identical and history matches") {
  Fixture f;
  REQUIRE(f.run("cache " + f.config()).status == 0);
  const auto a = f.dir.path() / "a.json", b = f.dir.path() / "b.json";
  auto ra = f.offline("train " + f.config() + " --out " + quote(a.string()));
  REQUIRE_MESSAGE(ra.status == 0, ra.err);
  auto rb = f.offline("train " + f.config() + " --out " + quote(b.string()));
  REQUIRE(rb.status == 0);
  CHECK(read_text_file(a) == read_text_file(b));
  CHECK(read_text_file(fs::path(a.string() + ".history.json")) ==
        read_text_file(fs::path(b.string() + ".history.json")));

  const auto summary = json::parse(ra.out);
  const auto history = json::parse(read_text_file(fs::path(a.string() + ".history.json")));
  CHECK(history["history"].size() == summary["accepted"].get<std::size_t>());
  CHECK(summary["learners"].get<std::size_t>() == history["best_length"].get<std::size_t>());
  CHECK(summary["queries"] == 0);
  CHECK(ra.err.find("prompt_id") != std::string::npos);

  // A different seed draws a different few-shot sample, which is not cached.
  auto other = f.offline("train " + f.config() + " --seed 99 --out " + quote(a.string()));
  CHECK(other.status == 1);
}

TEST_CASE("eval: report matches the library path bit for bit") {
  Fixture f;
  REQUIRE(f.run("cache " + f.config()).status == 0);
  const auto e = f.dir.path() / "e.json";
  REQUIRE(f.offline("train " + f.config() + " --out " + quote(e.string())).status == 0);
  auto r = f.offline("eval " + f.config() + " --ensemble " + quote(e.string()));
  REQUIRE_MESSAGE(r.status == 0, r.err);

  auto cfg = load_run_config(f.config_path);
  const auto splits = prepare_splits(cfg);
  const auto report = evaluate_run(cfg, ensemble_from_json(read_text_file(e)), nullptr, splits);
  CHECK(r.out == report_to_json(report) + "\n");
  CHECK(json::parse(r.out)["accuracy"].get<double>() > 0.5);
}

TEST_CASE("eval: majority vote ensembles go through the same path") {
  Fixture f(json{{"method", "majority_vote"}});
  REQUIRE(f.run("cache " + f.config()).status == 0);
  const auto e = f.dir.path() / "vote.json";
  auto t = f.offline("train " + f.config() + " --out " + quote(e.string()));
  REQUIRE_MESSAGE(t.status == 0, t.err);
  CHECK(json::parse(read_text_file(e))["mode"] == "majority_vote");
  auto r = f.offline("eval " + f.config() + " --ensemble " + quote(e.string()));
  CHECK(r.status == 0);
  CHECK(json::parse(r.out)["n_examples"] == 50);
}

TEST_CASE("eval: vocabulary mismatch between ensemble and cache") {
  Fixture f;
  REQUIRE(f.run("cache " + f.config()).status == 0);
  const auto e = f.dir.path() / "e.json";
  REQUIRE(f.offline("train " + f.config() + " --out " + quote(e.string())).status == 0);
  auto j = json::parse(read_text_file(e));
  j["vocab_id"] = "some-other-model";
  write_text_file_atomic(e, j.dump());
  auto r = f.offline("eval " + f.config() + " --ensemble " + quote(e.string()));
  CHECK(r.status == 1);
  CHECK(r.out.empty());
}

TEST_CASE("refine: keeps the requested number of prompts") {
  Fixture f(json{{"refine", {{"keep", 4}}}});
  auto r = f.run("refine " + f.config());
  REQUIRE_MESSAGE(r.status == 0, r.err);
  const auto kept = parse_prompts(r.out);
  CHECK(kept.size() == 4);
  CHECK(r.err.find("(dropped)") != std::string::npos);
}

TEST_CASE("bad arguments exit non-zero") {
  Fixture f;
  CHECK(f.offline("").status != 0);
  CHECK(f.offline("train --config /nonexistent.json").status != 0);
  CHECK(f.offline("eval " + f.config()).status != 0);
}
