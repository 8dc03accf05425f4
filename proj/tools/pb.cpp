// pb: cache distributions, train, evaluate and refine prompts from the shell.
// JSON goes to stdout, everything meant for people goes to stderr.

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "promptboost/dataset_io.hpp"
#include "promptboost/error.hpp"
#include "promptboost/mask_fill_server.hpp"
#include "promptboost/pipeline.hpp"
#include "promptboost/synthetic.hpp"

namespace fs = std::filesystem;
using namespace promptboost;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> k;
  std::optional<std::size_t> max_learners;
};

RunConfig load_config(const Common& c) {
  auto cfg = load_run_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.k) cfg.k = *c.k;
  if (c.max_learners) cfg.max_learners = *c.max_learners;
  if (const char* env = std::getenv("PB_ENDPOINT"); env && *env) cfg.endpoint = env;
  return cfg;
}

// Runs `fn` against the cache alone first, so a warm cache never needs the
// service. Only when rows are missing does it connect.
template <typename Fn>
auto with_lm(const RunConfig& cfg, Fn&& fn) -> decltype(fn(nullptr)) {
  try {
    return fn(nullptr);
  } catch (const CacheIncomplete& e) {
    if (!cfg.endpoint) {
      throw CacheIncomplete(std::string(e.what()) + " (no endpoint configured)");
    }
  }
  HttpClientOptions opt;
  opt.top_k = cfg.top_k;
  opt.mask_literal = cfg.mask_literal;
  HttpLmClient client(*cfg.endpoint, opt);
  return fn(&client);
}

void print_fill(const char* split, const std::vector<std::string>& ids, const FillReport& r) {
  std::fprintf(stderr, "%s:\n", split);
  for (std::size_t i = 0; i < ids.size() && i < r.queries_per_prompt.size(); ++i) {
    std::fprintf(stderr, "  %-24s %8llu\n", ids[i].c_str(),
                 static_cast<unsigned long long>(r.queries_per_prompt[i]));
  }
}

json fill_json(const std::vector<std::string>& ids, const FillReport& r) {
  json out = json::object();
  for (std::size_t i = 0; i < ids.size() && i < r.queries_per_prompt.size(); ++i) {
    out[ids[i]] = r.queries_per_prompt[i];
  }
  return out;
}

int cmd_cache(const Common& common) {
  const auto cfg = load_config(common);
  const auto splits = prepare_splits(cfg);
  const auto out = with_lm(cfg, [&](MaskedLm* lm) { return cache_run(cfg, lm, splits); });

  std::vector<std::string> kept;
  for (const auto& p : out.pool) kept.push_back(p.id);
  print_fill("train", out.train_prompt_ids, out.train);
  print_fill("validation", out.train_prompt_ids, out.validation);
  print_fill("test", kept, out.test);
  std::fprintf(stderr, "%llu queries issued\n",
               static_cast<unsigned long long>(out.total_queries()));

  json j;
  j["queries"] = out.total_queries();
  j["train"] = fill_json(out.train_prompt_ids, out.train);
  j["validation"] = fill_json(out.train_prompt_ids, out.validation);
  j["test"] = fill_json(kept, out.test);
  std::cout << j.dump(2) << "\n";
  return 0;
}

void print_history(const BoostResult& r) {
  std::fprintf(stderr, "%4s  %-24s %10s %10s %8s\n", "t", "prompt_id", "err", "alpha", "val_acc");
  for (const auto& h : r.history) {
    std::string val = h.val_accuracy ? std::to_string(*h.val_accuracy).substr(0, 6) : "-";
    std::fprintf(stderr, "%4zu  %-24s %10.6f %10.6f %8s\n", h.t, h.prompt_id.c_str(), h.err,
                 h.alpha, val.c_str());
  }
}

int cmd_train(const Common& common, const std::string& out_path, std::string history_path) {
  const auto cfg = load_config(common);
  const auto splits = prepare_splits(cfg);
  TrainOutcome trained;
  try {
    trained = with_lm(cfg, [&](MaskedLm* lm) { return train_run(cfg, lm, splits); });
  } catch (const ExhaustedRetries& e) {
    std::fprintf(stderr, "pb train: stop_reason %s: %s\n",
                 std::string(to_string(StopReason::exhausted_retries)).c_str(), e.what());
    return 1;
  }
  const auto& r = trained.result;
  print_history(r);
  std::fprintf(stderr, "stop_reason %s: %zu learners accepted, %zu kept\n",
               std::string(to_string(r.stop_reason)).c_str(), r.history.size(),
               r.ensemble.learners.size());

  write_text_file_atomic(out_path, ensemble_to_json(r.ensemble));
  if (history_path.empty()) history_path = out_path + ".history.json";
  write_text_file_atomic(history_path, history_to_json(r));

  json j;
  j["ensemble"] = out_path;
  j["history"] = history_path;
  j["learners"] = r.ensemble.learners.size();
  j["accepted"] = r.history.size();
  j["stop_reason"] = std::string(to_string(r.stop_reason));
  j["queries"] = trained.queries;
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_eval(const Common& common, const std::string& ensemble_path) {
  const auto cfg = load_config(common);
  const auto ensemble = ensemble_from_json(read_text_file(ensemble_path));
  const auto splits = prepare_splits(cfg);
  const auto report =
      with_lm(cfg, [&](MaskedLm* lm) { return evaluate_run(cfg, ensemble, lm, splits); });
  std::fprintf(stderr, "accuracy %.4f (%zu/%zu)\n", report.accuracy, report.n_correct,
               report.n_examples);
  std::cout << report_to_json(report) << "\n";
  return 0;
}

int cmd_refine(const Common& common, const std::string& out_path) {
  const auto cfg = load_config(common);
  const auto splits = prepare_splits(cfg);
  const auto candidates = initial_pool(cfg);
  const FillOptions fill{cfg.mask_literal, cfg.workers};

  RefineDetails details;
  const auto kept = with_lm(cfg, [&](MaskedLm* lm) {
    const auto train = ensure_cached(lm, splits.train, candidates, cfg.cache_dir, fill);
    const auto val = ensure_cached(lm, splits.validation, candidates, cfg.cache_dir, fill);
    return refine_prompts(candidates, train, splits.train.labels(), val,
                          splits.validation.labels(), splits.train.num_classes(),
                          cfg.screen_options(), cfg.refine.keep, &details);
  });

  for (std::size_t rank = 0; rank < details.ranking.size(); ++rank) {
    const auto i = details.ranking[rank];
    std::fprintf(stderr, "%3zu  %-24s %.4f%s\n", rank + 1, candidates[i].id.c_str(),
                 details.validation_accuracy[i], rank < kept.size() ? "" : "  (dropped)");
  }
  const auto text = serialize_prompts(kept);
  if (!out_path.empty()) write_text_file_atomic(out_path, text);
  std::cout << text;
  if (!text.empty() && text.back() != '\n') std::cout << "\n";
  return 0;
}

MaskFillServer* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

int cmd_serve_synthetic(const Common& common, const std::string& host, int port,
                        SyntheticOracleConfig oracle_cfg) {
  const auto cfg = load_config(common);
  const auto manifest = load_manifest(cfg.dataset / "manifest.json");
  oracle_cfg.num_classes = manifest.num_classes;
  SyntheticOracle oracle(oracle_cfg);
  for (auto split : {SplitTag::train, SplitTag::validation, SplitTag::test}) {
    if (fs::exists(split_file(cfg.dataset, split))) {
      oracle.bind(load_dataset_split(cfg.dataset, split));
    }
  }
  MaskFillServer server(oracle, cfg.mask_literal);
  const int bound = server.bind(host, port);
  std::fprintf(stderr, "serving %s on %s\n", oracle.vocab_id().c_str(),
               server.endpoint().c_str());
  std::cout << json{{"endpoint", server.endpoint()}, {"port", bound}}.dump() << std::endl;
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.listen();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prompt ensembles from a black-box masked language model"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "run config JSON")->required()->check(
        CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "override config seed");
    sub->add_option("--k", common.k, "override examples per class (0 = use splits as given)");
    sub->add_option("--max-learners", common.max_learners, "override config max_learners");
  };

  auto* cache = app.add_subcommand("cache", "fill the distribution cache for all splits");
  add_common(cache);

  std::string out_path = "ensemble.json", history_path;
  auto* train = app.add_subcommand("train", "train an ensemble from the cache");
  add_common(train);
  train->add_option("--out", out_path, "ensemble JSON to write")->capture_default_str();
  train->add_option("--history", history_path, "history JSON (default <out>.history.json)");

  std::string ensemble_path;
  auto* eval = app.add_subcommand("eval", "evaluate an ensemble on the test split");
  add_common(eval);
  eval->add_option("--ensemble", ensemble_path, "ensemble JSON")->required()->check(
      CLI::ExistingFile);

  std::string refine_out;
  auto* refine = app.add_subcommand("refine", "rank candidate prompts and keep the best");
  add_common(refine);
  refine->add_option("--out", refine_out, "also write the kept prompts here");

  std::string host = "127.0.0.1";
  int port = 8765;
  SyntheticOracleConfig oracle_cfg;
  auto* serve = app.add_subcommand("serve-synthetic",
                                   "serve the synthetic oracle over the mask-fill protocol");
  add_common(serve);
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port, "0 picks a free port")->capture_default_str();
  serve->add_option("--signal", oracle_cfg.class_signal)->capture_default_str()->check(
      CLI::Range(0.0, 1.0));
  serve->add_option("--vocab-size", oracle_cfg.vocab_size)->capture_default_str();
  serve->add_option("--oracle-seed", oracle_cfg.seed)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*cache) return cmd_cache(common);
    if (*train) return cmd_train(common, out_path, history_path);
    if (*eval) return cmd_eval(common, ensemble_path);
    if (*refine) return cmd_refine(common, refine_out);
    if (*serve) return cmd_serve_synthetic(common, host, port, oracle_cfg);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "pb %s: %s\n", app.get_subcommands().front()->get_name().c_str(),
                 e.what());
    return 1;
  }
  return 1;
}
