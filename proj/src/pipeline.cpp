#include "promptboost/pipeline.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "promptboost/dataset_io.hpp"
#include "promptboost/error.hpp"

namespace promptboost {

namespace fs = std::filesystem;
using nlohmann::json;

std::pair<Dataset, Dataset> sample_few_shot(const Dataset& source, const FewShotSpec& spec) {
  if (spec.k < 1) throw std::invalid_argument("k must be >= 1");
  const auto K = static_cast<std::size_t>(source.num_classes());
  std::vector<std::vector<std::size_t>> by_class(K);
  for (std::size_t i = 0; i < source.size(); ++i) by_class[source[i].label].push_back(i);

  std::mt19937_64 rng(spec.seed);
  std::vector<std::size_t> train_idx, val_idx;
  for (std::size_t c = 0; c < K; ++c) {
    auto& pool = by_class[c];
    if (pool.size() < 2 * spec.k) {
      throw InsufficientExamples("class " + std::to_string(c) + " has " +
                                 std::to_string(pool.size()) + " examples, need " +
                                 std::to_string(2 * spec.k));
    }
    for (std::size_t i = pool.size() - 1; i > 0; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i);
      std::swap(pool[i], pool[pick(rng)]);
    }
    train_idx.insert(train_idx.end(), pool.begin(), pool.begin() + spec.k);
    val_idx.insert(val_idx.end(), pool.begin() + spec.k, pool.begin() + 2 * spec.k);
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(val_idx.begin(), val_idx.end());

  auto gather = [&](const std::vector<std::size_t>& idx, SplitTag split) {
    std::vector<LabeledExample> ex;
    ex.reserve(idx.size());
    for (auto i : idx) ex.push_back(source[i]);
    return Dataset(std::move(ex), source.num_classes(), split, source.label_names());
  };
  return {gather(train_idx, SplitTag::train), gather(val_idx, SplitTag::validation)};
}

namespace {

const PromptMatrix& find_matrix(const std::vector<PromptMatrix>& matrices, const std::string& id) {
  for (const auto& m : matrices) {
    if (m.prompt_id() == id) return m;
  }
  throw MissingPromptRow("no cached rows for prompt '" + id + "'");
}

std::vector<PromptMatrix> pick_matrices(const std::vector<PromptMatrix>& matrices,
                                        const std::vector<PromptTemplate>& prompts) {
  std::vector<PromptMatrix> out;
  out.reserve(prompts.size());
  for (const auto& p : prompts) out.push_back(find_matrix(matrices, p.id));
  return out;
}

}  // namespace

std::vector<PromptTemplate> refine_prompts(const std::vector<PromptTemplate>& candidates,
                                           const std::vector<PromptMatrix>& train,
                                           std::span<const ClassIndex> train_labels,
                                           const std::vector<PromptMatrix>& validation,
                                           std::span<const ClassIndex> validation_labels,
                                           int num_classes, const ScreenOptions& screen,
                                           std::size_t keep, RefineDetails* details) {
  if (keep > candidates.size()) {
    throw std::invalid_argument("cannot keep " + std::to_string(keep) + " of " +
                                std::to_string(candidates.size()) + " candidate prompts");
  }
  const auto uniform = SampleWeights::uniform(train_labels.size());
  std::vector<double> acc(candidates.size(), 0.0);
  for (std::size_t p = 0; p < candidates.size(); ++p) {
    const auto& tm = find_matrix(train, candidates[p].id);
    const auto& vm = find_matrix(validation, candidates[p].id);
    const auto learner =
        learn_weak_learner(tm, train_labels, uniform.values(), num_classes, screen);
    const auto predicted = predict_rows(learner, vm);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < validation_labels.size(); ++i) {
      correct += predicted[i] == validation_labels[i];
    }
    acc[p] = validation_labels.empty() ? 0.0
                                       : static_cast<double>(correct) /
                                             static_cast<double>(validation_labels.size());
  }
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return acc[a] > acc[b]; });

  std::vector<PromptTemplate> kept;
  for (std::size_t r = 0; r < keep; ++r) kept.push_back(candidates[order[r]]);
  if (details) {
    details->validation_accuracy = std::move(acc);
    details->ranking = std::move(order);
  }
  return kept;
}

EvalReport evaluate(const Ensemble& ensemble, const std::vector<PromptMatrix>& test,
                    std::span<const ClassIndex> test_labels, bool compute_f1,
                    const PredictOptions& options) {
  for (const auto& id : ensemble.prompt_ids()) {
    const auto& m = find_matrix(test, id);
    if (m.rows() != test_labels.size()) {
      throw DimensionMismatch("prompt '" + id + "' has " + std::to_string(m.rows()) +
                              " test rows for " + std::to_string(test_labels.size()) +
                              " labels");
    }
  }
  const auto predicted = predict_all(ensemble, test, options);
  return score_predictions(predicted, test_labels, ensemble.num_classes, compute_f1);
}

EnsembleMethod ensemble_method_from_string(std::string_view name) {
  if (name == "boost") return EnsembleMethod::boost;
  if (name == "majority_vote") return EnsembleMethod::majority_vote;
  if (name == "best_single") return EnsembleMethod::best_single;
  throw FormatError("unknown ensemble method '" + std::string(name) + "'");
}

ScreenOptions RunConfig::screen_options() const {
  ScreenOptions s;
  s.m = m;
  s.combination_budget = combination_budget;
  s.exclude_tokens = exclude_tokens;
  return s;
}

BoostConfig RunConfig::boost_config() const {
  BoostConfig b;
  b.max_learners = max_learners;
  b.screen = screen_options();
  b.patience = patience;
  b.rng_seed = boost_seed();
  b.retry_budget = retry_budget;
  b.merge_validation = merge_validation;
  return b;
}

RunConfig parse_run_config(std::string_view json_text, const fs::path& base_dir) {
  RunConfig cfg;
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  try {
    const json j = json::parse(json_text);
    cfg.dataset = resolve(j.at("dataset").get<std::string>());
    cfg.prompts = resolve(j.at("prompts").get<std::string>());
    if (j.contains("endpoint") && !j["endpoint"].is_null()) {
      cfg.endpoint = j["endpoint"].get<std::string>();
    }
    cfg.cache_dir = resolve(j.at("cache_dir").get<std::string>());
    cfg.k = j.value("k", cfg.k);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.max_learners = j.value("max_learners", cfg.max_learners);
    cfg.m = j.value("m", cfg.m);
    cfg.patience = j.value("patience", cfg.patience);
    if (j.contains("refine") && j["refine"].is_object()) {
      const auto& r = j["refine"];
      cfg.refine.enabled = r.value("enabled", false);
      if (r.contains("candidates") && r["candidates"].is_string()) {
        cfg.refine.candidates = resolve(r["candidates"].get<std::string>());
      }
      cfg.refine.keep = r.value("keep", cfg.refine.keep);
    }
    cfg.merge_validation = j.value("merge_validation", false);
    cfg.mask_literal = j.value("mask_literal", std::string(kDefaultMaskLiteral));
    if (j.contains("top_k") && !j["top_k"].is_null()) cfg.top_k = j["top_k"].get<int>();
    if (j.contains("method")) cfg.method = ensemble_method_from_string(j["method"].get<std::string>());
    cfg.workers = j.value("workers", cfg.workers);
    cfg.combination_budget = j.value("combination_budget", cfg.combination_budget);
    if (j.contains("exclude_tokens")) {
      cfg.exclude_tokens = j["exclude_tokens"].get<std::vector<std::size_t>>();
    }
    cfg.retry_budget = j.value("retry_budget", cfg.retry_budget);
    cfg.average_probabilities = j.value("average_probabilities", false);
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad run config: ") + e.what());
  }
  if (cfg.refine.enabled && cfg.refine.candidates.empty()) {
    throw FormatError("bad run config: refine.enabled needs refine.candidates");
  }
  if (cfg.mask_literal.empty()) throw FormatError("bad run config: empty mask_literal");
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  try {
    return parse_run_config(read_text_file(path), path.parent_path());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

RunSplits prepare_splits(const RunConfig& config) {
  RunSplits splits;
  splits.test = load_dataset_split(config.dataset, SplitTag::test);
  const auto source = load_dataset_split(config.dataset, SplitTag::train);
  if (config.k > 0) {
    auto [train, validation] = sample_few_shot(source, {config.k, config.split_seed()});
    splits.train = std::move(train);
    splits.validation = std::move(validation);
  } else {
    splits.train = source;
    splits.validation = load_dataset_split(config.dataset, SplitTag::validation);
  }
  return splits;
}

std::vector<PromptTemplate> initial_pool(const RunConfig& config) {
  auto pool = config.refine.enabled ? load_prompts(config.refine.candidates)
                                    : load_prompts(config.prompts);
  if (pool.empty()) throw EmptyPromptPool("prompt file lists no prompts");
  return pool;
}

std::uint64_t CacheOutcome::total_queries() const {
  return train.total_queries() + validation.total_queries() + test.total_queries();
}

namespace {

struct TrainMatrices {
  std::vector<PromptTemplate> pool;
  std::vector<PromptMatrix> train;
  std::vector<PromptMatrix> validation;
};

TrainMatrices cached_training_pool(const RunConfig& config, MaskedLm* client,
                                   const RunSplits& splits, FillReport* train_report,
                                   FillReport* validation_report) {
  FillOptions fill{config.mask_literal, config.workers};
  TrainMatrices out;
  out.pool = initial_pool(config);
  out.train = ensure_cached(client, splits.train, out.pool, config.cache_dir, fill, train_report);
  out.validation = ensure_cached(client, splits.validation, out.pool, config.cache_dir, fill,
                                 validation_report);
  if (config.refine.enabled) {
    out.pool = refine_prompts(out.pool, out.train, splits.train.labels(), out.validation,
                              splits.validation.labels(), splits.train.num_classes(),
                              config.screen_options(), config.refine.keep);
    out.train = pick_matrices(out.train, out.pool);
    out.validation = pick_matrices(out.validation, out.pool);
  }
  return out;
}

}  // namespace

CacheOutcome cache_run(const RunConfig& config, MaskedLm* client, const RunSplits& splits) {
  CacheOutcome outcome;
  auto pool = cached_training_pool(config, client, splits, &outcome.train, &outcome.validation);
  outcome.train_prompt_ids.clear();
  for (const auto& p : initial_pool(config)) outcome.train_prompt_ids.push_back(p.id);
  outcome.pool = pool.pool;
  FillOptions fill{config.mask_literal, config.workers};
  ensure_cached(client, splits.test, outcome.pool, config.cache_dir, fill, &outcome.test);
  return outcome;
}

TrainOutcome train_run(const RunConfig& config, MaskedLm* client, const RunSplits& splits) {
  const std::uint64_t before = client ? client->queries_issued() : 0;
  auto pool = cached_training_pool(config, client, splits, nullptr, nullptr);
  const auto train_labels = splits.train.labels();
  const auto val_labels = splits.validation.labels();
  const int K = splits.train.num_classes();

  TrainOutcome outcome;
  switch (config.method) {
    case EnsembleMethod::boost:
      outcome.result = boost(pool.train, train_labels, pool.validation, val_labels, K,
                             config.boost_config());
      break;
    case EnsembleMethod::majority_vote:
      outcome.result.ensemble =
          majority_vote_ensemble(pool.train, train_labels, K, config.screen_options());
      outcome.result.best_length = outcome.result.ensemble.learners.size();
      break;
    case EnsembleMethod::best_single:
      outcome.result.ensemble = best_single_ensemble(pool.train, train_labels, pool.validation,
                                                     val_labels, K, config.screen_options());
      outcome.result.best_length = 1;
      break;
  }
  for (const auto& p : pool.pool) outcome.result.ensemble.prompt_table[p.id] = p;
  outcome.pool = std::move(pool.pool);
  outcome.queries = client ? client->queries_issued() - before : 0;
  return outcome;
}

EvalReport evaluate_run(const RunConfig& config, const Ensemble& ensemble, MaskedLm* client,
                        const RunSplits& splits) {
  // Templates are needed only to render rows missing from the cache.
  std::unordered_map<std::string, PromptTemplate> known;
  for (const auto& p : load_prompts(config.prompts)) known.emplace(p.id, p);
  if (config.refine.enabled) {
    for (const auto& p : load_prompts(config.refine.candidates)) known.emplace(p.id, p);
  }
  for (const auto& [id, p] : ensemble.prompt_table) known.emplace(id, p);

  std::vector<PromptTemplate> prompts;
  for (const auto& id : ensemble.prompt_ids()) {
    auto it = known.find(id);
    if (it == known.end()) {
      throw MissingPromptRow("ensemble uses prompt '" + id + "' which no prompt file defines");
    }
    prompts.push_back(it->second);
  }

  const std::uint64_t before = client ? client->queries_issued() : 0;
  FillOptions fill{config.mask_literal, config.workers};
  const auto test = ensure_cached(client, splits.test, prompts, config.cache_dir, fill);
  for (const auto& m : test) {
    if (!ensemble.vocab_id.empty() && m.vocab_id() != ensemble.vocab_id) {
      throw VocabMismatch("ensemble was trained on vocab_id '" + ensemble.vocab_id +
                          "' but the test cache for prompt '" + m.prompt_id() + "' uses '" +
                          m.vocab_id() + "'");
    }
  }
  PredictOptions options;
  options.average_probabilities = config.average_probabilities;
  auto report = evaluate(ensemble, test, splits.test.labels(), true, options);
  report.query_count_eval = client ? client->queries_issued() - before : 0;
  return report;
}

}  // namespace promptboost
