#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "promptboost/booster.hpp"
#include "promptboost/core.hpp"
#include "promptboost/dist_cache.hpp"
#include "promptboost/lm_client.hpp"
#include "promptboost/metrics.hpp"

namespace promptboost {

struct FewShotSpec {
  std::size_t k = 16;
  std::uint64_t seed = 0;
};

// k examples per class for training and another k per class for validation,
// drawn without overlap. Both keep the source order. Throws
// InsufficientExamples if some class has fewer than 2k examples.
std::pair<Dataset, Dataset> sample_few_shot(const Dataset& source, const FewShotSpec& spec);

struct RefineDetails {
  std::vector<double> validation_accuracy;  // per candidate, input order
  std::vector<std::size_t> ranking;         // candidate indices, best first
};

// Trains one weak learner per candidate on the unweighted training set and
// keeps the `keep` best by validation accuracy (ties keep candidate order).
// Matrices are matched to candidates by prompt id.
std::vector<PromptTemplate> refine_prompts(const std::vector<PromptTemplate>& candidates,
                                           const std::vector<PromptMatrix>& train,
                                           std::span<const ClassIndex> train_labels,
                                           const std::vector<PromptMatrix>& validation,
                                           std::span<const ClassIndex> validation_labels,
                                           int num_classes, const ScreenOptions& screen,
                                           std::size_t keep, RefineDetails* details = nullptr);

EvalReport evaluate(const Ensemble& ensemble, const std::vector<PromptMatrix>& test,
                    std::span<const ClassIndex> test_labels, bool compute_f1,
                    const PredictOptions& options = {});

enum class EnsembleMethod { boost, majority_vote, best_single };

EnsembleMethod ensemble_method_from_string(std::string_view name);

struct RunConfig {
  std::filesystem::path dataset;  // directory with manifest.json and <split>.jsonl
  std::filesystem::path prompts;
  std::optional<std::string> endpoint;
  std::filesystem::path cache_dir;
  std::size_t k = 16;  // 0 uses train.jsonl / validation.jsonl as given
  std::uint64_t seed = 0;
  std::size_t max_learners = 200;
  std::size_t m = 10;
  std::size_t patience = 20;
  struct Refine {
    bool enabled = false;
    std::filesystem::path candidates;
    std::size_t keep = 10;
  } refine;
  bool merge_validation = false;
  std::string mask_literal{kDefaultMaskLiteral};
  std::optional<int> top_k;

  // Not part of the minimal schema; all optional in the file.
  EnsembleMethod method = EnsembleMethod::boost;
  unsigned workers = 4;
  std::uint64_t combination_budget = 100000;
  std::vector<std::size_t> exclude_tokens;
  std::size_t retry_budget = 10;
  bool average_probabilities = false;

  std::uint64_t split_seed() const { return seed; }
  std::uint64_t boost_seed() const { return seed + 1; }
  ScreenOptions screen_options() const;
  BoostConfig boost_config() const;
};

// Relative paths in the file are resolved against `base_dir`.
RunConfig parse_run_config(std::string_view json_text, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

struct RunSplits {
  Dataset train;
  Dataset validation;
  Dataset test;
};

RunSplits prepare_splits(const RunConfig& config);

// The prompt pool before refinement: the candidates when refinement is on,
// otherwise the prompt file.
std::vector<PromptTemplate> initial_pool(const RunConfig& config);

struct CacheOutcome {
  std::vector<PromptTemplate> pool;  // prompts used for training after refinement
  FillReport train;
  FillReport validation;
  FillReport test;
  std::vector<std::string> train_prompt_ids;  // prompts cached for train/validation
  std::uint64_t total_queries() const;
};

// Fills train/validation caches for the initial pool, refines when enabled,
// then fills the test cache for the surviving prompts.
CacheOutcome cache_run(const RunConfig& config, MaskedLm* client, const RunSplits& splits);

struct TrainOutcome {
  BoostResult result;  // for vote/best-single methods only the ensemble is set
  std::vector<PromptTemplate> pool;
  std::uint64_t queries = 0;
};

// `client` may be null when the train/validation caches are complete.
TrainOutcome train_run(const RunConfig& config, MaskedLm* client, const RunSplits& splits);

// Evaluates on the full test split through the cache. Throws VocabMismatch if
// the ensemble was trained against another vocabulary.
EvalReport evaluate_run(const RunConfig& config, const Ensemble& ensemble, MaskedLm* client,
                        const RunSplits& splits);

}  // namespace promptboost
