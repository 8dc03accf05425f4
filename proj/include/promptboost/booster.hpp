#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "promptboost/core.hpp"
#include "promptboost/dist_cache.hpp"
#include "promptboost/verbalizer.hpp"

namespace promptboost {

enum class EnsembleMode { boosted, best_single, majority_vote };
enum class StopReason { max_learners, plateau, perfect_learner, exhausted_retries };

std::string_view to_string(EnsembleMode mode);
EnsembleMode ensemble_mode_from_string(std::string_view name);
std::string_view to_string(StopReason reason);

struct BoostConfig {
  std::size_t max_learners = 200;
  ScreenOptions screen;
  std::size_t patience = 20;
  std::uint64_t rng_seed = 0;
  double epsilon_err = 1e-10;
  std::size_t retry_budget = 10;
  // Train on train + validation with a fixed learner count, no early stop.
  bool merge_validation = false;
  // When non-empty, iteration t uses prompt index prompt_schedule[t % size]
  // instead of a random draw. Lets a run be replayed exactly.
  std::vector<std::size_t> prompt_schedule;
  // Keep a copy of the example weights after every accepted iteration.
  bool record_weights = false;
};

// SAMME learner weight: log((1 - err) / err) + log(|Y| - 1).
double samme_alpha(double err, int num_classes);

// True when err < (|Y| - 1) / |Y|, i.e. the learner beats chance.
bool samme_usable(double err, int num_classes);

struct IterationRecord {
  std::size_t t = 0;  // 1-based index of the accepted learner
  std::string prompt_id;
  double err = 0.0;
  double alpha = 0.0;
  std::optional<double> val_accuracy;  // of the ensemble up to and including t
  std::vector<double> weights;         // after the update; only with record_weights
};

struct Ensemble {
  int num_classes = 0;
  EnsembleMode mode = EnsembleMode::boosted;
  std::vector<WeakLearner> learners;
  std::string vocab_id;
  std::map<std::string, PromptTemplate> prompt_table;  // in-memory only

  std::vector<std::string> prompt_ids() const;  // distinct, first-use order
};

struct BoostResult {
  Ensemble ensemble;
  std::vector<IterationRecord> history;  // every accepted learner, before truncation
  StopReason stop_reason = StopReason::max_learners;
  std::size_t rejected_draws = 0;
  std::size_t best_length = 0;  // learners kept after best-validation truncation
  SampleWeights final_weights;
};

// Multi-class AdaBoost over cached prompt matrices. `train` and `validation`
// hold one matrix per prompt (validation may be empty, which disables early
// stopping and truncation). Throws EmptyPromptPool, and ExhaustedRetries when
// retry_budget consecutive draws are rejected before any learner is accepted.
BoostResult boost(const std::vector<PromptMatrix>& train, std::span<const ClassIndex> train_labels,
                  const std::vector<PromptMatrix>& validation,
                  std::span<const ClassIndex> validation_labels, int num_classes,
                  const BoostConfig& config);

// One learner per prompt on uniform weights; keeps the one with the best
// validation accuracy (training accuracy when there is no validation data).
Ensemble best_single_ensemble(const std::vector<PromptMatrix>& train,
                              std::span<const ClassIndex> train_labels,
                              const std::vector<PromptMatrix>& validation,
                              std::span<const ClassIndex> validation_labels, int num_classes,
                              const ScreenOptions& screen);

// One learner per prompt on uniform weights, combined by unweighted vote.
Ensemble majority_vote_ensemble(const std::vector<PromptMatrix>& train,
                                std::span<const ClassIndex> train_labels, int num_classes,
                                const ScreenOptions& screen);

struct PredictOptions {
  // Weighted average of per-learner class probabilities (chosen-token
  // probabilities normalized over classes) instead of weighted hard votes.
  bool average_probabilities = false;
};

using PromptRows = std::map<std::string, std::span<const float>, std::less<>>;

// argmax_c sum_t alpha_t [f_t(x) = c], ties to the smallest class. Majority
// vote ensembles count every learner once.
ClassIndex predict(const Ensemble& ensemble, const PromptRows& rows,
                   const PredictOptions& options = {});

// Row-wise predict over aligned matrices (one per prompt, same example order).
std::vector<ClassIndex> predict_all(const Ensemble& ensemble,
                                    const std::vector<PromptMatrix>& matrices,
                                    const PredictOptions& options = {});

std::string ensemble_to_json(const Ensemble& ensemble);
Ensemble ensemble_from_json(std::string_view text);

std::string history_to_json(const BoostResult& result);

}  // namespace promptboost
