#include "promptboost/booster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "promptboost/error.hpp"

namespace promptboost {

using nlohmann::json;

std::string_view to_string(EnsembleMode mode) {
  switch (mode) {
    case EnsembleMode::boosted: return "boosted";
    case EnsembleMode::best_single: return "best_single";
    case EnsembleMode::majority_vote: return "majority_vote";
  }
  return "boosted";
}

EnsembleMode ensemble_mode_from_string(std::string_view name) {
  if (name == "boosted") return EnsembleMode::boosted;
  if (name == "best_single") return EnsembleMode::best_single;
  if (name == "majority_vote") return EnsembleMode::majority_vote;
  throw FormatError("unknown ensemble mode '" + std::string(name) + "'");
}

std::string_view to_string(StopReason reason) {
  switch (reason) {
    case StopReason::max_learners: return "max_learners";
    case StopReason::plateau: return "plateau";
    case StopReason::perfect_learner: return "perfect_learner";
    case StopReason::exhausted_retries: return "exhausted_retries";
  }
  return "max_learners";
}

double samme_alpha(double err, int num_classes) {
  return std::log((1.0 - err) / err) + std::log(static_cast<double>(num_classes - 1));
}

bool samme_usable(double err, int num_classes) {
  return err < static_cast<double>(num_classes - 1) / static_cast<double>(num_classes);
}

std::vector<std::string> Ensemble::prompt_ids() const {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& l : learners) {
    if (seen.insert(l.prompt_id).second) out.push_back(l.prompt_id);
  }
  return out;
}

namespace {

double accuracy_of(std::span<const ClassIndex> predicted, std::span<const ClassIndex> labels) {
  if (labels.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predicted[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

ClassIndex argmax_tally(std::span<const double> tally) {
  ClassIndex best = 0;
  for (std::size_t c = 1; c < tally.size(); ++c) {
    if (tally[c] > tally[best]) best = static_cast<ClassIndex>(c);
  }
  return best;
}

void check_pool(const std::vector<PromptMatrix>& train, std::span<const ClassIndex> labels,
                const std::vector<PromptMatrix>& validation,
                std::span<const ClassIndex> validation_labels) {
  if (train.empty()) throw EmptyPromptPool("no prompts to learn from");
  for (const auto& m : train) {
    if (m.rows() != labels.size()) {
      throw DimensionMismatch("prompt '" + m.prompt_id() + "' has " + std::to_string(m.rows()) +
                              " training rows for " + std::to_string(labels.size()) + " labels");
    }
    if (m.example_ids() != train.front().example_ids()) {
      throw DimensionMismatch("prompt '" + m.prompt_id() +
                              "' orders training examples differently");
    }
    if (m.vocab_id() != train.front().vocab_id()) {
      throw VocabMismatch("prompt '" + m.prompt_id() + "' uses a different vocabulary");
    }
  }
  for (const auto& m : validation) {
    if (m.rows() != validation_labels.size()) {
      throw DimensionMismatch("prompt '" + m.prompt_id() + "' has " + std::to_string(m.rows()) +
                              " validation rows for " +
                              std::to_string(validation_labels.size()) + " labels");
    }
  }
}

// Validation matrix aligned with each training prompt, or null.
std::vector<const PromptMatrix*> align_validation(const std::vector<PromptMatrix>& train,
                                                  const std::vector<PromptMatrix>& validation,
                                                  std::size_t validation_rows) {
  std::vector<const PromptMatrix*> out(train.size(), nullptr);
  if (validation_rows == 0) return out;
  std::unordered_map<std::string, const PromptMatrix*> by_id;
  for (const auto& m : validation) by_id[m.prompt_id()] = &m;
  for (std::size_t p = 0; p < train.size(); ++p) {
    auto it = by_id.find(train[p].prompt_id());
    if (it == by_id.end()) {
      throw MissingPromptRow("no validation rows for prompt '" + train[p].prompt_id() + "'");
    }
    out[p] = it->second;
  }
  return out;
}

}  // namespace

Ensemble best_single_ensemble(const std::vector<PromptMatrix>& train,
                              std::span<const ClassIndex> train_labels,
                              const std::vector<PromptMatrix>& validation,
                              std::span<const ClassIndex> validation_labels, int num_classes,
                              const ScreenOptions& screen) {
  check_pool(train, train_labels, validation, validation_labels);
  const auto val = align_validation(train, validation, validation_labels.size());
  const auto uniform = SampleWeights::uniform(train_labels.size());

  Ensemble ensemble;
  ensemble.num_classes = num_classes;
  ensemble.mode = EnsembleMode::best_single;
  ensemble.vocab_id = train.front().vocab_id();

  double best_acc = -1.0;
  for (std::size_t p = 0; p < train.size(); ++p) {
    auto learner =
        learn_weak_learner(train[p], train_labels, uniform.values(), num_classes, screen);
    const double acc =
        val[p] ? accuracy_of(predict_rows(learner, *val[p]), validation_labels)
               : accuracy_of(predict_rows(learner, train[p]), train_labels);
    if (acc > best_acc) {
      best_acc = acc;
      learner.alpha = 1.0;
      ensemble.learners.assign(1, std::move(learner));
    }
  }
  return ensemble;
}

Ensemble majority_vote_ensemble(const std::vector<PromptMatrix>& train,
                                std::span<const ClassIndex> train_labels, int num_classes,
                                const ScreenOptions& screen) {
  check_pool(train, train_labels, {}, {});
  const auto uniform = SampleWeights::uniform(train_labels.size());
  Ensemble ensemble;
  ensemble.num_classes = num_classes;
  ensemble.mode = EnsembleMode::majority_vote;
  ensemble.vocab_id = train.front().vocab_id();
  for (const auto& m : train) {
    auto learner = learn_weak_learner(m, train_labels, uniform.values(), num_classes, screen);
    learner.alpha = 1.0;
    ensemble.learners.push_back(std::move(learner));
  }
  return ensemble;
}

BoostResult boost(const std::vector<PromptMatrix>& train_in,
                  std::span<const ClassIndex> train_labels_in,
                  const std::vector<PromptMatrix>& validation_in,
                  std::span<const ClassIndex> validation_labels_in, int num_classes,
                  const BoostConfig& config) {
  if (num_classes < 2) throw std::invalid_argument("boosting needs at least two classes");
  if (config.max_learners < 1) throw std::invalid_argument("max_learners must be >= 1");
  if (config.patience < 1) throw std::invalid_argument("patience must be >= 1");
  check_pool(train_in, train_labels_in, validation_in, validation_labels_in);

  // merge_validation folds the validation rows into training.
  std::vector<PromptMatrix> merged;
  std::vector<ClassIndex> merged_labels;
  const std::vector<PromptMatrix>* train = &train_in;
  std::span<const ClassIndex> train_labels = train_labels_in;
  std::span<const ClassIndex> validation_labels = validation_labels_in;
  std::vector<const PromptMatrix*> val;
  if (config.merge_validation) {
    const auto aligned = align_validation(train_in, validation_in, validation_labels_in.size());
    for (std::size_t p = 0; p < train_in.size(); ++p) {
      merged.push_back(aligned[p] ? train_in[p].concat(*aligned[p], SplitTag::train)
                                  : train_in[p]);
    }
    merged_labels.assign(train_labels_in.begin(), train_labels_in.end());
    if (!validation_labels_in.empty()) {
      merged_labels.insert(merged_labels.end(), validation_labels_in.begin(),
                           validation_labels_in.end());
    }
    train = &merged;
    train_labels = merged_labels;
    validation_labels = {};
    val.assign(train->size(), nullptr);
  } else {
    val = align_validation(train_in, validation_in, validation_labels_in.size());
  }
  const bool has_validation = !validation_labels.empty();

  const std::size_t n = train_labels.size();
  const std::size_t pool = train->size();
  for (auto idx : config.prompt_schedule) {
    if (idx >= pool) throw std::invalid_argument("prompt_schedule index out of range");
  }

  BoostResult result;
  result.ensemble.num_classes = num_classes;
  result.ensemble.mode = EnsembleMode::boosted;
  result.ensemble.vocab_id = train->front().vocab_id();

  std::vector<double> w(n, n ? 1.0 / static_cast<double>(n) : 0.0);
  std::mt19937_64 rng(config.rng_seed);
  std::uniform_int_distribution<std::size_t> draw(0, pool - 1);

  std::vector<double> val_tally(validation_labels.size() * static_cast<std::size_t>(num_classes),
                                0.0);
  double best_val = -1.0;
  std::size_t since_best = 0;
  std::size_t consecutive_rejects = 0;
  std::size_t draws = 0;
  std::vector<ClassIndex> val_pred(validation_labels.size());

  result.stop_reason = StopReason::max_learners;
  while (result.ensemble.learners.size() < config.max_learners) {
    const std::size_t p = config.prompt_schedule.empty()
                              ? draw(rng)
                              : config.prompt_schedule[draws % config.prompt_schedule.size()];
    ++draws;
    const PromptMatrix& matrix = (*train)[p];

    auto learner = learn_weak_learner(matrix, train_labels, w, num_classes, config.screen);
    const auto predicted = predict_rows(learner, matrix);

    double missed = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      total += w[i];
      if (predicted[i] != train_labels[i]) missed += w[i];
    }
    const double err = missed / total;

    if (err == 0.0) {
      if (result.ensemble.learners.empty()) {
        // A perfect first learner leaves nothing to reweight.
        auto single = best_single_ensemble(*train, train_labels,
                                           config.merge_validation ? std::vector<PromptMatrix>{}
                                                                   : validation_in,
                                           validation_labels, num_classes, config.screen);
        result.ensemble = std::move(single);
        result.stop_reason = StopReason::perfect_learner;
        result.best_length = result.ensemble.learners.size();
        result.final_weights = SampleWeights(w);
        return result;
      }
      result.stop_reason = StopReason::perfect_learner;
      break;
    }

    const double clamped = std::clamp(err, config.epsilon_err, 1.0 - config.epsilon_err);
    const double alpha = samme_alpha(clamped, num_classes);
    if (!samme_usable(clamped, num_classes) || !(alpha > 0.0)) {
      ++result.rejected_draws;
      if (++consecutive_rejects >= config.retry_budget) {
        if (result.ensemble.learners.empty()) {
          throw ExhaustedRetries(std::to_string(consecutive_rejects) +
                                 " consecutive weak learners were no better than chance");
        }
        result.stop_reason = StopReason::exhausted_retries;
        break;
      }
      continue;
    }
    consecutive_rejects = 0;

    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (predicted[i] != train_labels[i]) w[i] *= std::exp(alpha);
      sum += w[i];
    }
    for (auto& x : w) x /= sum;

    learner.alpha = alpha;
    IterationRecord record;
    record.t = result.ensemble.learners.size() + 1;
    record.prompt_id = learner.prompt_id;
    record.err = err;
    record.alpha = alpha;
    if (config.record_weights) record.weights = w;

    if (has_validation) {
      const PromptMatrix& vm = *val[p];
      std::size_t correct = 0;
      for (std::size_t j = 0; j < validation_labels.size(); ++j) {
        std::span<double> tally(val_tally.data() + j * num_classes, num_classes);
        tally[learner.predict(vm.row(j))] += alpha;
        val_pred[j] = argmax_tally(tally);
        correct += val_pred[j] == validation_labels[j];
      }
      record.val_accuracy =
          static_cast<double>(correct) / static_cast<double>(validation_labels.size());
    }

    result.ensemble.learners.push_back(std::move(learner));
    result.history.push_back(std::move(record));

    if (has_validation) {
      const double acc = *result.history.back().val_accuracy;
      if (acc > best_val) {
        best_val = acc;
        result.best_length = result.ensemble.learners.size();
        since_best = 0;
      } else if (++since_best >= config.patience) {
        result.stop_reason = StopReason::plateau;
        break;
      }
    }
  }

  if (has_validation) {
    result.ensemble.learners.resize(result.best_length);
  } else {
    result.best_length = result.ensemble.learners.size();
  }
  result.final_weights = SampleWeights(w);
  return result;
}

namespace {

void tally_learner(const WeakLearner& learner, double weight, std::span<const float> row,
                   const PredictOptions& options, std::span<double> tally) {
  if (!options.average_probabilities) {
    tally[learner.predict(row)] += weight;
    return;
  }
  const auto& tokens = learner.verbalizer.chosen_tokens;
  double mass = 0.0;
  for (auto t : tokens) mass += row[t];
  for (std::size_t c = 0; c < tokens.size(); ++c) {
    const double p = mass > 0.0 ? row[tokens[c]] / mass : 1.0 / static_cast<double>(tokens.size());
    tally[c] += weight * p;
  }
}

}  // namespace

ClassIndex predict(const Ensemble& ensemble, const PromptRows& rows,
                   const PredictOptions& options) {
  std::vector<double> tally(static_cast<std::size_t>(ensemble.num_classes), 0.0);
  for (const auto& learner : ensemble.learners) {
    auto it = rows.find(learner.prompt_id);
    if (it == rows.end()) {
      throw MissingPromptRow("no distribution row for prompt '" + learner.prompt_id + "'");
    }
    const double weight = ensemble.mode == EnsembleMode::majority_vote ? 1.0 : learner.alpha;
    tally_learner(learner, weight, it->second, options, tally);
  }
  return argmax_tally(tally);
}

std::vector<ClassIndex> predict_all(const Ensemble& ensemble,
                                    const std::vector<PromptMatrix>& matrices,
                                    const PredictOptions& options) {
  std::unordered_map<std::string, const PromptMatrix*> by_id;
  for (const auto& m : matrices) by_id[m.prompt_id()] = &m;
  std::vector<const PromptMatrix*> per_learner;
  std::size_t rows = matrices.empty() ? 0 : matrices.front().rows();
  for (const auto& learner : ensemble.learners) {
    auto it = by_id.find(learner.prompt_id);
    if (it == by_id.end()) {
      throw MissingPromptRow("no distribution rows for prompt '" + learner.prompt_id + "'");
    }
    if (it->second->rows() != rows) {
      throw DimensionMismatch("prompt matrices cover different numbers of examples");
    }
    per_learner.push_back(it->second);
  }

  const auto K = static_cast<std::size_t>(ensemble.num_classes);
  std::vector<ClassIndex> out(rows, 0);
  std::vector<double> tally(K);
  for (std::size_t i = 0; i < rows; ++i) {
    std::fill(tally.begin(), tally.end(), 0.0);
    for (std::size_t t = 0; t < ensemble.learners.size(); ++t) {
      const auto& learner = ensemble.learners[t];
      const double weight = ensemble.mode == EnsembleMode::majority_vote ? 1.0 : learner.alpha;
      tally_learner(learner, weight, per_learner[t]->row(i), options, tally);
    }
    out[i] = argmax_tally(tally);
  }
  return out;
}

std::string ensemble_to_json(const Ensemble& ensemble) {
  json j;
  j["num_classes"] = ensemble.num_classes;
  j["mode"] = std::string(to_string(ensemble.mode));
  j["vocab_id"] = ensemble.vocab_id;
  json learners = json::array();
  for (const auto& l : ensemble.learners) {
    learners.push_back({{"prompt_id", l.prompt_id},
                        {"chosen_tokens", l.verbalizer.chosen_tokens},
                        {"alpha", l.alpha}});
  }
  j["learners"] = std::move(learners);
  return j.dump(2) + "\n";
}

Ensemble ensemble_from_json(std::string_view text) {
  Ensemble e;
  try {
    const json j = json::parse(text);
    e.num_classes = j.at("num_classes").get<int>();
    e.mode = ensemble_mode_from_string(j.at("mode").get<std::string>());
    e.vocab_id = j.value("vocab_id", std::string{});
    for (const auto& item : j.at("learners")) {
      WeakLearner l;
      l.prompt_id = item.at("prompt_id").get<std::string>();
      l.verbalizer.chosen_tokens = item.at("chosen_tokens").get<std::vector<std::size_t>>();
      l.alpha = item.at("alpha").get<double>();
      if (static_cast<int>(l.verbalizer.chosen_tokens.size()) != e.num_classes) {
        throw FormatError("learner for prompt '" + l.prompt_id + "' has " +
                          std::to_string(l.verbalizer.chosen_tokens.size()) +
                          " chosen tokens for " + std::to_string(e.num_classes) + " classes");
      }
      e.learners.push_back(std::move(l));
    }
  } catch (const json::exception& ex) {
    throw FormatError(std::string("bad ensemble JSON: ") + ex.what());
  }
  return e;
}

std::string history_to_json(const BoostResult& result) {
  json rows = json::array();
  for (const auto& r : result.history) {
    json row{{"t", r.t}, {"prompt_id", r.prompt_id}, {"err", r.err}, {"alpha", r.alpha}};
    row["val_accuracy"] = r.val_accuracy ? json(*r.val_accuracy) : json(nullptr);
    rows.push_back(std::move(row));
  }
  json j;
  j["stop_reason"] = std::string(to_string(result.stop_reason));
  j["mode"] = std::string(to_string(result.ensemble.mode));
  j["best_length"] = result.best_length;
  j["rejected_draws"] = result.rejected_draws;
  j["history"] = std::move(rows);
  return j.dump(2) + "\n";
}

}  // namespace promptboost
