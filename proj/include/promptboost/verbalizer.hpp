#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "promptboost/core.hpp"
#include "promptboost/dist_cache.hpp"

namespace promptboost {

// |Y| x |V| score matrix, row-major. Entry (c, v) accumulates +w_i * pi_i[v]
// over examples of class c and -w_i * pi_i[v] over all other examples, so the
// closed-form l1 verbalizer is a per-token argmax over classes.
class ScoreMatrix {
 public:
  ScoreMatrix() = default;
  ScoreMatrix(int num_classes, std::size_t vocab_size)
      : num_classes_(num_classes),
        vocab_size_(vocab_size),
        scores_(static_cast<std::size_t>(num_classes) * vocab_size, 0.0) {}

  int num_classes() const { return num_classes_; }
  std::size_t vocab_size() const { return vocab_size_; }

  double operator()(int c, std::size_t v) const { return scores_[c * vocab_size_ + v]; }
  double& operator()(int c, std::size_t v) { return scores_[c * vocab_size_ + v]; }

  std::span<const double> row(int c) const {
    return {scores_.data() + c * vocab_size_, vocab_size_};
  }

 private:
  int num_classes_ = 0;
  std::size_t vocab_size_ = 0;
  std::vector<double> scores_;
};

ScoreMatrix score_matrix(const PromptMatrix& matrix, std::span<const ClassIndex> labels,
                         std::span<const double> weights, int num_classes);

// full_assignment[v] = argmax_c S(c, v), ties to the smallest class.
std::vector<ClassIndex> l1_assignment(const ScoreMatrix& scores);

struct Verbalizer {
  std::vector<std::size_t> chosen_tokens;     // one token per class
  std::vector<ClassIndex> full_assignment;    // diagnostics only

  bool operator==(const Verbalizer&) const = default;
};

// argmax_c row[chosen_tokens[c]], ties to the smallest class.
ClassIndex predict_with(std::span<const std::size_t> chosen_tokens, std::span<const float> row);

// Sum of w_i over rows whose prediction matches their label.
double weighted_accuracy(std::span<const std::size_t> chosen_tokens, const PromptMatrix& matrix,
                         std::span<const ClassIndex> labels, std::span<const double> weights);

struct ScreenOptions {
  std::size_t m = 10;
  // Largest number of combinations (m^|Y|) the search may visit; m shrinks to fit.
  std::uint64_t combination_budget = 100000;
  // Tokens never offered as candidates (e.g. special tokens).
  std::vector<std::size_t> exclude_tokens;
};

// Largest m' <= m with m'^num_classes <= budget (at least 1).
std::size_t effective_screen_width(std::size_t m, int num_classes, std::uint64_t budget);

// Indices of the m largest entries of `scores`, ordered by descending score
// then ascending index, skipping `exclude`.
std::vector<std::size_t> top_m_tokens(std::span<const double> scores, std::size_t m,
                                      std::span<const std::size_t> exclude = {});

struct ScreenResult {
  Verbalizer verbalizer;
  double weighted_accuracy = 0.0;
  double score_sum = 0.0;
  std::size_t effective_m = 0;
  std::uint64_t combinations_visited = 0;
};

// Picks one token per class from each class's top-m candidates, maximizing
// weighted training accuracy over all combinations with distinct tokens.
// Ties go to the larger summed score, then the lexicographically smallest
// token vector.
ScreenResult screen(const ScoreMatrix& scores, const PromptMatrix& matrix,
                    std::span<const ClassIndex> labels, std::span<const double> weights,
                    const ScreenOptions& options = {});

struct WeakLearner {
  std::string prompt_id;
  Verbalizer verbalizer;
  double alpha = 1.0;

  ClassIndex predict(std::span<const float> row) const {
    return predict_with(verbalizer.chosen_tokens, row);
  }
};

// Score matrix, l1 assignment and screening in one step.
WeakLearner learn_weak_learner(const PromptMatrix& matrix, std::span<const ClassIndex> labels,
                               std::span<const double> weights, int num_classes,
                               const ScreenOptions& options = {},
                               ScreenResult* details = nullptr);

std::vector<ClassIndex> predict_rows(const WeakLearner& learner, const PromptMatrix& matrix);

}  // namespace promptboost
