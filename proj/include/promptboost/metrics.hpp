#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "promptboost/core.hpp"

namespace promptboost {

struct EvalReport {
  double accuracy = 0.0;
  std::size_t n_examples = 0;
  std::size_t n_correct = 0;
  std::optional<std::vector<double>> per_class_f1;
  std::optional<double> macro_f1;
  // Binary F1 of class 1 for two-class tasks, macro F1 otherwise.
  std::optional<double> f1;
  std::uint64_t query_count_train = 0;
  std::uint64_t query_count_eval = 0;

  bool operator==(const EvalReport&) const = default;
};

// Per-class F1; a class with no predicted and no true members scores 0.
std::vector<double> per_class_f1(std::span<const ClassIndex> predicted,
                                 std::span<const ClassIndex> labels, int num_classes);

EvalReport score_predictions(std::span<const ClassIndex> predicted,
                             std::span<const ClassIndex> labels, int num_classes,
                             bool compute_f1);

std::string report_to_json(const EvalReport& report);

}  // namespace promptboost
