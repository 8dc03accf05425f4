#include "promptboost/metrics.hpp"

#include <json.hpp>

#include "promptboost/error.hpp"

namespace promptboost {

std::vector<double> per_class_f1(std::span<const ClassIndex> predicted,
                                 std::span<const ClassIndex> labels, int num_classes) {
  const auto K = static_cast<std::size_t>(num_classes);
  std::vector<std::size_t> tp(K, 0), fp(K, 0), fn(K, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predicted[i] == labels[i]) {
      ++tp[labels[i]];
    } else {
      ++fp[predicted[i]];
      ++fn[labels[i]];
    }
  }
  std::vector<double> f1(K, 0.0);
  for (std::size_t c = 0; c < K; ++c) {
    const double denom = 2.0 * tp[c] + fp[c] + fn[c];
    f1[c] = denom > 0.0 ? 2.0 * tp[c] / denom : 0.0;
  }
  return f1;
}

EvalReport score_predictions(std::span<const ClassIndex> predicted,
                             std::span<const ClassIndex> labels, int num_classes,
                             bool compute_f1) {
  if (predicted.size() != labels.size()) {
    throw DimensionMismatch("predictions and labels differ in length");
  }
  EvalReport report;
  report.n_examples = labels.size();
  for (std::size_t i = 0; i < labels.size(); ++i) report.n_correct += predicted[i] == labels[i];
  report.accuracy = labels.empty() ? 0.0
                                   : static_cast<double>(report.n_correct) /
                                         static_cast<double>(report.n_examples);
  if (compute_f1) {
    auto f1 = per_class_f1(predicted, labels, num_classes);
    double sum = 0.0;
    for (double x : f1) sum += x;
    report.macro_f1 = sum / static_cast<double>(num_classes);
    report.f1 = num_classes == 2 ? f1[1] : *report.macro_f1;
    report.per_class_f1 = std::move(f1);
  }
  return report;
}

std::string report_to_json(const EvalReport& report) {
  using nlohmann::json;
  json j;
  j["accuracy"] = report.accuracy;
  j["n_examples"] = report.n_examples;
  j["n_correct"] = report.n_correct;
  j["per_class_f1"] = report.per_class_f1 ? json(*report.per_class_f1) : json(nullptr);
  j["macro_f1"] = report.macro_f1 ? json(*report.macro_f1) : json(nullptr);
  j["f1"] = report.f1 ? json(*report.f1) : json(nullptr);
  j["query_count_train"] = report.query_count_train;
  j["query_count_eval"] = report.query_count_eval;
  return j.dump(2) + "\n";
}

}  // namespace promptboost
