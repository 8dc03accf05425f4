#include "promptboost/core.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "promptboost/error.hpp"

namespace promptboost {

std::string_view to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::train: return "train";
    case SplitTag::validation: return "validation";
    case SplitTag::test: return "test";
  }
  return "train";
}

SplitTag split_from_string(std::string_view name) {
  if (name == "train") return SplitTag::train;
  if (name == "validation") return SplitTag::validation;
  if (name == "test") return SplitTag::test;
  throw FormatError("unknown split tag '" + std::string(name) + "'");
}

Dataset::Dataset(std::vector<LabeledExample> examples, int num_classes,
                 SplitTag split, std::vector<std::string> label_names)
    : examples_(std::move(examples)),
      num_classes_(num_classes),
      split_(split),
      label_names_(std::move(label_names)) {
  if (num_classes_ < 1) {
    throw std::invalid_argument("dataset needs at least one class");
  }
  std::unordered_set<std::string> seen;
  seen.reserve(examples_.size());
  for (const auto& ex : examples_) {
    if (ex.label < 0 || ex.label >= num_classes_) {
      throw std::invalid_argument("example '" + ex.id + "' has label " +
                                  std::to_string(ex.label) + " outside [0, " +
                                  std::to_string(num_classes_) + ")");
    }
    if (ex.text_a.empty()) {
      throw std::invalid_argument("example '" + ex.id + "' has empty text_a");
    }
    if (!seen.insert(ex.id).second) {
      throw std::invalid_argument("duplicate example id '" + ex.id + "'");
    }
  }
}

std::vector<ClassIndex> Dataset::labels() const {
  std::vector<ClassIndex> out;
  out.reserve(examples_.size());
  for (const auto& ex : examples_) out.push_back(ex.label);
  return out;
}

std::vector<std::string> Dataset::ids() const {
  std::vector<std::string> out;
  out.reserve(examples_.size());
  for (const auto& ex : examples_) out.push_back(ex.id);
  return out;
}

Dataset Dataset::with_split(SplitTag split) const {
  Dataset copy = *this;
  copy.split_ = split;
  return copy;
}

std::string_view to_string(Placement placement) {
  return placement == Placement::after_a ? "after_a" : "between_a_b";
}

Placement placement_from_string(std::string_view name) {
  if (name == "after_a") return Placement::after_a;
  if (name == "between_a_b") return Placement::between_a_b;
  throw FormatError("unknown placement '" + std::string(name) + "'");
}

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return 0;
  std::size_t count = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

std::string render(const PromptTemplate& prompt, const LabeledExample& example,
                   std::string_view mask_literal) {
  const bool is_pair = example.text_b.has_value();
  if (prompt.placement == Placement::between_a_b && !is_pair) {
    throw PlacementMismatch("prompt '" + prompt.id +
                            "' expects a sentence pair but example '" +
                            example.id + "' has no text_b");
  }
  if (prompt.placement == Placement::after_a && is_pair) {
    throw PlacementMismatch("prompt '" + prompt.id +
                            "' is single-sentence but example '" + example.id +
                            "' has text_b");
  }
  if (count_occurrences(prompt.prefix, mask_literal) > 0 ||
      count_occurrences(prompt.suffix, mask_literal) > 0) {
    throw MultipleMasks("prompt '" + prompt.id +
                        "' already contains the mask literal in its affixes");
  }

  std::string out;
  out.reserve(example.text_a.size() + prompt.prefix.size() + mask_literal.size() +
              prompt.suffix.size() + (is_pair ? example.text_b->size() : 0));
  out += example.text_a;
  out += prompt.prefix;
  out += mask_literal;
  out += prompt.suffix;
  if (is_pair) out += *example.text_b;

  // The input text itself may carry the literal; that would make the mask
  // position ambiguous for the LM.
  if (count_occurrences(out, mask_literal) != 1) {
    throw MultipleMasks("rendering example '" + example.id + "' with prompt '" +
                        prompt.id + "' does not yield exactly one mask");
  }
  return out;
}

void validate_distribution(std::span<const float> probs, double sum_tolerance) {
  double sum = 0.0;
  for (std::size_t v = 0; v < probs.size(); ++v) {
    const float p = probs[v];
    if (!std::isfinite(p)) {
      throw ProtocolError("non-finite probability at index " + std::to_string(v));
    }
    if (p < 0.0f) {
      throw ProtocolError("negative probability at index " + std::to_string(v));
    }
    sum += p;
  }
  // slack for float32 rounding at the boundary
  if (std::abs(sum - 1.0) > sum_tolerance + 1e-7) {
    throw ProtocolError("probabilities sum to " + std::to_string(sum) +
                        ", expected 1");
  }
}

SampleWeights::SampleWeights(std::vector<double> weights) : weights_(std::move(weights)) {
  double sum = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("sample weights must be finite and non-negative");
    }
    sum += w;
  }
  if (!weights_.empty() && std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("sample weights must sum to 1");
  }
}

SampleWeights SampleWeights::uniform(std::size_t n) {
  return SampleWeights(std::vector<double>(n, n ? 1.0 / static_cast<double>(n) : 0.0));
}

}  // namespace promptboost
