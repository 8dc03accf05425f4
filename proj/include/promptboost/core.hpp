#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace promptboost {

using ClassIndex = int;

inline constexpr std::string_view kDefaultMaskLiteral = "[MASK]";

enum class SplitTag { train, validation, test };

std::string_view to_string(SplitTag tag);
SplitTag split_from_string(std::string_view name);

struct LabeledExample {
  std::string id;
  std::string text_a;
  std::optional<std::string> text_b;
  ClassIndex label = 0;

  bool operator==(const LabeledExample&) const = default;
};

// An ordered, labeled collection. Construction validates the invariants
// (labels in range, ids unique, text_a non-empty) and the object is
// immutable afterwards.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<LabeledExample> examples, int num_classes, SplitTag split,
          std::vector<std::string> label_names = {});

  const std::vector<LabeledExample>& examples() const { return examples_; }
  std::size_t size() const { return examples_.size(); }
  bool empty() const { return examples_.empty(); }
  const LabeledExample& operator[](std::size_t i) const { return examples_[i]; }

  int num_classes() const { return num_classes_; }
  SplitTag split() const { return split_; }
  const std::vector<std::string>& label_names() const { return label_names_; }

  std::vector<ClassIndex> labels() const;
  std::vector<std::string> ids() const;

  // Same examples, relabelled as another split.
  Dataset with_split(SplitTag split) const;

  bool operator==(const Dataset&) const = default;

 private:
  std::vector<LabeledExample> examples_;
  int num_classes_ = 0;
  SplitTag split_ = SplitTag::train;
  std::vector<std::string> label_names_;
};

enum class Placement { after_a, between_a_b };

std::string_view to_string(Placement placement);
Placement placement_from_string(std::string_view name);

struct PromptTemplate {
  std::string id;
  std::string prefix;
  std::string suffix;
  Placement placement = Placement::after_a;

  bool operator==(const PromptTemplate&) const = default;
};

// Renders `example` through `prompt`. Affixes are emitted verbatim; nothing
// is inserted between the pieces.
//   after_a:     text_a + prefix + mask + suffix
//   between_a_b: text_a + prefix + mask + suffix + text_b
std::string render(const PromptTemplate& prompt, const LabeledExample& example,
                   std::string_view mask_literal = kDefaultMaskLiteral);

std::size_t count_occurrences(std::string_view haystack, std::string_view needle);

// Probability vector over the vocabulary at the mask position.
struct MaskDistribution {
  std::vector<float> probs;
  std::string vocab_id;
};

inline constexpr double kDistributionSumTolerance = 1e-4;

// Throws ProtocolError when an entry is negative or non-finite, or when the
// entries do not sum to one within `sum_tolerance`.
void validate_distribution(std::span<const float> probs,
                           double sum_tolerance = kDistributionSumTolerance);

// Normalized, non-negative per-example weights.
class SampleWeights {
 public:
  SampleWeights() = default;
  explicit SampleWeights(std::vector<double> weights);

  static SampleWeights uniform(std::size_t n);

  std::span<const double> values() const { return weights_; }
  std::size_t size() const { return weights_.size(); }
  double operator[](std::size_t i) const { return weights_[i]; }

 private:
  std::vector<double> weights_;
};

}  // namespace promptboost
