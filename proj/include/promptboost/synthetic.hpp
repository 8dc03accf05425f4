#pragma once

#include <cstdint>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>

#include "promptboost/core.hpp"
#include "promptboost/lm_client.hpp"

namespace promptboost {

struct SyntheticOracleConfig {
  std::uint64_t seed = 0;
  double class_signal = 0.5;  // in [0, 1]
  int num_classes = 2;
  std::size_t vocab_size = 64;
};

// Deterministic stand-in for a masked LM.
//
// The vocabulary is cut into num_classes blocks of vocab_size / num_classes
// tokens (any remainder tokens belong to no class). For text that starts
// with the text_a of a bound example of class c, the returned distribution
// puts `class_signal` spread evenly over block c and spreads the remaining
// mass over the whole vocabulary with exponential weights drawn from a
// generator seeded by (seed, hash of the full text). Text from no bound
// example gets the noise part only. Since the rendered text includes the
// prompt, each prompt sees independent noise.
class SyntheticOracle final : public MaskedLm {
 public:
  explicit SyntheticOracle(SyntheticOracleConfig config);

  // Registers the labels of `dataset` so queries can recover them from text.
  void bind(const Dataset& dataset);

  std::size_t vocab_size() override { return config_.vocab_size; }
  std::string vocab_id() override { return vocab_id_; }

  std::size_t block_size() const { return config_.vocab_size / config_.num_classes; }
  const SyntheticOracleConfig& config() const { return config_; }

  std::optional<ClassIndex> label_for(const std::string& text) const;

 protected:
  MaskDistribution do_query(const std::string& text) override;

 private:
  SyntheticOracleConfig config_;
  std::string vocab_id_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, ClassIndex> labels_;
};

std::uint64_t fnv1a64(std::string_view text);

// A balanced synthetic corpus: `per_class` examples of each class with
// unique ids and texts. Texts never contain the default mask literal.
Dataset make_synthetic_corpus(int num_classes, std::size_t per_class, std::uint64_t seed,
                              SplitTag split = SplitTag::train, bool sentence_pairs = false,
                              const std::string& id_prefix = "syn");

}  // namespace promptboost
