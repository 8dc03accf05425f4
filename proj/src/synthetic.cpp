#include "promptboost/synthetic.hpp"

#include <cmath>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace promptboost {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Uniform in [0, 1) with 53 random bits.
double unit_double(std::uint64_t& state) {
  return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

SyntheticOracle::SyntheticOracle(SyntheticOracleConfig config) : config_(config) {
  if (config_.num_classes < 1) throw std::invalid_argument("num_classes must be >= 1");
  if (config_.vocab_size < static_cast<std::size_t>(config_.num_classes)) {
    throw std::invalid_argument("vocab_size must be >= num_classes");
  }
  if (!(config_.class_signal >= 0.0 && config_.class_signal <= 1.0)) {
    throw std::invalid_argument("class_signal must lie in [0, 1]");
  }
  vocab_id_ = "synthetic-v" + std::to_string(config_.vocab_size) + "-c" +
              std::to_string(config_.num_classes) + "-s" + std::to_string(config_.seed);
}

void SyntheticOracle::bind(const Dataset& dataset) {
  std::unique_lock lock(mutex_);
  for (const auto& ex : dataset.examples()) labels_[ex.text_a] = ex.label;
}

std::optional<ClassIndex> SyntheticOracle::label_for(const std::string& text) const {
  std::shared_lock lock(mutex_);
  // Longest bound text_a that prefixes the query.
  for (std::size_t len = text.size(); len > 0; --len) {
    auto it = labels_.find(text.substr(0, len));
    if (it != labels_.end()) return it->second;
  }
  return std::nullopt;
}

MaskDistribution SyntheticOracle::do_query(const std::string& text) {
  const std::size_t vocab = config_.vocab_size;
  const auto label = label_for(text);
  const double signal = label && *label < config_.num_classes ? config_.class_signal : 0.0;

  std::uint64_t state = fnv1a64(text) ^ (config_.seed * 0xD1B54A32D192ED03ULL);
  std::vector<double> noise(vocab);
  double noise_total = 0.0;
  for (auto& x : noise) {
    x = -std::log1p(-unit_double(state));
    noise_total += x;
  }

  std::vector<double> probs(vocab, 0.0);
  const double noise_mass = 1.0 - signal;
  if (noise_mass > 0.0) {
    for (std::size_t v = 0; v < vocab; ++v) probs[v] = noise_mass * noise[v] / noise_total;
  }
  if (signal > 0.0) {
    const std::size_t block = block_size();
    const std::size_t first = static_cast<std::size_t>(*label) * block;
    for (std::size_t v = first; v < first + block; ++v) {
      probs[v] += signal / static_cast<double>(block);
    }
  }

  MaskDistribution out;
  out.vocab_id = vocab_id_;
  out.probs.assign(probs.begin(), probs.end());
  return out;
}

Dataset make_synthetic_corpus(int num_classes, std::size_t per_class, std::uint64_t seed,
                              SplitTag split, bool sentence_pairs,
                              const std::string& id_prefix) {
  std::vector<LabeledExample> examples;
  examples.reserve(per_class * static_cast<std::size_t>(num_classes));
  std::size_t serial = 0;
  for (std::size_t i = 0; i < per_class; ++i) {
    for (int c = 0; c < num_classes; ++c, ++serial) {
      LabeledExample ex;
      ex.id = id_prefix + "-" + std::to_string(seed) + "-" + std::to_string(serial);
      ex.text_a = "Sample " + std::to_string(serial) + " from " + id_prefix + " run " +
                  std::to_string(seed) + ".";
      if (sentence_pairs) ex.text_b = "Companion text " + std::to_string(serial) + ".";
      ex.label = c;
      examples.push_back(std::move(ex));
    }
  }
  return Dataset(std::move(examples), num_classes, split);
}

}  // namespace promptboost
