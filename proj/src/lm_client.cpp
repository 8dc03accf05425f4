#include "promptboost/lm_client.hpp"

#include <cmath>
#include <vector>

#include <json.hpp>

#include "promptboost/error.hpp"

namespace promptboost {

using nlohmann::json;

namespace {

json parse_body(std::string_view body) {
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("response is not valid JSON: ") + e.what());
  }
}

template <typename T>
T required(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw ProtocolError(std::string("response lacks field '") + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("field '") + key + "' has wrong type: " + e.what());
  }
}

}  // namespace

ServiceInfo parse_info_response(std::string_view body) {
  const json j = parse_body(body);
  ServiceInfo info;
  info.vocab_id = required<std::string>(j, "vocab_id");
  info.vocab_size = required<std::size_t>(j, "vocab_size");
  info.mask_literal = j.contains("mask_literal") && j["mask_literal"].is_string()
                          ? j["mask_literal"].get<std::string>()
                          : std::string(kDefaultMaskLiteral);
  if (info.vocab_size == 0) throw ProtocolError("service reports vocab_size 0");
  return info;
}

MaskDistribution parse_mask_fill_response(std::string_view body,
                                          const std::string& expected_vocab_id,
                                          std::size_t expected_vocab_size) {
  const json j = parse_body(body);
  const auto vocab_id = required<std::string>(j, "vocab_id");
  if (vocab_id != expected_vocab_id) {
    throw VocabMismatch("response vocab_id '" + vocab_id + "' differs from '" +
                        expected_vocab_id + "'");
  }
  const auto vocab_size = required<std::size_t>(j, "vocab_size");
  if (vocab_size != expected_vocab_size) {
    throw VocabMismatch("response vocab_size " + std::to_string(vocab_size) +
                        " differs from " + std::to_string(expected_vocab_size));
  }
  const auto probs = required<std::vector<double>>(j, "probs");

  MaskDistribution dist;
  dist.vocab_id = vocab_id;

  if (!j.contains("indices") || j["indices"].is_null()) {
    if (probs.size() != vocab_size) {
      throw ProtocolError("dense response has " + std::to_string(probs.size()) +
                          " probabilities for vocab_size " + std::to_string(vocab_size));
    }
    dist.probs.assign(probs.begin(), probs.end());
    validate_distribution(dist.probs);
    return dist;
  }

  const auto indices = required<std::vector<std::int64_t>>(j, "indices");
  if (indices.size() != probs.size()) {
    throw ProtocolError("sparse response: indices and probs differ in length");
  }
  if (indices.empty()) throw ProtocolError("sparse response carries no entries");
  double total = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0) {
      throw ProtocolError("sparse response has a negative or non-finite probability");
    }
    total += p;
  }
  if (!(total > 0.0)) throw ProtocolError("sparse response has zero total mass");

  std::vector<double> dense(vocab_size, 0.0);
  std::vector<bool> seen(vocab_size, false);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto idx = indices[k];
    if (idx < 0 || static_cast<std::size_t>(idx) >= vocab_size) {
      throw ProtocolError("sparse index " + std::to_string(idx) + " out of range");
    }
    if (seen[idx]) throw ProtocolError("sparse index " + std::to_string(idx) + " repeated");
    seen[idx] = true;
    dense[idx] = probs[k] / total;
  }
  dist.probs.assign(dense.begin(), dense.end());
  return dist;
}

std::string make_mask_fill_request(std::string_view text, std::optional<int> top_k) {
  json j;
  j["text"] = std::string(text);
  j["top_k"] = top_k ? json(*top_k) : json(nullptr);
  return j.dump();
}

}  // namespace promptboost
