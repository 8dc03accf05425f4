#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "promptboost/core.hpp"

namespace promptboost {

// The black-box boundary. A frozen masked LM: identical text must always
// produce an identical distribution. Implementations must be safe to call
// from several threads at once.
class MaskedLm {
 public:
  virtual ~MaskedLm() = default;

  // Counts the call, then delegates to do_query().
  MaskDistribution query(const std::string& text) {
    queries_.fetch_add(1, std::memory_order_relaxed);
    return do_query(text);
  }

  virtual std::size_t vocab_size() = 0;
  virtual std::string vocab_id() = 0;

  std::uint64_t queries_issued() const { return queries_.load(std::memory_order_relaxed); }

 protected:
  virtual MaskDistribution do_query(const std::string& text) = 0;

 private:
  std::atomic<std::uint64_t> queries_{0};
};

struct ServiceInfo {
  std::string vocab_id;
  std::size_t vocab_size = 0;
  std::string mask_literal;
};

ServiceInfo parse_info_response(std::string_view body);

// Decodes a /v1/mask-fill response body. Dense responses are checked against
// the one-sum tolerance and kept as-is; sparse ones (with "indices") are
// expanded with zeros and rescaled to sum to one.
MaskDistribution parse_mask_fill_response(std::string_view body,
                                          const std::string& expected_vocab_id,
                                          std::size_t expected_vocab_size);

std::string make_mask_fill_request(std::string_view text, std::optional<int> top_k);

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{200};
};

struct HttpClientOptions {
  std::optional<int> top_k;
  std::string mask_literal{kDefaultMaskLiteral};
  RetryPolicy retry;
  std::chrono::milliseconds timeout{30000};
  // Replaced in tests to skip real sleeping.
  std::function<void(std::chrono::milliseconds)> sleep;
};

// Client for the JSON mask-fill protocol:
//   POST {endpoint}/v1/mask-fill {"text", "top_k"}
//   GET  {endpoint}/v1/info
// Service info is fetched lazily on first use and cached.
class HttpLmClient final : public MaskedLm {
 public:
  explicit HttpLmClient(std::string endpoint, HttpClientOptions options = {});

  std::size_t vocab_size() override;
  std::string vocab_id() override;
  const ServiceInfo& info();

  const std::string& endpoint() const { return endpoint_; }

 protected:
  MaskDistribution do_query(const std::string& text) override;

 private:
  struct Response {
    int status = 0;
    std::string body;
  };
  Response send_with_retry(const char* method, const std::string& path,
                           const std::string& body);

  std::string endpoint_;
  std::string host_;   // scheme://host:port
  std::string base_;   // path prefix, no trailing slash
  HttpClientOptions options_;
  std::once_flag info_once_;
  std::optional<ServiceInfo> info_;
};

}  // namespace promptboost
