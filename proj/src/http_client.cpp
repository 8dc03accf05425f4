#include <thread>

#include <httplib.h>

#include "promptboost/error.hpp"
#include "promptboost/lm_client.hpp"

namespace promptboost {

namespace {

// Splits "http://host:port/base" into ("http://host:port", "/base").
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  const auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) {
    throw std::invalid_argument("endpoint '" + endpoint + "' lacks a scheme");
  }
  const std::string scheme = endpoint.substr(0, scheme_end);
  if (scheme != "http") {
    throw std::invalid_argument("endpoint '" + endpoint + "': only http:// is supported");
  }
  const auto path_start = endpoint.find('/', scheme_end + 3);
  std::string host = endpoint.substr(0, path_start);
  std::string base = path_start == std::string::npos ? "" : endpoint.substr(path_start);
  while (!base.empty() && base.back() == '/') base.pop_back();
  return {host, base};
}

}  // namespace

HttpLmClient::HttpLmClient(std::string endpoint, HttpClientOptions options)
    : endpoint_(std::move(endpoint)), options_(std::move(options)) {
  std::tie(host_, base_) = split_endpoint(endpoint_);
  if (!options_.sleep) {
    options_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
  if (options_.retry.max_attempts < 1) options_.retry.max_attempts = 1;
}

HttpLmClient::Response HttpLmClient::send_with_retry(const char* method,
                                                     const std::string& path,
                                                     const std::string& body) {
  const std::string url = base_ + path;
  std::string last_error;
  auto delay = options_.retry.base_delay;
  for (int attempt = 1; attempt <= options_.retry.max_attempts; ++attempt) {
    httplib::Client cli(host_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
    cli.set_connection_timeout(secs.count() > 0 ? secs.count() : 1, 0);
    cli.set_read_timeout(secs.count() > 0 ? secs.count() : 1, 0);

    httplib::Result res = std::string_view(method) == "GET"
                              ? cli.Get(url)
                              : cli.Post(url, body, "application/json");
    if (res) {
      if (res->status == 200) return {res->status, res->body};
      if (res->status >= 400 && res->status < 500) {
        throw ProtocolError(endpoint_ + path + " rejected the request (HTTP " +
                            std::to_string(res->status) + "): " + res->body);
      }
      last_error = "HTTP " + std::to_string(res->status);
    } else {
      last_error = httplib::to_string(res.error());
    }
    if (attempt < options_.retry.max_attempts) {
      options_.sleep(delay);
      delay *= 2;
    }
  }
  throw TransportError(endpoint_ + path + " unreachable after " +
                       std::to_string(options_.retry.max_attempts) +
                       " attempts: " + last_error);
}

const ServiceInfo& HttpLmClient::info() {
  std::call_once(info_once_, [this] {
    info_ = parse_info_response(send_with_retry("GET", "/v1/info", {}).body);
  });
  return *info_;
}

std::size_t HttpLmClient::vocab_size() { return info().vocab_size; }

std::string HttpLmClient::vocab_id() { return info().vocab_id; }

MaskDistribution HttpLmClient::do_query(const std::string& text) {
  if (count_occurrences(text, options_.mask_literal) != 1) {
    throw MultipleMasks("query text must contain exactly one '" +
                        options_.mask_literal + "'");
  }
  const auto& service = info();
  const auto response = send_with_retry(
      "POST", "/v1/mask-fill", make_mask_fill_request(text, options_.top_k));
  return parse_mask_fill_response(response.body, service.vocab_id, service.vocab_size);
}

}  // namespace promptboost
