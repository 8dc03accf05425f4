#include "promptboost/mask_fill_server.hpp"

#include <algorithm>
#include <numeric>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "promptboost/error.hpp"

namespace promptboost {

using nlohmann::json;

struct MaskFillServer::Impl {
  MaskedLm& lm;
  std::string mask_literal;
  httplib::Server server;
  std::string host;
  int port = 0;
  std::thread thread;
};

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

MaskFillServer::MaskFillServer(MaskedLm& lm, std::string mask_literal)
    : impl_(new Impl{lm, std::move(mask_literal), {}, {}, 0, {}}) {
  Impl& s = *impl_;
  s.server.Get("/v1/info", [&s](const httplib::Request&, httplib::Response& res) {
    reply(res, 200,
          {{"vocab_id", s.lm.vocab_id()},
           {"vocab_size", s.lm.vocab_size()},
           {"mask_literal", s.mask_literal}});
  });
  s.server.Post("/v1/mask-fill", [&s](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      reply(res, 400, {{"error", "body is not JSON"}});
      return;
    }
    if (!body.is_object() || !body.contains("text") || !body["text"].is_string()) {
      reply(res, 400, {{"error", "missing string field 'text'"}});
      return;
    }
    const auto text = body["text"].get<std::string>();
    if (count_occurrences(text, s.mask_literal) != 1) {
      reply(res, 400, {{"error", "text must contain exactly one " + s.mask_literal}});
      return;
    }
    std::optional<std::size_t> top_k;
    if (body.contains("top_k") && !body["top_k"].is_null()) {
      if (!body["top_k"].is_number_integer() || body["top_k"].get<long long>() < 1) {
        reply(res, 400, {{"error", "top_k must be a positive integer or null"}});
        return;
      }
      top_k = body["top_k"].get<std::size_t>();
    }

    MaskDistribution dist;
    try {
      dist = s.lm.query(text);
    } catch (const std::exception& e) {
      reply(res, 503, {{"error", e.what()}});
      return;
    }
    json out{{"vocab_id", dist.vocab_id}, {"vocab_size", dist.probs.size()}};
    if (!top_k || *top_k >= dist.probs.size()) {
      out["probs"] = dist.probs;
    } else {
      std::vector<std::size_t> idx(dist.probs.size());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(*top_k), idx.end(),
                        [&](std::size_t a, std::size_t b) {
                          return dist.probs[a] > dist.probs[b] ||
                                 (dist.probs[a] == dist.probs[b] && a < b);
                        });
      idx.resize(*top_k);
      std::vector<float> p;
      for (auto i : idx) p.push_back(dist.probs[i]);
      out["indices"] = idx;
      out["probs"] = p;
    }
    reply(res, 200, out);
  });
}

MaskFillServer::~MaskFillServer() { stop(); }

int MaskFillServer::bind(const std::string& host, int port) {
  impl_->host = host;
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port(host);
  } else if (impl_->server.bind_to_port(host, port)) {
    impl_->port = port;
  } else {
    impl_->port = -1;
  }
  if (impl_->port < 0) {
    throw TransportError("cannot bind " + host + ":" + std::to_string(port));
  }
  return impl_->port;
}

void MaskFillServer::listen() { impl_->server.listen_after_bind(); }

void MaskFillServer::start() {
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void MaskFillServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string MaskFillServer::endpoint() const {
  return "http://" + impl_->host + ":" + std::to_string(impl_->port);
}

}  // namespace promptboost
