#pragma once

#include <memory>
#include <string>

#include "promptboost/lm_client.hpp"

namespace promptboost {

// Serves a MaskedLm over the JSON mask-fill protocol that HttpLmClient
// speaks. Text without exactly one mask gets a 400; a non-null top_k gets a
// sparse reply with the k most probable tokens.
class MaskFillServer {
 public:
  explicit MaskFillServer(MaskedLm& lm, std::string mask_literal = std::string(kDefaultMaskLiteral));
  ~MaskFillServer();

  MaskFillServer(const MaskFillServer&) = delete;
  MaskFillServer& operator=(const MaskFillServer&) = delete;

  // port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);

  // Blocks until stop().
  void listen();

  // listen() on a background thread; returns once the server accepts.
  void start();
  void stop();

  std::string endpoint() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace promptboost
