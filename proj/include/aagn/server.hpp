// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

// Local HTTP API:
//   POST /v1/reshape  {image, keypoints, mu, parts} -> {image, flow_stats, wc}
//   POST /v1/affinity {image, keypoints, part_i, part_j, q, top_k}
//                     -> {heatmap, points, stride}
//   GET  /v1/health   -> {status, checkpoint_hash}
// Images travel as base64 PNG. Failures answer 4xx with {error}.

#pragma once

#include <functional>
#include <memory>
#include <string>

#include "aagn/pipeline.hpp"

namespace aagn::service {

struct ApiResponse {
  int status = 200;
  std::string body;  // JSON
};

/// Transport-independent request handler.
ApiResponse handle_request(const Pipeline& pipeline, const std::string& method,
                           const std::string& path, const std::string& body);

/// Threaded HTTP server bound to host:port. Port 0 picks a free port.
class Server {
 public:
  explicit Server(const Pipeline& pipeline);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and returns the port; serving starts with run() or start().
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void run();
  /// Serves on a background thread.
  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace aagn::service
