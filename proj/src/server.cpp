// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

#include "aagn/server.hpp"

#include <httplib.h>

#include <nlohmann/json.hpp>
#include <thread>

namespace aagn::service {

namespace {

using nlohmann::json;

// Malformed or unacceptable request.
class BadRequest : public Error {
 public:
  using Error::Error;
};

const json& field(const json& body, const char* name) {
  if (!body.contains(name)) throw BadRequest(std::string("missing field '") + name + "'");
  return body.at(name);
}

Portrait image_field(const json& body) {
  const auto& v = field(body, "image");
  if (!v.is_string()) throw BadRequest("field 'image' must be a base64 PNG string");
  return decode_image(base64_decode(v.get<std::string>()));
}

skeleton::KeypointSet keypoints_field(const json& body) {
  const auto& v = field(body, "keypoints");
  if (!v.is_object()) throw BadRequest("field 'keypoints' must be a keypoint object");
  return skeleton::KeypointSet::from_json(v);
}

skeleton::Part part_field(const json& body, const char* name) {
  const auto& v = field(body, name);
  if (!v.is_string()) throw BadRequest(std::string("field '") + name + "' must be a part name");
  return skeleton::parse_part(v.get<std::string>());
}

json reshape_endpoint(const Pipeline& p, const json& body) {
  const Portrait image = image_field(body);
  const auto kps = keypoints_field(body);
  const auto& mu = field(body, "mu");
  if (!mu.is_number()) throw BadRequest("field 'mu' must be a number");
  skeleton::PartSelection sel = skeleton::PartSelection::all();
  if (body.contains("parts")) {
    const auto& parts = body.at("parts");
    if (!parts.is_array()) throw BadRequest("field 'parts' must be an array of part names");
    sel = skeleton::PartSelection::none();
    for (const auto& item : parts) {
      if (!item.is_string()) throw BadRequest("field 'parts' must be an array of part names");
      sel.set(skeleton::parse_part(item.get<std::string>()), true);
    }
  }
  const auto res = p.reshape(image, kps, mu.get<double>(), sel);
  return {{"image", base64_encode(encode_png(res.image))},
          {"flow_stats", {{"max", res.stats.max}, {"mean", res.stats.mean}}},
          {"wc", res.wc}};
}

json affinity_endpoint(const Pipeline& p, const json& body) {
  const Portrait image = image_field(body);
  const auto kps = keypoints_field(body);
  const auto pi = part_field(body, "part_i");
  const auto pj = part_field(body, "part_j");
  const auto& q = field(body, "q");
  if (!q.is_array() || q.size() != 2 || !q[0].is_number_integer() || !q[1].is_number_integer()) {
    throw BadRequest("field 'q' must be [row, col] integers");
  }
  int top_k = 20;
  if (body.contains("top_k")) {
    if (!body.at("top_k").is_number_integer()) throw BadRequest("field 'top_k' must be an integer");
    top_k = body.at("top_k").get<int>();
  }
  const auto res = p.affinity_probe(image, kps, pi, pj, q[0].get<int>(), q[1].get<int>(), top_k);
  const auto& a = res.affinity;
  Tensor<float> heat(Shape{1, 1, a.h, a.w});
  const auto [lo, hi] = std::minmax_element(a.heatmap.begin(), a.heatmap.end());
  const double span = *hi - *lo;
  for (std::size_t i = 0; i < a.heatmap.size(); ++i) {
    heat[i] = span > 0.0 ? static_cast<float>((a.heatmap[i] - *lo) / span) : 0.0f;
  }
  json points = json::array();
  for (const auto& pt : res.pixel_points) points.push_back({pt.row, pt.col, pt.value});
  json feature_points = json::array();
  for (const auto& pt : a.top) feature_points.push_back({pt.row, pt.col, pt.value});
  return {{"heatmap", base64_encode(encode_plane_png(heat, 0, 0))},
          {"heatmap_size", {a.h, a.w}},
          {"stride", res.stride},
          {"points", points},
          {"feature_points", feature_points}};
}

ApiResponse error_response(int status, const std::string& msg) {
  return {status, json{{"error", msg}}.dump()};
}

}  // namespace

ApiResponse handle_request(const Pipeline& pipeline, const std::string& method,
                           const std::string& path, const std::string& body) {
  const bool is_post = method == "POST";
  const bool is_get = method == "GET";
  if (path == "/v1/health") {
    if (!is_get) return error_response(405, "use GET for " + path);
    return {200, json{{"status", "ok"}, {"checkpoint_hash", hash_hex(pipeline.checkpoint_hash())}}
                     .dump()};
  }
  if (path != "/v1/reshape" && path != "/v1/affinity") {
    return error_response(404, "no endpoint " + path);
  }
  if (!is_post) return error_response(405, "use POST for " + path);
  try {
    json req;
    try {
      req = json::parse(body);
    } catch (const json::parse_error& e) {
      throw BadRequest(std::string("request body is not JSON: ") + e.what());
    }
    if (!req.is_object()) throw BadRequest("request body must be a JSON object");
    const json out =
        path == "/v1/reshape" ? reshape_endpoint(pipeline, req) : affinity_endpoint(pipeline, req);
    return {200, out.dump()};
  } catch (const NumericError& e) {
    return error_response(500, e.what());
  } catch (const Error& e) {
    return error_response(400, e.what());
  } catch (const json::exception& e) {
    return error_response(400, e.what());
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

struct Server::Impl {
  explicit Impl(const Pipeline& p) : pipeline(p) {}
  const Pipeline& pipeline;
  httplib::Server http;
  std::thread worker;
};

Server::Server(const Pipeline& pipeline) : impl_(std::make_unique<Impl>(pipeline)) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    const auto out = handle_request(impl_->pipeline, req.method, req.path, req.body);
    res.status = out.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(out.body, "application/json");
  };
  impl_->http.Get(".*", handler);
  impl_->http.Post(".*", handler);
  impl_->http.Put(".*", handler);
  impl_->http.Delete(".*", handler);
  impl_->http.Options(".*", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  impl_->http.set_payload_max_length(64u << 20);
}

Server::~Server() { stop(); }

int Server::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->http.bind_to_any_port(host);
    if (p < 0) throw ConfigError("cannot bind " + host);
    return p;
  }
  if (!impl_->http.bind_to_port(host, port)) {
    throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void Server::run() { impl_->http.listen_after_bind(); }

void Server::start() {
  impl_->worker = std::thread([this] { impl_->http.listen_after_bind(); });
  impl_->http.wait_until_ready();
}

void Server::stop() {
  if (!impl_) return;
  impl_->http.stop();
  if (impl_->worker.joinable()) impl_->worker.join();
}

}  // namespace aagn::service
