// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

#include "aagn/image_io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace aagn {

namespace {

std::uint8_t to_byte(float v) {
  const float s = std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f);
  return static_cast<std::uint8_t>(s);
}

Portrait from_mat(const cv::Mat& bgr) {
  if (bgr.empty()) throw FormatError("could not decode image");
  cv::Mat img = bgr;
  if (img.channels() == 1) cv::cvtColor(img, img, cv::COLOR_GRAY2BGR);
  if (img.channels() == 4) cv::cvtColor(img, img, cv::COLOR_BGRA2BGR);
  if (img.depth() != CV_8U) throw FormatError("only 8-bit images are supported");
  Portrait out(Shape{1, 3, img.rows, img.cols});
  for (int y = 0; y < img.rows; ++y) {
    const auto* row = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.cols; ++x) {
      for (int c = 0; c < 3; ++c) out.at(0, c, y, x) = static_cast<float>(row[x][2 - c]) / 255.0f;
    }
  }
  return out;
}

std::vector<std::uint8_t> encode(const cv::Mat& m) {
  std::vector<std::uint8_t> buf;
  if (!cv::imencode(".png", m, buf)) throw FormatError("PNG encoding failed");
  return buf;
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw FormatError("cannot write " + path.string());
  const std::size_t written = std::fwrite(bytes.data(), 1, bytes.size(), f);
  std::fclose(f);
  if (written != bytes.size()) throw FormatError("short write to " + path.string());
}

}  // namespace

void check_portrait(const Shape& s, const std::string& what) {
  if (s.c != 3) throw ShapeError(what + ": expected 3-channel portrait, got " + s.str());
}

void check_flow(const Shape& s, const std::string& what) {
  if (s.c != 2) throw ShapeError(what + ": expected 2-channel flow, got " + s.str());
}

Portrait decode_image(const std::vector<std::uint8_t>& bytes) {
  if (bytes.empty()) throw FormatError("empty image payload");
  return from_mat(cv::imdecode(bytes, cv::IMREAD_UNCHANGED));
}

Portrait load_image(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw FormatError("cannot read image " + path.string());
  return from_mat(m);
}

std::vector<std::uint8_t> encode_png(const Tensor<float>& img, int batch_index) {
  const Shape s = img.shape();
  if (s.c == 1) return encode_plane_png(img, batch_index, 0);
  check_portrait(s, "encode_png");
  cv::Mat m(s.h, s.w, CV_8UC3);
  for (int y = 0; y < s.h; ++y) {
    auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < s.w; ++x) {
      for (int c = 0; c < 3; ++c) row[x][2 - c] = to_byte(img.at(batch_index, c, y, x));
    }
  }
  return encode(m);
}

void save_png(const std::filesystem::path& path, const Tensor<float>& img, int batch_index) {
  write_bytes(path, encode_png(img, batch_index));
}

std::vector<std::uint8_t> encode_plane_png(const Tensor<float>& t, int n, int c, float gain,
                                           float offset) {
  const Shape s = t.shape();
  cv::Mat m(s.h, s.w, CV_8UC1);
  for (int y = 0; y < s.h; ++y) {
    auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < s.w; ++x) row[x] = to_byte(offset + gain * t.at(n, c, y, x));
  }
  return encode(m);
}

void save_plane_png(const std::filesystem::path& path, const Tensor<float>& t, int n, int c,
                    float gain, float offset) {
  write_bytes(path, encode_plane_png(t, n, c, gain, offset));
}

Portrait quantize8(const Portrait& img) {
  Portrait out(img.shape());
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = static_cast<float>(to_byte(img[i])) / 255.0f;
  return out;
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  std::string clean;
  clean.reserve(text.size());
  for (char ch : text) {
    if (ch != '\n' && ch != '\r' && ch != ' ') clean.push_back(ch);
  }
  if (clean.size() % 4 != 0) throw FormatError("base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out(3 * clean.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(clean.data()),
                                static_cast<int>(clean.size()));
  if (n < 0) throw FormatError("invalid base64 payload");
  std::size_t len = static_cast<std::size_t>(n);
  // EVP_DecodeBlock keeps the zero bytes produced by '=' padding.
  if (!clean.empty() && clean.back() == '=') --len;
  if (clean.size() > 1 && clean[clean.size() - 2] == '=') --len;
  out.resize(len);
  return out;
}

}  // namespace aagn
