#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "weedid/core/taxonomy.hpp"
#include "weedid/io/config.hpp"
#include "weedid/nnkit/model.hpp"
#include "weedid/serve/rate_limiter.hpp"
#include "weedid/trust/conformal.hpp"
#include "weedid/trust/ood.hpp"

namespace weedid::serve {

struct ServeConfig {
  std::string host = "0.0.0.0";
  int port = 8080;
  std::string model_path;    // checkpoint file
  std::string classes_path;  // class set CSV; labels the head outputs
  std::string calib_path;    // directory with ood.json + conformal.json, or a bundle file
  int rate_limit = 30;
  double rate_window_seconds = 60.0;
  std::size_t max_body_bytes = 2 * 1024 * 1024;
  bool force_top1_in_set = true;
  int default_top_k = 5;
  std::string api_key_header = "X-API-Key";  // overrides the source address as client key
  int threads = 8;
};

/// Reads `serve.*` keys (port, host, model_path, classes_path, calib_path,
/// rate_limit, max_body_bytes, force_top1_in_set, top_k, threads) with the
/// environment overrides PORT, MODEL_PATH, CLASSES_PATH, CALIB_PATH and
/// RATE_LIMIT. RATE_LIMIT is "N" (per 60 s) or "N/SECONDS". Throws
/// Error(ConfigError) on invalid values.
ServeConfig serve_config_from(io::KeyValueConfig config);

struct Calibration {
  trust::OodCalibration ood;
  trust::ConformalCalibration conformal;
  std::string fingerprint;  // digest over both artifacts
  std::string ood_fingerprint;
  std::string conformal_fingerprint;
};

Calibration make_calibration(const nlohmann::json& ood_artifact, const nlohmann::json& conformal_artifact);
/// Bundle file layout: {"kind":"trust_bundle","ood":{...},"conformal":{...}}.
nlohmann::json calibration_bundle(const nlohmann::json& ood_artifact, const nlohmann::json& conformal_artifact);
/// Accepts a directory holding ood.json and conformal.json or a bundle file.
Calibration load_calibration(const std::string& path);

struct HttpReply {
  int status = 200;
  std::string body;  // JSON
  std::map<std::string, std::string> headers;
};

/// Transport-independent prediction service. Model and calibration are held
/// in one immutable snapshot that is swapped atomically, so every request
/// sees exactly one model and one calibration.
class PredictionService {
 public:
  explicit PredictionService(ServeConfig config);

  /// Throws Error(ClassCountMismatch) when the head width differs from the
  /// class count.
  void load_model(nn::ModelCheckpoint checkpoint, ClassSet classes);
  void set_calibration(Calibration calibration);
  bool model_loaded() const;

  /// Body is a JSON object with exactly one of
  ///   "image": base64 PNG, or base64 raw 8-bit pixels when
  ///            "image_format" is "raw" (row-major, channels last);
  ///   "features": numbers, logits by default or an encoder embedding when
  ///               "features_kind" is "embedding";
  /// plus optional "top_k" (default from the config). `now` is in seconds and
  /// only feeds the rate limiter.
  HttpReply predict(std::string_view body, const std::string& client, double now) const;
  HttpReply health() const;
  HttpReply model_info() const;

  const ServeConfig& config() const { return config_; }

 private:
  struct Snapshot;
  std::shared_ptr<const Snapshot> snapshot() const;

  ServeConfig config_;
  mutable SlidingWindowLimiter limiter_;
  mutable std::mutex snapshot_mutex_;
  std::shared_ptr<const Snapshot> snapshot_;
};

/// HTTP/1.1 front end for a PredictionService: POST /v1/predict,
/// GET /v1/health and GET /v1/model.
class HttpFrontend {
 public:
  explicit HttpFrontend(PredictionService& service);
  ~HttpFrontend();
  HttpFrontend(const HttpFrontend&) = delete;
  HttpFrontend& operator=(const HttpFrontend&) = delete;

  /// Binds host:port (port 0 picks a free one) and returns the bound port.
  /// Throws Error(IoError) when binding fails.
  int bind(const std::string& host, int port);
  /// Serves until stop(); blocks.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace weedid::serve
