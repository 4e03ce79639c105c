#include "weedid/serve/service.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "weedid/core/image.hpp"
#include "weedid/error.hpp"
#include "weedid/io/base64.hpp"
#include "weedid/nnkit/ops.hpp"
#include "weedid/nnkit/vit.hpp"
#include "weedid/trust/artifact.hpp"

namespace weedid::serve {

using nlohmann::json;

struct PredictionService::Snapshot {
  std::shared_ptr<const nn::ModelCheckpoint> model;
  std::shared_ptr<const ClassSet> classes;
  std::string model_version;
  std::shared_ptr<const Calibration> calibration;
};

namespace {

HttpReply reply(int status, const json& body) { return {status, body.dump(), {}}; }

HttpReply error_reply(int status, const std::string& code, const std::string& message) {
  return reply(status, {{"error", code}, {"message", message}});
}

json taxon_json(const ClassSet& classes, int id, double p) {
  const auto& t = classes.taxa().at(static_cast<std::size_t>(id));
  return {{"class_id", id}, {"scientific_name", t.scientific_name}, {"common_name", t.common_name}, {"probability", p}};
}

Raster decode_raw(const std::string& bytes, const nn::ArchConfig& arch) {
  Raster r(arch.image_size, arch.image_size, arch.channels);
  if (bytes.size() != r.pixels.size())
    throw Error(ErrorCode::ShapeMismatch, "raw image has " + std::to_string(bytes.size()) + " bytes, model expects " +
                                              std::to_string(r.pixels.size()));
  for (std::size_t i = 0; i < bytes.size(); ++i) r.pixels[i] = static_cast<unsigned char>(bytes[i]) / 255.0;
  return r;
}

std::vector<double> logits_for(const nn::ModelCheckpoint& model, const json& req) {
  if (req.contains("image")) {
    const auto bytes = io::base64_decode(req.at("image").get<std::string>());
    const auto format = req.value("image_format", std::string("png"));
    const auto& arch = model.arch();
    Raster img;
    if (format == "png") {
      img = decode_png(bytes, arch.channels);
      if (img.height != arch.image_size || img.width != arch.image_size)
        throw Error(ErrorCode::ShapeMismatch, "image is " + std::to_string(img.height) + "x" +
                                                  std::to_string(img.width) + ", model expects " +
                                                  std::to_string(arch.image_size) + "x" + std::to_string(arch.image_size));
    } else if (format == "raw") {
      img = decode_raw(bytes, arch);
    } else {
      throw Error(ErrorCode::ConfigError, "image_format must be png or raw");
    }
    const auto fwd = nn::forward_vit(model, std::span<const Raster>(&img, 1));
    return {fwd.logits.data(), fwd.logits.data() + fwd.logits.cols()};
  }
  const auto features = req.at("features").get<std::vector<double>>();
  for (double v : features)
    if (!std::isfinite(v)) throw Error(ErrorCode::ConfigError, "features must be finite");
  const auto kind = req.value("features_kind", std::string("logits"));
  const auto width = static_cast<std::size_t>(model.arch().num_classes);
  if (kind == "logits") {
    if (features.size() != width)
      throw Error(ErrorCode::ShapeMismatch, "expected " + std::to_string(width) + " logits");
    return features;
  }
  if (kind != "embedding") throw Error(ErrorCode::ConfigError, "features_kind must be logits or embedding");
  const auto w = model.params().matrix("head.weight");
  const auto b = model.params().matrix("head.bias");
  if (features.size() != static_cast<std::size_t>(w.rows()))
    throw Error(ErrorCode::ShapeMismatch, "expected an embedding of width " + std::to_string(w.rows()));
  const nn::RowVector x = Eigen::Map<const nn::RowVector>(features.data(), static_cast<Eigen::Index>(features.size()));
  const nn::RowVector logits = x * w + b.row(0);
  return {logits.data(), logits.data() + logits.size()};
}

}  // namespace

ServeConfig serve_config_from(io::KeyValueConfig config) {
  config.alias_env("serve.port", "PORT");
  config.alias_env("serve.model_path", "MODEL_PATH");
  config.alias_env("serve.classes_path", "CLASSES_PATH");
  config.alias_env("serve.calib_path", "CALIB_PATH");
  config.alias_env("serve.rate_limit", "RATE_LIMIT");
  ServeConfig c;
  try {
    c.host = config.get_or("serve.host", c.host);
    c.port = static_cast<int>(config.get_int("serve.port", c.port));
    c.model_path = config.get_or("serve.model_path", c.model_path);
    c.classes_path = config.get_or("serve.classes_path", c.classes_path);
    c.calib_path = config.get_or("serve.calib_path", c.calib_path);
    if (auto rl = config.get("serve.rate_limit")) {
      const auto slash = rl->find('/');
      c.rate_limit = std::stoi(rl->substr(0, slash));
      if (slash != std::string::npos) c.rate_window_seconds = std::stod(rl->substr(slash + 1));
    }
    c.max_body_bytes = static_cast<std::size_t>(config.get_int("serve.max_body_bytes", static_cast<long long>(c.max_body_bytes)));
    c.force_top1_in_set = config.get_bool("serve.force_top1_in_set", c.force_top1_in_set);
    c.default_top_k = static_cast<int>(config.get_int("serve.top_k", c.default_top_k));
    c.threads = static_cast<int>(config.get_int("serve.threads", c.threads));
  } catch (const std::logic_error& e) {
    throw Error(ErrorCode::ConfigError, std::string("serve settings: ") + e.what());
  }
  if (c.port < 0 || c.port > 65535) throw Error(ErrorCode::ConfigError, "serve.port out of range");
  if (c.rate_limit < 1 || !(c.rate_window_seconds > 0.0)) throw Error(ErrorCode::ConfigError, "rate limit must be positive");
  if (c.default_top_k < 1) throw Error(ErrorCode::ConfigError, "serve.top_k must be at least 1");
  if (c.threads < 1) throw Error(ErrorCode::ConfigError, "serve.threads must be at least 1");
  if (c.max_body_bytes == 0) throw Error(ErrorCode::ConfigError, "serve.max_body_bytes must be positive");
  return c;
}

Calibration make_calibration(const json& ood_artifact, const json& conformal_artifact) {
  Calibration c;
  c.ood = trust::ood_from_json(ood_artifact);
  c.conformal = trust::conformal_from_json(conformal_artifact);
  c.ood_fingerprint = trust::fingerprint(ood_artifact);
  c.conformal_fingerprint = trust::fingerprint(conformal_artifact);
  c.fingerprint = trust::fingerprint(calibration_bundle(ood_artifact, conformal_artifact));
  return c;
}

json calibration_bundle(const json& ood_artifact, const json& conformal_artifact) {
  return {{"kind", "trust_bundle"}, {"ood", ood_artifact}, {"conformal", conformal_artifact}};
}

Calibration load_calibration(const std::string& path) {
  if (std::filesystem::is_directory(path)) {
    const auto dir = std::filesystem::path(path);
    return make_calibration(trust::load_artifact((dir / "ood.json").string(), "ood"),
                            trust::load_artifact((dir / "conformal.json").string(), "conformal"));
  }
  const auto bundle = trust::load_artifact(path, "trust_bundle");
  return make_calibration(bundle.at("ood"), bundle.at("conformal"));
}

PredictionService::PredictionService(ServeConfig config)
    : config_(std::move(config)),
      limiter_(config_.rate_limit, config_.rate_window_seconds),
      snapshot_(std::make_shared<Snapshot>()) {}

std::shared_ptr<const PredictionService::Snapshot> PredictionService::snapshot() const {
  std::lock_guard lock(snapshot_mutex_);
  return snapshot_;
}

void PredictionService::load_model(nn::ModelCheckpoint checkpoint, ClassSet classes) {
  if (!checkpoint.has_head() || static_cast<std::size_t>(checkpoint.arch().num_classes) != classes.size())
    throw Error(ErrorCode::ClassCountMismatch, "head width " + std::to_string(checkpoint.arch().num_classes) +
                                                   " does not match " + std::to_string(classes.size()) + " classes");
  auto version = nn::checkpoint_digest(checkpoint);
  auto model = std::make_shared<const nn::ModelCheckpoint>(std::move(checkpoint));
  auto cls = std::make_shared<const ClassSet>(std::move(classes));
  std::lock_guard lock(snapshot_mutex_);
  auto next = std::make_shared<Snapshot>(*snapshot_);
  next->model = std::move(model);
  next->classes = std::move(cls);
  next->model_version = std::move(version);
  snapshot_ = std::move(next);
}

void PredictionService::set_calibration(Calibration calibration) {
  auto cal = std::make_shared<const Calibration>(std::move(calibration));
  std::lock_guard lock(snapshot_mutex_);
  auto next = std::make_shared<Snapshot>(*snapshot_);
  next->calibration = std::move(cal);
  snapshot_ = std::move(next);
}

bool PredictionService::model_loaded() const { return snapshot()->model != nullptr; }

HttpReply PredictionService::health() const {
  const auto s = snapshot();
  if (!s->model) return reply(503, {{"status", "loading"}});
  return reply(200, {{"status", "ok"}, {"calibrated", s->calibration != nullptr}});
}

HttpReply PredictionService::model_info() const {
  const auto s = snapshot();
  if (!s->model) return error_reply(503, "not_ready", "model not loaded");
  json info = {{"model_version", s->model_version},
               {"class_count", s->model->arch().num_classes},
               {"class_set", s->classes->name()},
               {"image_size", s->model->arch().image_size},
               {"channels", s->model->arch().channels},
               {"stage", nn::to_string(s->model->stage())}};
  if (s->calibration) {
    info["calibration"] = {{"fingerprint", s->calibration->fingerprint},
                           {"ood", s->calibration->ood_fingerprint},
                           {"conformal", s->calibration->conformal_fingerprint},
                           {"alpha", s->calibration->conformal.alpha},
                           {"tau", s->calibration->ood.tau},
                           {"temperature", s->calibration->ood.temperature}};
  } else {
    info["calibration"] = nullptr;
  }
  return reply(200, info);
}

HttpReply PredictionService::predict(std::string_view body, const std::string& client, double now) const {
  const auto start = std::chrono::steady_clock::now();
  const auto s = snapshot();
  if (!s->model || !s->calibration) return error_reply(503, "not_ready", "model or calibration not loaded");
  if (body.size() > config_.max_body_bytes)
    return error_reply(413, "payload_too_large", "body exceeds " + std::to_string(config_.max_body_bytes) + " bytes");
  const auto admission = limiter_.admit(client, now);
  if (!admission.admitted) {
    auto r = error_reply(429, "rate_limited", "limit is " + std::to_string(config_.rate_limit) + " requests per " +
                                                  std::to_string(static_cast<int>(config_.rate_window_seconds)) + " s");
    r.headers["Retry-After"] = std::to_string(static_cast<long long>(std::ceil(admission.retry_after_seconds)));
    return r;
  }

  json req;
  try {
    req = json::parse(body);
  } catch (const json::exception&) {
    return error_reply(400, "bad_request", "body is not JSON");
  }
  if (!req.is_object()) return error_reply(400, "bad_request", "body must be a JSON object");
  if (req.contains("image") == req.contains("features"))
    return error_reply(400, "bad_request", "send exactly one of image or features");
  int top_k = config_.default_top_k;
  if (req.contains("top_k")) {
    if (!req["top_k"].is_number_integer() || req["top_k"].get<long long>() < 1)
      return error_reply(400, "bad_request", "top_k must be a positive integer");
    top_k = static_cast<int>(std::min<long long>(req["top_k"].get<long long>(), 1 << 20));
  }

  std::vector<double> logits;
  try {
    logits = logits_for(*s->model, req);
  } catch (const Error& e) {
    return error_reply(400, "bad_request", e.what());
  } catch (const json::exception& e) {
    return error_reply(400, "bad_request", e.what());
  }

  const auto probs = nn::softmax_stable(logits);
  std::vector<int> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return probs[static_cast<std::size_t>(a)] > probs[static_cast<std::size_t>(b)];
  });
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(top_k), order.size());

  json predictions = json::array();
  for (std::size_t i = 0; i < k; ++i)
    predictions.push_back(taxon_json(*s->classes, order[i], probs[static_cast<std::size_t>(order[i])]));

  auto members = trust::conformal_set(probs, s->calibration->conformal);
  bool forced = false;
  if (members.empty() && config_.force_top1_in_set) {
    members.push_back({order[0], probs[static_cast<std::size_t>(order[0])]});
    forced = true;
  }
  json set = json::array();
  for (const auto& m : members) set.push_back(taxon_json(*s->classes, m.class_id, m.probability));

  const auto ood = trust::ood_decide(logits, s->calibration->ood);
  json out = {{"predictions", predictions},
              {"conformal_set", set},
              {"conformal_forced_top1", forced},
              {"ood", {{"energy", ood.energy}, {"is_ood", ood.is_ood}, {"tau", s->calibration->ood.tau}}},
              {"model_version", s->model_version},
              {"calibration", s->calibration->fingerprint}};
  out["latency_ms"] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return reply(200, out);
}

}  // namespace weedid::serve
