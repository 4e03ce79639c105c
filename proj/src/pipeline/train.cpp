#include "weedid/pipeline/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "weedid/core/random.hpp"
#include "weedid/error.hpp"
#include "weedid/nnkit/ops.hpp"
#include "weedid/nnkit/optim.hpp"
#include "weedid/nnkit/vit.hpp"

namespace weedid::pipeline {

namespace {

constexpr std::size_t kEvalChunk = 64;

double cosine_scale(std::int64_t step, std::int64_t total, std::int64_t warmup) {
  if (warmup > 0 && step < warmup) return static_cast<double>(step + 1) / static_cast<double>(warmup);
  if (total <= warmup) return 1.0;
  const double t = static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  return 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(t, 1.0)));
}

eval::ProbRows rows_of(const nn::Matrix& m) {
  eval::ProbRows out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[i].assign(m.row(i).data(), m.row(i).data() + m.cols());
  return out;
}

}  // namespace

nlohmann::json to_json(const MaeConfig& c) {
  return {{"batch_size", c.batch_size}, {"lr", c.lr}, {"weight_decay", c.weight_decay}, {"warmup_steps", c.warmup_steps}};
}

nlohmann::json to_json(const SupervisedConfig& c) {
  const auto& a = c.augment;
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"layer_decay", c.layer_decay},
          {"drop_path", c.drop_path},
          {"warmup_epochs", c.warmup_epochs},
          {"augment",
           {{"flip", a.flip},
            {"crop", a.crop},
            {"crop_padding", a.crop_padding},
            {"brightness_contrast", a.brightness_contrast},
            {"brightness", a.brightness},
            {"contrast", a.contrast},
            {"mixup_alpha", a.mixup_alpha},
            {"cutmix_alpha", a.cutmix_alpha},
            {"mix_prob", a.mix_prob},
            {"switch_prob", a.switch_prob}}}};
}

nlohmann::json to_json(const HeadConfig& c) {
  return {{"epochs", c.epochs}, {"lr", c.lr}, {"weight_decay", c.weight_decay}, {"standardize", c.standardize}};
}

MaeConfig mae_config_from_json(const nlohmann::json& j) {
  MaeConfig c;
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  return c;
}

SupervisedConfig supervised_config_from_json(const nlohmann::json& j) {
  SupervisedConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.layer_decay = j.value("layer_decay", c.layer_decay);
  c.drop_path = j.value("drop_path", c.drop_path);
  c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
  if (j.contains("augment")) {
    const auto& a = j.at("augment");
    auto& p = c.augment;
    p.flip = a.value("flip", p.flip);
    p.crop = a.value("crop", p.crop);
    p.crop_padding = a.value("crop_padding", p.crop_padding);
    p.brightness_contrast = a.value("brightness_contrast", p.brightness_contrast);
    p.brightness = a.value("brightness", p.brightness);
    p.contrast = a.value("contrast", p.contrast);
    p.mixup_alpha = a.value("mixup_alpha", p.mixup_alpha);
    p.cutmix_alpha = a.value("cutmix_alpha", p.cutmix_alpha);
    p.mix_prob = a.value("mix_prob", p.mix_prob);
    p.switch_prob = a.value("switch_prob", p.switch_prob);
  }
  return c;
}

HeadConfig head_config_from_json(const nlohmann::json& j) {
  HeadConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.standardize = j.value("standardize", c.standardize);
  return c;
}

std::vector<Raster> images_of(std::span<const LabeledExample> examples) {
  std::vector<Raster> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(e.image);
  return out;
}

nn::Matrix embed(const nn::ModelCheckpoint& ckpt, std::span<const Raster> images) {
  nn::Matrix out(static_cast<Eigen::Index>(images.size()), ckpt.arch().embed_dim);
  for (std::size_t start = 0; start < images.size(); start += kEvalChunk) {
    const auto n = std::min(kEvalChunk, images.size() - start);
    auto res = nn::forward_vit(ckpt, images.subspan(start, n));
    out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) = res.embeddings;
  }
  return out;
}

eval::ProbRows predict_logits(const nn::ModelCheckpoint& ckpt, std::span<const Raster> images) {
  if (!ckpt.has_head()) throw Error(ErrorCode::ShapeMismatch, "checkpoint has no classifier head");
  const nn::Matrix e = embed(ckpt, images);
  nn::Matrix logits = e * ckpt.params().matrix("head.weight");
  logits.rowwise() += ckpt.params().matrix("head.bias").row(0);
  return rows_of(logits);
}

eval::ProbRows predict_probs(const nn::ModelCheckpoint& ckpt, std::span<const Raster> images) {
  auto rows = predict_logits(ckpt, images);
  for (auto& r : rows) r = nn::softmax_stable(r);
  return rows;
}

std::uint64_t mae_step_seed(std::uint64_t seed, int step) {
  return mix_seed(seed, 100000 + static_cast<std::uint64_t>(step));
}

std::vector<double> train_mae(nn::ModelCheckpoint& ckpt, std::span<const Raster> images, int steps,
                              const MaeConfig& config, std::uint64_t seed) {
  std::vector<double> trace;
  if (steps <= 0) return trace;
  if (images.empty()) throw Error(ErrorCode::EmptyInput, "MAE training needs images");
  nn::OptimState opt;
  opt.hyper.base_lr = config.lr;
  opt.hyper.weight_decay = config.weight_decay;
  opt.hyper.layerwise_decay = 1.0;
  Rng rng = make_rng(seed, 31);
  std::vector<Raster> batch(static_cast<std::size_t>(config.batch_size));
  for (int step = 0; step < steps; ++step) {
    for (auto& b : batch) b = images[uniform_index(rng, images.size())];
    const auto step_seed = mae_step_seed(seed, step);
    nn::ForwardOptions fo{true, step_seed, 0.0};  // no stochastic depth while pretraining
    auto res = nn::mae_forward_loss(ckpt, batch, step_seed, fo);
    auto grads = nn::backprop(ckpt, res.cache, {nn::LossKind::Mae, {}, nullptr});
    nn::optimizer_step(opt, ckpt, grads, cosine_scale(step, steps, config.warmup_steps));
    trace.push_back(res.loss);
  }
  return trace;
}

std::vector<double> train_supervised(nn::ModelCheckpoint& ckpt, std::span<const LabeledExample> train,
                                     const SupervisedConfig& config, std::uint64_t seed) {
  std::vector<double> epoch_loss;
  if (config.epochs <= 0 || train.empty()) return epoch_loss;
  const int C = ckpt.arch().num_classes;
  if (C <= 0) throw Error(ErrorCode::ClassCountMismatch, "fine-tuning needs a classifier head");
  nn::OptimState opt;
  opt.hyper.base_lr = config.lr;
  opt.hyper.weight_decay = config.weight_decay;
  opt.hyper.layerwise_decay = config.layer_decay;
  const auto bs = static_cast<std::size_t>(std::max(config.batch_size, 1));
  const auto per_epoch = static_cast<std::int64_t>((train.size() + bs - 1) / bs);
  const auto total = per_epoch * config.epochs;
  const bool mixing = config.augment.mixup_alpha > 0.0 || config.augment.cutmix_alpha > 0.0;
  std::int64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng = make_rng(seed, 200 + static_cast<std::uint64_t>(epoch));
    const auto order = permutation(rng, train.size());
    double sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs, ++step) {
      const auto n = std::min(bs, order.size() - start);
      std::vector<Raster> images;
      std::vector<int> labels;
      for (std::size_t i = 0; i < n; ++i) {
        images.push_back(train[order[start + i]].image);
        labels.push_back(train[order[start + i]].label);
      }
      const auto step_seed = mix_seed(seed, 300000 + static_cast<std::uint64_t>(step));
      auto aug = nn::augment_batch(images, labels, C, config.augment, step_seed);
      nn::ForwardOptions fo{config.drop_path > 0.0, step_seed, config.drop_path};
      auto res = nn::forward_vit(ckpt, aug.images, fo);
      nn::GradientSet grads;
      if (mixing) {
        sum += nn::soft_cross_entropy(res.logits, aug.soft_labels) * static_cast<double>(n);
        grads = nn::backprop(ckpt, res.cache, {nn::LossKind::MixupCrossEntropy, {}, &aug.soft_labels});
      } else {
        sum += nn::cross_entropy(res.logits, labels) * static_cast<double>(n);
        grads = nn::backprop(ckpt, res.cache, {nn::LossKind::CrossEntropy, labels});
      }
      nn::optimizer_step(opt, ckpt, grads, cosine_scale(step, total, per_epoch * config.warmup_epochs));
    }
    epoch_loss.push_back(sum / static_cast<double>(train.size()));
  }
  return epoch_loss;
}

void train_head(nn::ModelCheckpoint& ckpt, std::span<const LabeledExample> train, const HeadConfig& config,
                std::uint64_t seed) {
  const int C = ckpt.arch().num_classes;
  if (C <= 0) throw Error(ErrorCode::ClassCountMismatch, "head training needs a classifier head");
  if (train.empty() || config.epochs <= 0) return;
  const auto images = images_of(train);
  nn::Matrix x = embed(ckpt, images);
  const auto n = x.rows();
  const auto D = x.cols();
  nn::RowVector mu = nn::RowVector::Zero(D), sd = nn::RowVector::Ones(D);
  if (config.standardize) {
    mu = x.colwise().mean();
    x.rowwise() -= mu;
    sd = (x.array().square().colwise().sum() / static_cast<double>(n)).sqrt().max(1e-6).matrix();
    x.array().rowwise() /= sd.array();
  }
  nn::Matrix onehot = nn::Matrix::Zero(n, C);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = train[i].label;
    if (y < 0 || y >= C) throw Error(ErrorCode::ClassCountMismatch, "label outside the head width");
    onehot(i, y) = 1.0;
  }
  // Small random start so runs differ by seed only through initialisation.
  Rng rng = make_rng(seed, 41);
  nn::Matrix w(D, C);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = 0.01 * normal(rng);
  nn::Matrix b = nn::Matrix::Zero(1, C);
  nn::Matrix mw = nn::Matrix::Zero(D, C), vw = mw, mb = nn::Matrix::Zero(1, C), vb = mb;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    nn::Matrix logits = x * w;
    logits.rowwise() += b.row(0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double m = logits.row(i).maxCoeff();
      logits.row(i) = (logits.row(i).array() - m).exp().matrix();
      logits.row(i) /= logits.row(i).sum();
    }
    const nn::Matrix dl = (logits - onehot) / static_cast<double>(n);
    const nn::Matrix gw = x.transpose() * dl;
    const nn::Matrix gb = dl.colwise().sum();
    const double lr = config.lr * (0.5 * (1.0 + std::cos(std::numbers::pi * epoch / config.epochs)));
    nn::adamw_update({w.data(), static_cast<std::size_t>(w.size())}, {gw.data(), static_cast<std::size_t>(gw.size())},
                     {mw.data(), static_cast<std::size_t>(mw.size())}, {vw.data(), static_cast<std::size_t>(vw.size())},
                     epoch + 1, lr, config.weight_decay, 0.9, 0.999, 1e-8);
    nn::adamw_update({b.data(), static_cast<std::size_t>(b.size())}, {gb.data(), static_cast<std::size_t>(gb.size())},
                     {mb.data(), static_cast<std::size_t>(mb.size())}, {vb.data(), static_cast<std::size_t>(vb.size())},
                     epoch + 1, lr, 0.0, 0.9, 0.999, 1e-8);
  }
  // Fold the standardization into the head: logits = ((e - mu) / sd) w + b.
  nn::Matrix folded = w;
  for (Eigen::Index d = 0; d < D; ++d) folded.row(d) /= sd(d);
  nn::Matrix bias = b - mu * folded;
  auto& p = ckpt.mutable_params();
  p.matrix("head.weight") = folded;
  p.matrix("head.bias") = bias;
}

}  // namespace weedid::pipeline
