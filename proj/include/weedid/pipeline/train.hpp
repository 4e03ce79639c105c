#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "weedid/core/dataset.hpp"
#include "weedid/evalkit/metrics.hpp"
#include "weedid/nnkit/augment.hpp"
#include "weedid/nnkit/model.hpp"
#include "weedid/nnkit/tensor.hpp"

namespace weedid::pipeline {

struct MaeConfig {
  int batch_size = 32;
  double lr = 1.5e-3;
  double weight_decay = 0.05;
  int warmup_steps = 20;
};

struct SupervisedConfig {
  int epochs = 10;
  int batch_size = 16;
  double lr = 5e-4;
  double weight_decay = 0.02;
  double layer_decay = 0.75;
  double drop_path = 0.1;
  int warmup_epochs = 0;  // linear warmup before the cosine decay
  nn::AugmentPolicy augment;
};

struct HeadConfig {
  int epochs = 200;
  double lr = 0.05;
  double weight_decay = 1e-4;
  bool standardize = true;  // fit on standardized embeddings, folded back into the head
};

nlohmann::json to_json(const MaeConfig& c);
nlohmann::json to_json(const SupervisedConfig& c);
nlohmann::json to_json(const HeadConfig& c);
MaeConfig mae_config_from_json(const nlohmann::json& j);
SupervisedConfig supervised_config_from_json(const nlohmann::json& j);
HeadConfig head_config_from_json(const nlohmann::json& j);

/// Pooled encoder embeddings, one row per image, evaluated in inference mode.
nn::Matrix embed(const nn::ModelCheckpoint& ckpt, std::span<const Raster> images);

/// Softmax probabilities from the classifier head.
eval::ProbRows predict_probs(const nn::ModelCheckpoint& ckpt, std::span<const Raster> images);
/// Raw head logits.
eval::ProbRows predict_logits(const nn::ModelCheckpoint& ckpt, std::span<const Raster> images);

/// Seed of the mask and drop-path draws at MAE step `step`.
std::uint64_t mae_step_seed(std::uint64_t seed, int step);

/// `steps` AdamW steps of masked-autoencoder training on batches drawn with
/// replacement from `images`; a fresh mask per step. Returns the per-step loss.
std::vector<double> train_mae(nn::ModelCheckpoint& ckpt, std::span<const Raster> images, int steps,
                              const MaeConfig& config, std::uint64_t seed);

/// End-to-end cross-entropy fine-tuning with layer-wise decay and a cosine
/// schedule. Returns the mean loss per epoch.
std::vector<double> train_supervised(nn::ModelCheckpoint& ckpt, std::span<const LabeledExample> train,
                                     const SupervisedConfig& config, std::uint64_t seed);

/// Trains only the classifier head on frozen embeddings (full-batch AdamW on
/// softmax cross-entropy).
void train_head(nn::ModelCheckpoint& ckpt, std::span<const LabeledExample> train, const HeadConfig& config,
                std::uint64_t seed);

std::vector<Raster> images_of(std::span<const LabeledExample> examples);

}  // namespace weedid::pipeline
