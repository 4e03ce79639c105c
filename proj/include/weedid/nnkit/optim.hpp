#pragma once

#include <cstdint>
#include <span>

#include "weedid/nnkit/model.hpp"
#include "weedid/nnkit/vit.hpp"

namespace weedid::nn {

struct OptimHyper {
  double base_lr = 5e-4;
  double weight_decay = 0.02;
  double layerwise_decay = 0.75;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// AdamW state. Moments are created lazily on the first step so a fresh state
// can be paired with any checkpoint layout.
struct OptimState {
  OptimHyper hyper;
  std::int64_t step_count = 0;
  ParameterSet first_moment;
  ParameterSet second_moment;
};

/// Multiplier applied to base_lr for a parameter: layerwise_decay^(depth + 1 - layer_id).
/// Encoder block b therefore trains at base_lr * decay^(depth - b), the head at base_lr.
double layer_lr_scale(const std::string& param_name, int depth, double layerwise_decay);

/// One decoupled-weight-decay Adam update on a flat array (bias-corrected).
void adamw_update(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
                  std::int64_t step, double lr, double weight_decay, double beta1, double beta2, double eps);

/// Applies one AdamW step with layer-wise learning-rate decay. `lr_scale`
/// multiplies every rate (schedules). Throws Error(ShapeMismatch) when the
/// gradient layout differs from the checkpoint's.
void optimizer_step(OptimState& state, ModelCheckpoint& ckpt, const GradientSet& grads, double lr_scale = 1.0);

}  // namespace weedid::nn
