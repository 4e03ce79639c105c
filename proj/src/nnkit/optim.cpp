#include "weedid/nnkit/optim.hpp"

#include <cmath>

#include "weedid/error.hpp"

namespace weedid::nn {

double layer_lr_scale(const std::string& param_name, int depth, double layerwise_decay) {
  return std::pow(layerwise_decay, depth + 1 - layer_id(param_name, depth));
}

void adamw_update(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
                  std::int64_t step, double lr, double weight_decay, double beta1, double beta2, double eps) {
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    params[i] -= lr * (m_hat / (std::sqrt(v_hat) + eps) + weight_decay * params[i]);
  }
}

void optimizer_step(OptimState& state, ModelCheckpoint& ckpt, const GradientSet& grads, double lr_scale) {
  if (!ckpt.params().same_layout(grads))
    throw Error(ErrorCode::ShapeMismatch, "gradient layout does not match checkpoint parameters");
  if (!state.first_moment.same_layout(grads)) {
    if (state.step_count != 0 && state.first_moment.size() != 0)
      throw Error(ErrorCode::ShapeMismatch, "optimizer moments do not match checkpoint parameters");
    state.first_moment = grads.zeros_like();
    state.second_moment = grads.zeros_like();
  }
  ++state.step_count;
  const auto& h = state.hyper;
  auto& params = ckpt.mutable_params();
  const int depth = ckpt.arch().depth;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& name = params.name(i);
    auto& t = params.tensor(i);
    const double lr = h.base_lr * lr_scale * layer_lr_scale(name, depth, h.layerwise_decay);
    const double wd = skip_weight_decay(name, t) ? 0.0 : h.weight_decay;
    adamw_update(t.values, grads.tensor(i).values, state.first_moment.tensor(i).values,
                 state.second_moment.tensor(i).values, state.step_count, lr, wd, h.beta1, h.beta2, h.epsilon);
  }
}

}  // namespace weedid::nn
