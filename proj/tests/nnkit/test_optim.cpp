#include <doctest.h>

#include <cmath>

#include "weedid/nnkit/optim.hpp"

using namespace weedid;

TEST_CASE("optimizer defaults match the fine-tuning recipe") {
  nn::OptimHyper h;
  CHECK(h.base_lr == 5e-4);
  CHECK(h.weight_decay == 0.02);
  CHECK(h.layerwise_decay == 0.75);
}

TEST_CASE("zero gradients with zero weight decay leave parameters unchanged") {
  nn::ArchConfig arch;
  arch.num_classes = 2;
  auto ckpt = nn::init_checkpoint(arch, 1);
  const auto before = ckpt.params();
  nn::OptimState state;
  state.hyper.weight_decay = 0.0;
  auto zero = ckpt.params().zeros_like();
  for (int i = 0; i < 3; ++i) nn::optimizer_step(state, ckpt, zero);
  CHECK(ckpt.params() == before);
  CHECK(state.step_count == 3);
}

TEST_CASE("AdamW converges on a 1-D quadratic") {
  std::vector<double> x{0.0}, m{0.0}, v{0.0};
  for (int step = 1; step <= 200; ++step) {
    const std::vector<double> g{2.0 * (x[0] - 3.0)};
    nn::adamw_update(x, g, m, v, step, 0.1, 0.0, 0.9, 0.999, 1e-8);
  }
  CHECK(std::abs(x[0] - 3.0) < 1e-3);
}

TEST_CASE("layer-wise decay: block b trains at base * decay^(depth - b)") {
  const int depth = 4;
  CHECK(nn::layer_lr_scale("head.weight", depth, 0.75) == 1.0);
  CHECK(nn::layer_lr_scale("norm.weight", depth, 0.75) == 1.0);
  for (int b = 0; b < depth; ++b) {
    const auto name = "blocks." + std::to_string(b) + ".attn.qkv.weight";
    CHECK(nn::layer_lr_scale(name, depth, 0.75) == doctest::Approx(std::pow(0.75, depth - b)));
  }
  CHECK(nn::layer_lr_scale("patch_embed.weight", depth, 0.75) == doctest::Approx(std::pow(0.75, depth + 1)));
  CHECK(nn::layer_lr_scale("pos_embed", depth, 0.75) == doctest::Approx(std::pow(0.75, depth + 1)));
}

TEST_CASE("optimizer rejects a gradient layout that differs from the checkpoint") {
  nn::ArchConfig arch;
  arch.num_classes = 2;
  auto ckpt = nn::init_checkpoint(arch, 1);
  auto grads = ckpt.params().zeros_like();
  grads.remove_prefix("head.");
  nn::OptimState state;
  CHECK_THROWS(nn::optimizer_step(state, ckpt, grads));
}

TEST_CASE("weight decay shrinks matrices but not biases") {
  nn::ArchConfig arch;
  arch.num_classes = 2;
  auto ckpt = nn::init_checkpoint(arch, 1);
  ckpt.mutable_params().at("head.bias").values = {1.0, -1.0};
  const auto w_before = ckpt.params().at("head.weight").values;
  nn::OptimState state;
  state.hyper.weight_decay = 0.5;
  nn::optimizer_step(state, ckpt, ckpt.params().zeros_like());
  CHECK(ckpt.params().at("head.bias").values == nn::AlignedValues{1.0, -1.0});
  const auto& w = ckpt.params().at("head.weight").values;
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(w[i] == doctest::Approx(w_before[i] * (1 - 5e-4 * 0.5)));
}
