#include <algorithm>
#include <numeric>

#include "criteria.hpp"
#include "support/gradcheck.hpp"
#include "weedid/nnkit/vit.hpp"
#include "weedid/pipeline/stages.hpp"
#include "weedid/pipeline/synth.hpp"

namespace weedid::acceptance {

const nn::ModelCheckpoint& shared_pretrained() {
  static const nn::ModelCheckpoint ckpt = [] {
    auto pool = pipeline::default_synth_config(0);
    pool.examples_per_class = 200;
    pool.instance_stream = 1;  // same classes, images disjoint from every labeled draw
    return pipeline::pretrain_mae(pipeline::generate_synthetic(pool), nn::ArchConfig{}, 3000, 0).checkpoint;
  }();
  return ckpt;
}

Outcome gradient_correctness() {
  Stopwatch clock;
  Checks checks;
  double worst = 0.0;
  std::string worst_name;
  std::size_t blocks = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    nn::ArchConfig arch;  // the default tiny ViT-MAE
    arch.num_classes = 12;
    const auto ckpt = nn::init_checkpoint(arch, seed);
    const auto batch = testing::random_rasters(arch, 2, seed + 100);
    const std::vector<int> labels{static_cast<int>(seed % 12), static_cast<int>((seed * 5) % 12)};

    const auto mae = nn::mae_forward_loss(ckpt, batch, seed + 200);
    const auto mae_grads = nn::backprop(ckpt, mae.cache, nn::LossSpec{});
    auto mae_loss = [&](const nn::ModelCheckpoint& c) { return nn::mae_forward_loss(c, batch, seed + 200).loss; };

    const auto fwd = nn::forward_vit(ckpt, batch);
    const auto ce_grads = nn::backprop(ckpt, fwd.cache, {nn::LossKind::CrossEntropy, labels});
    auto ce_loss = [&](const nn::ModelCheckpoint& c) { return nn::cross_entropy(nn::forward_vit(c, batch).logits, labels); };

    for (const auto& results : {testing::check_gradients(ckpt, mae_grads, mae_loss, 6, seed),
                                testing::check_gradients(ckpt, ce_grads, ce_loss, 6, seed + 10)}) {
      for (const auto& b : results) {
        ++blocks;
        if (b.max_rel_error > worst) worst = b.max_rel_error, worst_name = b.name;
        checks.expect(b.max_rel_error <= 1e-4, "seed " + std::to_string(seed) + " " + b.name + " " +
                                                   fmt(b.max_rel_error, 8));
      }
    }
  }
  const double secs = clock.seconds();
  checks.expect(secs < 120.0, "runtime " + fmt(secs, 1) + " s");
  return checks.outcome(std::to_string(blocks) + " block checks over 3 seeds, max rel error " + fmt(worst, 8) +
                        " (" + worst_name + ")");
}

Outcome pretraining_gain() {
  Stopwatch clock;
  Checks checks;
  const auto& pretrained = shared_pretrained();
  // Same initial weights the pretraining started from, never trained.
  const auto random = nn::init_checkpoint(nn::ArchConfig{}, 0);
  const auto task = pipeline::generate_synthetic(pipeline::default_synth_config(0));

  double pre_sum = 0.0, rnd_sum = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    pipeline::KShotSpec spec;
    spec.k = 10;
    spec.trials = 1;
    spec.seed = seed;  // the support draw and head init are shared by both encoders
    const double pre = pipeline::kshot_evaluate(pretrained, {}, task, spec).mean;
    const double rnd = pipeline::kshot_evaluate(random, {}, task, spec).mean;
    pre_sum += pre;
    rnd_sum += rnd;
    per_seed += " " + fmt(pre, 3) + "/" + fmt(rnd, 3);
  }
  const double gap = (pre_sum - rnd_sum) / 5.0;
  checks.expect(gap >= 0.10, "gap below 10 points");
  const double secs = clock.seconds();
  checks.expect(secs < 600.0, "runtime " + fmt(secs, 1) + " s");
  return checks.outcome("pretrained " + fmt(pre_sum / 5.0, 3) + " vs random " + fmt(rnd_sum / 5.0, 3) +
                        ", gap " + fmt(100.0 * gap, 1) + " points; per seed pre/rnd:" + per_seed);
}

Outcome kshot_monotonicity() {
  Checks checks;
  const auto& pretrained = shared_pretrained();
  auto cfg = pipeline::default_synth_config(0);
  cfg.examples_per_class = 100;
  const auto task = pipeline::generate_synthetic(cfg);

  auto run = [&](std::optional<int> k) {
    pipeline::KShotSpec spec;
    spec.k = k;
    spec.trials = 10;
    spec.seed = 0;
    return pipeline::kshot_evaluate(pretrained, {}, task, spec);
  };
  const auto k10 = run(10), k20 = run(20), all = run(std::nullopt);
  checks.expect(k20.mean >= k10.mean - 0.02, "k=20 below k=10 by more than 2 points");
  checks.expect(all.mean >= k20.mean - 0.02, "k=all below k=20 by more than 2 points");
  return checks.outcome("k=10 " + fmt(k10.mean, 3) + " +- " + fmt(k10.sd, 3) + ", k=20 " + fmt(k20.mean, 3) +
                        " +- " + fmt(k20.sd, 3) + ", k=all " + fmt(all.mean, 3) + " +- " + fmt(all.sd, 3) +
                        " (10 trials each)");
}

}  // namespace weedid::acceptance
