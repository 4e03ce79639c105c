#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "weedid/core/dataset.hpp"
#include "weedid/core/random.hpp"
#include "weedid/nnkit/tensor.hpp"

namespace weedid::nn {

// Probabilities are per image; alpha = 0 disables the corresponding mixing op.
struct AugmentPolicy {
  double flip = 0.0;                // horizontal flip probability
  double crop = 0.0;                // probability of a padded random crop
  int crop_padding = 2;             // max shift in pixels
  double brightness_contrast = 0.0; // probability of jitter
  double brightness = 0.1;          // max additive shift
  double contrast = 0.2;            // max relative contrast change
  double mixup_alpha = 0.0;
  double cutmix_alpha = 0.0;
  double mix_prob = 1.0;            // probability a batch is mixed at all
  double switch_prob = 0.5;         // cutmix instead of mixup when both are enabled
};

struct AugmentedBatch {
  std::vector<Raster> images;
  Matrix soft_labels;          // batch x classes
  std::vector<double> lambda;  // weight of each image's own label (1 when unmixed)
};

Raster flip_horizontal(const Raster& image);

/// Convex combination lambda * a + (1 - lambda) * b of images and labels.
void mixup_pair(const Raster& a, const Raster& b, double lambda, Raster& out);

/// Pastes a box of `b` into a copy of `a`. The box area targets (1 - lambda) of
/// the image; the returned value is the label weight of `a` actually realised
/// (1 - pasted_pixels / total_pixels).
double cutmix_pair(const Raster& a, const Raster& b, double lambda, Rng& rng, Raster& out);

/// Applies the policy; deterministic under `seed`. Mixing partners are the
/// batch in reverse order.
AugmentedBatch augment_batch(std::span<const Raster> batch, std::span<const int> labels, int num_classes,
                             const AugmentPolicy& policy, std::uint64_t seed);

double sample_beta(Rng& rng, double alpha, double beta);

}  // namespace weedid::nn
