#include "weedid/nnkit/augment.hpp"

#include <algorithm>
#include <cmath>

#include "weedid/error.hpp"

namespace weedid::nn {

namespace {

Raster padded_crop(const Raster& image, int dy, int dx) {
  Raster out(image.height, image.width, image.channels);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const int sy = y + dy;
      const int sx = x + dx;
      if (sy < 0 || sy >= image.height || sx < 0 || sx >= image.width) continue;
      for (int c = 0; c < image.channels; ++c) out.at(y, x, c) = image.at(sy, sx, c);
    }
  return out;
}

void jitter(Raster& image, double shift, double gain) {
  double mean = 0.0;
  for (double v : image.pixels) mean += v;
  mean /= static_cast<double>(std::max<std::size_t>(1, image.pixels.size()));
  for (auto& v : image.pixels) v = std::clamp((v - mean) * gain + mean + shift, 0.0, 1.0);
}

}  // namespace

double sample_beta(Rng& rng, double alpha, double beta) {
  std::gamma_distribution<double> ga(alpha, 1.0);
  std::gamma_distribution<double> gb(beta, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  return x + y > 0.0 ? x / (x + y) : 0.5;
}

Raster flip_horizontal(const Raster& image) {
  Raster out(image.height, image.width, image.channels);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < image.channels; ++c) out.at(y, image.width - 1 - x, c) = image.at(y, x, c);
  return out;
}

void mixup_pair(const Raster& a, const Raster& b, double lambda, Raster& out) {
  if (a.pixels.size() != b.pixels.size()) throw Error(ErrorCode::ShapeMismatch, "mixup of differently sized rasters");
  out = a;
  if (lambda >= 1.0) return;
  for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] = lambda * a.pixels[i] + (1.0 - lambda) * b.pixels[i];
}

double cutmix_pair(const Raster& a, const Raster& b, double lambda, Rng& rng, Raster& out) {
  if (a.pixels.size() != b.pixels.size()) throw Error(ErrorCode::ShapeMismatch, "cutmix of differently sized rasters");
  out = a;
  const double cut = std::sqrt(std::clamp(1.0 - lambda, 0.0, 1.0));
  const int bh = std::clamp(static_cast<int>(std::lround(a.height * cut)), 0, a.height);
  const int bw = std::clamp(static_cast<int>(std::lround(a.width * cut)), 0, a.width);
  if (bh == 0 || bw == 0) return 1.0;
  const int y0 = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(a.height - bh + 1)));
  const int x0 = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(a.width - bw + 1)));
  for (int y = y0; y < y0 + bh; ++y)
    for (int x = x0; x < x0 + bw; ++x)
      for (int c = 0; c < a.channels; ++c) out.at(y, x, c) = b.at(y, x, c);
  return 1.0 - static_cast<double>(bh * bw) / static_cast<double>(a.height * a.width);
}

AugmentedBatch augment_batch(std::span<const Raster> batch, std::span<const int> labels, int num_classes,
                             const AugmentPolicy& policy, std::uint64_t seed) {
  if (labels.size() != batch.size()) throw Error(ErrorCode::LengthMismatch, "labels do not match batch");
  for (double prob : {policy.flip, policy.crop, policy.brightness_contrast, policy.mix_prob, policy.switch_prob})
    if (prob < 0.0 || prob > 1.0) throw Error(ErrorCode::ConfigError, "augmentation probabilities must lie in [0,1]");

  Rng rng = make_rng(seed, 0xA06);
  const auto B = batch.size();
  AugmentedBatch out;
  out.images.assign(batch.begin(), batch.end());
  out.lambda.assign(B, 1.0);
  out.soft_labels = Matrix::Zero(static_cast<Eigen::Index>(B), num_classes);
  for (std::size_t i = 0; i < B; ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) throw Error(ErrorCode::IdOutOfRange, "label out of range");
    out.soft_labels(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }

  for (auto& img : out.images) {
    if (uniform01(rng) < policy.flip) img = flip_horizontal(img);
    if (uniform01(rng) < policy.crop && policy.crop_padding > 0) {
      const auto span = static_cast<std::size_t>(2 * policy.crop_padding + 1);
      const int dy = static_cast<int>(uniform_index(rng, span)) - policy.crop_padding;
      const int dx = static_cast<int>(uniform_index(rng, span)) - policy.crop_padding;
      img = padded_crop(img, dy, dx);
    }
    if (uniform01(rng) < policy.brightness_contrast) {
      const double shift = (2.0 * uniform01(rng) - 1.0) * policy.brightness;
      const double gain = 1.0 + (2.0 * uniform01(rng) - 1.0) * policy.contrast;
      jitter(img, shift, gain);
    }
  }

  const bool mixup = policy.mixup_alpha > 0.0;
  const bool cutmix = policy.cutmix_alpha > 0.0;
  if (B < 2 || !(mixup || cutmix) || uniform01(rng) >= policy.mix_prob) return out;

  const bool use_cutmix = cutmix && (!mixup || uniform01(rng) < policy.switch_prob);
  const double alpha = use_cutmix ? policy.cutmix_alpha : policy.mixup_alpha;
  const double lambda = sample_beta(rng, alpha, alpha);
  const auto source = out.images;
  const Matrix source_labels = out.soft_labels;
  for (std::size_t i = 0; i < B; ++i) {
    const std::size_t j = B - 1 - i;
    double realised = lambda;
    if (use_cutmix) realised = cutmix_pair(source[i], source[j], lambda, rng, out.images[i]);
    else mixup_pair(source[i], source[j], lambda, out.images[i]);
    out.lambda[i] = realised;
    out.soft_labels.row(static_cast<Eigen::Index>(i)) =
        realised * source_labels.row(static_cast<Eigen::Index>(i)) +
        (1.0 - realised) * source_labels.row(static_cast<Eigen::Index>(j));
  }
  return out;
}

}  // namespace weedid::nn
