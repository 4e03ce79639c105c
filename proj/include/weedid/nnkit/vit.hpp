#pragma once

#include <cstdint>
#include <optional>
#include <memory>
#include <span>
#include <vector>

#include "weedid/core/dataset.hpp"
#include "weedid/nnkit/model.hpp"
#include "weedid/nnkit/tensor.hpp"

namespace weedid::nn {

using GradientSet = ParameterSet;

namespace detail {
struct CacheData;
}

// Activations retained by a forward pass for the matching backward pass.
// Bound to the checkpoint revision it was computed from.
class ForwardCache {
 public:
  ForwardCache() = default;
  explicit ForwardCache(std::shared_ptr<const detail::CacheData> data) : data_(std::move(data)) {}

  bool empty() const { return !data_; }
  std::size_t batch_size() const;
  /// Attention probabilities (tokens x tokens) of encoder block `block`, head `head`.
  const Matrix& attention(std::size_t image, std::size_t block, std::size_t head) const;
  const detail::CacheData& data() const { return *data_; }

 private:
  std::shared_ptr<const detail::CacheData> data_;
};

struct ForwardOptions {
  bool training = false;               // enables drop-path
  std::uint64_t seed = 0;              // drop-path stream
  std::optional<double> drop_path;     // overrides arch.drop_path when set
};

struct ForwardResult {
  Matrix embeddings;  // batch x embed_dim
  Matrix logits;      // batch x num_classes (0 columns without a head)
  ForwardCache cache;
};

struct MaeResult {
  double loss = 0.0;
  std::vector<std::vector<bool>> mask;  // per image, per patch; true = masked
  Matrix predictions;                   // (batch * patches) x patch_dim, decoder output
  Matrix targets;                       // same shape, reconstruction targets
  ForwardCache cache;
};

/// Splits a raster into patches: row r*grid+c holds patch (r,c) with pixels
/// ordered (dy, dx, channel).
Matrix patchify(const Raster& image, int patch_size);

/// Encoder over all patches plus classifier head (when present).
/// Throws Error(ShapeMismatch) when a raster does not match the arch.
ForwardResult forward_vit(const ModelCheckpoint& ckpt, std::span<const Raster> batch,
                          const ForwardOptions& options = {});

/// Exactly arch.masked_count() patches per image are masked, chosen by a
/// permutation drawn from (seed, image index).
std::vector<std::vector<bool>> sample_mae_mask(const ArchConfig& arch, std::size_t batch, std::uint64_t seed);

/// Mean squared error over masked patches only; rows are (image, patch)
/// flattened image-major.
double masked_mse(const Matrix& predictions, const Matrix& targets, const std::vector<std::vector<bool>>& mask);

MaeResult mae_forward_loss(const ModelCheckpoint& ckpt, std::span<const Raster> batch, std::uint64_t seed,
                           const ForwardOptions& options = {});

enum class LossKind { Mae, CrossEntropy, MixupCrossEntropy };

struct LossSpec {
  LossKind kind = LossKind::Mae;
  std::span<const int> labels;           // CrossEntropy
  const Matrix* soft_targets = nullptr;  // MixupCrossEntropy: batch x classes, rows sum to 1
};

/// Mean over the batch of -log softmax(logits)[label].
double cross_entropy(const Matrix& logits, std::span<const int> labels);
/// Mean over the batch of -sum_k target_k log softmax(logits)_k.
double soft_cross_entropy(const Matrix& logits, const Matrix& targets);

/// Gradients of the loss named by `loss` with respect to every parameter.
/// Throws Error(StaleCache) if the checkpoint changed since the forward pass
/// or the cache kind does not fit the loss.
GradientSet backprop(const ModelCheckpoint& ckpt, const ForwardCache& cache, const LossSpec& loss);

}  // namespace weedid::nn
