#pragma once

#include <string>

#include <json.hpp>

namespace weedid::nn {

enum class Pooling { Mean, ClassToken };

struct ArchConfig {
  int image_size = 32;
  int channels = 1;
  int patch_size = 4;
  int embed_dim = 64;
  int depth = 2;
  int heads = 2;
  double mlp_ratio = 4.0;
  int decoder_dim = 32;
  int decoder_depth = 1;
  int decoder_heads = 2;
  double mask_ratio = 0.75;
  int num_classes = 0;
  double drop_path = 0.1;
  Pooling pooling = Pooling::Mean;
  bool norm_pix_loss = false;

  int grid() const { return image_size / patch_size; }
  int num_patches() const { return grid() * grid(); }
  int patch_dim() const { return patch_size * patch_size * channels; }
  int mlp_hidden() const { return static_cast<int>(embed_dim * mlp_ratio + 0.5); }
  int decoder_mlp_hidden() const { return static_cast<int>(decoder_dim * mlp_ratio + 0.5); }
  int masked_count() const;

  /// Throws Error(ConfigError) when an invariant is broken.
  void validate() const;

  bool operator==(const ArchConfig&) const = default;
};

nlohmann::json to_json(const ArchConfig& arch);
ArchConfig arch_from_json(const nlohmann::json& j);

}  // namespace weedid::nn
