#include "weedid/nnkit/arch.hpp"

#include <cmath>

#include "weedid/error.hpp"

namespace weedid::nn {

int ArchConfig::masked_count() const {
  return static_cast<int>(std::lround(mask_ratio * num_patches()));
}

void ArchConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); };
  if (image_size <= 0 || patch_size <= 0 || channels <= 0) fail("image_size, patch_size and channels must be positive");
  if (image_size % patch_size != 0) fail("image_size must be divisible by patch_size");
  if (embed_dim <= 0 || heads <= 0 || embed_dim % heads != 0) fail("embed_dim must be divisible by heads");
  if (decoder_dim <= 0 || decoder_heads <= 0 || decoder_dim % decoder_heads != 0)
    fail("decoder_dim must be divisible by decoder_heads");
  if (depth < 1 || decoder_depth < 0) fail("depth must be >= 1 and decoder_depth >= 0");
  if (!(mlp_ratio > 0.0)) fail("mlp_ratio must be positive");
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) fail("mask_ratio must lie in (0,1)");
  if (masked_count() >= num_patches()) fail("mask_ratio leaves no visible patch");
  if (num_classes < 0) fail("num_classes must be >= 0");
  if (!(drop_path >= 0.0 && drop_path < 1.0)) fail("drop_path must lie in [0,1)");
}

nlohmann::json to_json(const ArchConfig& a) {
  return {
      {"image_size", a.image_size},   {"channels", a.channels},
      {"patch_size", a.patch_size},   {"embed_dim", a.embed_dim},
      {"depth", a.depth},             {"heads", a.heads},
      {"mlp_ratio", a.mlp_ratio},     {"decoder_dim", a.decoder_dim},
      {"decoder_depth", a.decoder_depth}, {"decoder_heads", a.decoder_heads},
      {"mask_ratio", a.mask_ratio},   {"num_classes", a.num_classes},
      {"drop_path", a.drop_path},     {"pooling", a.pooling == Pooling::Mean ? "mean" : "cls"},
      {"norm_pix_loss", a.norm_pix_loss},
  };
}

ArchConfig arch_from_json(const nlohmann::json& j) {
  ArchConfig a;
  try {
    a.image_size = j.at("image_size").get<int>();
    a.channels = j.at("channels").get<int>();
    a.patch_size = j.at("patch_size").get<int>();
    a.embed_dim = j.at("embed_dim").get<int>();
    a.depth = j.at("depth").get<int>();
    a.heads = j.at("heads").get<int>();
    a.mlp_ratio = j.at("mlp_ratio").get<double>();
    a.decoder_dim = j.at("decoder_dim").get<int>();
    a.decoder_depth = j.at("decoder_depth").get<int>();
    a.decoder_heads = j.at("decoder_heads").get<int>();
    a.mask_ratio = j.at("mask_ratio").get<double>();
    a.num_classes = j.at("num_classes").get<int>();
    a.drop_path = j.at("drop_path").get<double>();
    a.pooling = j.at("pooling").get<std::string>() == "cls" ? Pooling::ClassToken : Pooling::Mean;
    a.norm_pix_loss = j.at("norm_pix_loss").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedFile, std::string("arch config: ") + e.what());
  }
  a.validate();
  return a;
}

}  // namespace weedid::nn
