#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "weedid/nnkit/arch.hpp"
#include "weedid/nnkit/tensor.hpp"

namespace weedid::nn {

enum class Stage { Random, Pretrained, Finetuned, Local };

std::string to_string(Stage stage);
Stage stage_from_string(const std::string& s);

/// One step of a checkpoint's history: which stage produced it, from which
/// parent (by content digest), and the seed plus settings needed to replay it.
struct LineageEntry {
  std::string stage;
  std::string parent_digest;
  std::uint64_t seed = 0;
  nlohmann::json settings = nlohmann::json::object();

  bool operator==(const LineageEntry&) const = default;
};

class ModelCheckpoint {
 public:
  ModelCheckpoint() = default;
  ModelCheckpoint(ArchConfig arch, ParameterSet params, std::uint64_t seed, Stage stage);

  const ArchConfig& arch() const { return arch_; }
  const ParameterSet& params() const { return params_; }
  /// Mutable access invalidates forward caches taken before the call.
  ParameterSet& mutable_params();

  std::uint64_t seed() const { return seed_; }
  Stage stage() const { return stage_; }
  void set_stage(Stage s) { stage_ = s; }
  const std::vector<LineageEntry>& lineage() const { return lineage_; }
  void append_lineage(LineageEntry entry) { lineage_.push_back(std::move(entry)); }

  /// Token identifying the current parameter values. Copies share it; any
  /// mutation assigns a fresh one.
  std::uint64_t revision() const { return revision_; }

  /// Replaces the classifier head with a freshly initialised one of width
  /// `num_classes` (arch().num_classes is updated).
  void reset_head(int num_classes, std::uint64_t seed);

  bool has_head() const { return arch_.num_classes > 0; }

  /// Equality on arch, parameters, seed, stage and lineage; ignores revision.
  bool operator==(const ModelCheckpoint& other) const;

 private:
  void touch();

  ArchConfig arch_;
  ParameterSet params_;
  std::uint64_t seed_ = 0;
  Stage stage_ = Stage::Random;
  std::vector<LineageEntry> lineage_;
  std::uint64_t revision_ = 0;
};

/// Fresh parameters for `arch`; deterministic under `seed`. Each tensor draws
/// from its own stream keyed by its name, so changing the head width leaves
/// encoder initialisation untouched.
ModelCheckpoint init_checkpoint(const ArchConfig& arch, std::uint64_t seed);

/// Learning-rate depth id used by layer-wise decay: patch/position embeddings
/// and the class token are 0, encoder block i is i+1, the final norm and head
/// are depth+1. Decoder parameters are reported as depth+1 (no decay).
int layer_id(const std::string& param_name, int depth);

/// True for parameters exempt from weight decay (biases, norms, tokens,
/// positional embeddings).
bool skip_weight_decay(const std::string& param_name, const Tensor& t);

std::string encode_checkpoint(const ModelCheckpoint& ckpt);
ModelCheckpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);
/// SHA-256 of the encoded checkpoint.
std::string checkpoint_digest(const ModelCheckpoint& ckpt);

}  // namespace weedid::nn
