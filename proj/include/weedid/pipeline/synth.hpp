#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "weedid/core/dataset.hpp"
#include "weedid/pipeline/corpus.hpp"

namespace weedid::pipeline {

struct LookalikePair {
  int a = 0;
  int b = 1;
  double similarity = 0.5;  // 0 = independent prototypes, 1 = identical
};

struct SynthConfig {
  int num_classes = 12;
  int examples_per_class = 60;
  int image_size = 32;
  int channels = 1;
  // Strength of per-instance deformation (phase, orientation, scale, warp).
  double intra_class_variation = 0.6;
  std::vector<LookalikePair> lookalike_pairs;
  double pixel_noise = 0.05;
  std::uint64_t seed = 0;
  // Selects an independent draw of instances from the same class families.
  // 0 is the labeled corpus; pretraining pools use other values.
  std::uint64_t instance_stream = 0;

  /// Throws Error(ConfigError) when an invariant is broken.
  void validate() const;
};


nlohmann::json to_json(const SynthConfig& config);
SynthConfig synth_config_from_json(const nlohmann::json& j);

/// Procedural texture-and-blob families, one per class. Examples are
/// class-major, examples_per_class each. Each example is tagged
/// "early" or "late" by its deformation draw and "lookalike:<a>-<b>" when its
/// class belongs to a pair. Deterministic under config.seed.
Corpus generate_synthetic(const SynthConfig& config);

/// Images from families disjoint from every class family (checkerboards,
/// radial rings, smooth noise), for OOD calibration.
std::vector<Raster> generate_ood(std::size_t count, int image_size, int channels, std::uint64_t seed);

/// The 12-class task used by the acceptance and pipeline tests.
SynthConfig default_synth_config(std::uint64_t seed = 0);

}  // namespace weedid::pipeline
