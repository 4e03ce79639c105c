#pragma once

// Central finite-difference oracle for the ViT kernels. Test-only: evaluates
// the loss through the public forward functions and never touches backprop.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "weedid/core/random.hpp"
#include "weedid/nnkit/model.hpp"
#include "weedid/nnkit/vit.hpp"

namespace weedid::testing {

struct BlockCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Checks up to `per_block` entries of every parameter tensor: the entry with
// the largest analytic gradient plus uniformly sampled others. Step size is
// 1e-4 relative to max(|theta|, 0.1).
inline std::vector<BlockCheck> check_gradients(const nn::ModelCheckpoint& base, const nn::GradientSet& analytic,
                                               const std::function<double(const nn::ModelCheckpoint&)>& loss,
                                               std::size_t per_block, std::uint64_t seed) {
  std::vector<BlockCheck> out;
  nn::ModelCheckpoint probe = base;
  Rng rng = make_rng(seed, 77);
  for (std::size_t t = 0; t < base.params().size(); ++t) {
    const auto& values = base.params().tensor(t).values;
    const auto& grad = analytic.tensor(t).values;
    std::vector<std::size_t> picks;
    if (values.size() <= per_block) {
      for (std::size_t i = 0; i < values.size(); ++i) picks.push_back(i);
    } else {
      picks.push_back(static_cast<std::size_t>(
          std::max_element(grad.begin(), grad.end(), [](double a, double b) { return std::abs(a) < std::abs(b); }) -
          grad.begin()));
      while (picks.size() < per_block) picks.push_back(uniform_index(rng, values.size()));
    }
    BlockCheck check{base.params().name(t), 0.0, picks.size()};
    for (auto idx : picks) {
      const double theta = values[idx];
      const double h = 1e-4 * std::max(std::abs(theta), 0.1);
      probe.mutable_params().tensor(t).values[idx] = theta + h;
      const double up = loss(probe);
      probe.mutable_params().tensor(t).values[idx] = theta - h;
      const double down = loss(probe);
      probe.mutable_params().tensor(t).values[idx] = theta;
      const double numeric = (up - down) / (2.0 * h);
      check.max_rel_error = std::max(check.max_rel_error, relative_error(grad[idx], numeric));
    }
    out.push_back(check);
  }
  return out;
}

inline std::vector<Raster> random_rasters(const nn::ArchConfig& arch, std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed, 5);
  std::vector<Raster> out;
  for (std::size_t i = 0; i < n; ++i) {
    Raster r(arch.image_size, arch.image_size, arch.channels);
    for (auto& v : r.pixels) v = uniform01(rng);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace weedid::testing
