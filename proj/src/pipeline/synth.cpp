#include "weedid/pipeline/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "weedid/core/random.hpp"
#include "weedid/error.hpp"

namespace weedid::pipeline {

namespace {

constexpr double kPi = std::numbers::pi;

// Class family parameters. Angles in radians, frequencies in cycles per image,
// positions and radii as fractions of the image side.
struct Prototype {
  double angle = 0.0;
  double freq = 3.0;
  double phase = 0.0;
  double angle2 = 0.0;
  double freq2 = 5.0;
  double grating_mix = 0.5;
  double blob_x = 0.5, blob_y = 0.5;
  double blob_rx = 0.2, blob_ry = 0.1;
  double blob_tilt = 0.0;
  double blob_level = 0.3;
  double background = 0.5;
  double tint = 0.0;  // per-channel offset slope for multi-channel images
};

Prototype draw_prototype(Rng& rng) {
  Prototype p;
  p.angle = uniform01(rng) * kPi;
  p.freq = 2.0 + 5.0 * uniform01(rng);
  p.phase = uniform01(rng) * 2.0 * kPi;
  p.angle2 = uniform01(rng) * kPi;
  p.freq2 = 3.0 + 6.0 * uniform01(rng);
  p.grating_mix = 0.2 + 0.6 * uniform01(rng);
  p.blob_x = 0.3 + 0.4 * uniform01(rng);
  p.blob_y = 0.3 + 0.4 * uniform01(rng);
  p.blob_rx = 0.1 + 0.2 * uniform01(rng);
  p.blob_ry = 0.05 + 0.15 * uniform01(rng);
  p.blob_tilt = uniform01(rng) * kPi;
  p.blob_level = (uniform01(rng) < 0.5 ? -1.0 : 1.0) * (0.15 + 0.2 * uniform01(rng));
  p.background = 0.35 + 0.3 * uniform01(rng);
  p.tint = 0.2 * (uniform01(rng) - 0.5);
  return p;
}

double lerp(double a, double b, double t) { return a + (b - a) * t; }

// Angles live on a half circle; blend along the shorter arc and wrap into
// [0, pi) so equal orientations get equal values.
double lerp_angle(double a, double b, double t) {
  const double d = std::remainder(b - a, kPi);
  double r = std::fmod(a + d * t, kPi);
  if (r < 0.0) r += kPi;
  return r;
}

Prototype blend(const Prototype& p, const Prototype& q, double t) {
  Prototype r;
  r.angle = lerp_angle(p.angle, q.angle, t);
  r.freq = lerp(p.freq, q.freq, t);
  r.phase = lerp(p.phase, q.phase, t);
  r.angle2 = lerp_angle(p.angle2, q.angle2, t);
  r.freq2 = lerp(p.freq2, q.freq2, t);
  r.grating_mix = lerp(p.grating_mix, q.grating_mix, t);
  r.blob_x = lerp(p.blob_x, q.blob_x, t);
  r.blob_y = lerp(p.blob_y, q.blob_y, t);
  r.blob_rx = lerp(p.blob_rx, q.blob_rx, t);
  r.blob_ry = lerp(p.blob_ry, q.blob_ry, t);
  r.blob_tilt = lerp_angle(p.blob_tilt, q.blob_tilt, t);
  r.blob_level = lerp(p.blob_level, q.blob_level, t);
  r.background = lerp(p.background, q.background, t);
  r.tint = lerp(p.tint, q.tint, t);
  return r;
}

struct Instance {
  Prototype shape;
  double warp_amp = 0.0;
  double warp_freq = 1.0;
  double warp_phase = 0.0;
  double magnitude = 0.0;  // deformation draw in [0, 1]
};

Instance deform(const Prototype& proto, double variation, Rng& rng) {
  Instance inst;
  inst.shape = proto;
  const double u = uniform01(rng);
  inst.magnitude = u;
  const double v = variation;
  auto jitter = [&](double scale) { return v * scale * (2.0 * uniform01(rng) - 1.0); };
  auto& s = inst.shape;
  s.phase += v * 2.0 * kPi * uniform01(rng);
  s.angle += jitter(0.15);
  s.angle2 += jitter(0.15);
  s.freq *= 1.0 + jitter(0.1);
  s.freq2 *= 1.0 + jitter(0.1);
  s.blob_x += jitter(0.2);
  s.blob_y += jitter(0.2);
  // Growth: later draws carry larger, more tilted blobs.
  const double growth = 1.0 + v * (u - 0.5);
  s.blob_rx *= growth;
  s.blob_ry *= growth;
  s.blob_tilt += jitter(0.3);
  s.background += jitter(0.05);
  inst.warp_amp = v * u * 0.04;
  inst.warp_freq = 1.0 + 2.0 * uniform01(rng);
  inst.warp_phase = 2.0 * kPi * uniform01(rng);
  return inst;
}

Raster render(const Instance& inst, int size, int channels, double noise, Rng& rng) {
  const auto& s = inst.shape;
  Raster img(size, size, channels);
  const double c1 = std::cos(s.angle), s1 = std::sin(s.angle);
  const double c2 = std::cos(s.angle2), s2 = std::sin(s.angle2);
  const double ct = std::cos(s.blob_tilt), st = std::sin(s.blob_tilt);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double fx = (x + 0.5) / size, fy = (y + 0.5) / size;
      // Smooth displacement field.
      fx += inst.warp_amp * std::sin(2.0 * kPi * inst.warp_freq * fy + inst.warp_phase);
      fy += inst.warp_amp * std::cos(2.0 * kPi * inst.warp_freq * fx + inst.warp_phase);
      const double g1 = std::sin(2.0 * kPi * s.freq * (c1 * fx + s1 * fy) + s.phase);
      const double g2 = std::sin(2.0 * kPi * s.freq2 * (c2 * fx + s2 * fy) + 0.5 * s.phase);
      const double grating = (1.0 - s.grating_mix) * g1 + s.grating_mix * g2;
      const double dx = fx - s.blob_x, dy = fy - s.blob_y;
      const double rx = (ct * dx + st * dy) / s.blob_rx, ry = (-st * dx + ct * dy) / s.blob_ry;
      const double blob = std::exp(-0.5 * (rx * rx + ry * ry) * 2.0);
      const double base = s.background + 0.2 * grating + s.blob_level * blob;
      for (int c = 0; c < channels; ++c) {
        const double v = base + s.tint * (c - 0.5 * (channels - 1)) + noise * normal(rng);
        img.at(y, x, c) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return img;
}

}  // namespace

void SynthConfig::validate() const {
  if (num_classes < 2) throw Error(ErrorCode::ConfigError, "synthetic corpus needs at least 2 classes");
  if (examples_per_class < 2) throw Error(ErrorCode::ConfigError, "synthetic corpus needs at least 2 examples per class");
  if (image_size < 4 || channels < 1) throw Error(ErrorCode::ConfigError, "invalid synthetic image shape");
  if (intra_class_variation < 0.0) throw Error(ErrorCode::ConfigError, "intra_class_variation must be nonnegative");
  if (pixel_noise < 0.0) throw Error(ErrorCode::ConfigError, "pixel_noise must be nonnegative");
  for (const auto& p : lookalike_pairs) {
    if (p.similarity < 0.0 || p.similarity > 1.0)
      throw Error(ErrorCode::ConfigError, "lookalike similarity must lie in [0, 1]");
    if (p.a < 0 || p.b < 0 || p.a >= num_classes || p.b >= num_classes || p.a == p.b)
      throw Error(ErrorCode::ConfigError, "lookalike pair names an invalid class");
  }
}

Corpus generate_synthetic(const SynthConfig& config) {
  config.validate();
  std::vector<Prototype> protos;
  for (int c = 0; c < config.num_classes; ++c) {
    Rng rng = make_rng(config.seed, 1000 + static_cast<std::uint64_t>(c));
    protos.push_back(draw_prototype(rng));
  }
  std::vector<std::string> pair_tag(config.num_classes);
  const auto originals = protos;
  for (const auto& p : config.lookalike_pairs) {
    // Both members move halfway-scaled toward their shared midpoint.
    const auto mid = blend(originals[p.a], originals[p.b], 0.5);
    protos[p.a] = blend(protos[p.a], mid, p.similarity);
    protos[p.b] = blend(protos[p.b], mid, p.similarity);
    const auto tag = "lookalike:" + std::to_string(std::min(p.a, p.b)) + "-" + std::to_string(std::max(p.a, p.b));
    pair_tag[p.a] = pair_tag[p.b] = tag;
  }

  std::vector<TaxonRecord> taxa;
  for (int c = 0; c < config.num_classes; ++c) {
    const auto genus = "Synthgenus" + std::to_string(c / 2);
    taxa.push_back({c, genus + " species" + std::to_string(c), "synthetic weed " + std::to_string(c), genus,
                    "Synthaceae", config.examples_per_class});
  }
  Corpus corpus{ClassSet("synth-" + std::to_string(config.num_classes), taxa), {}};
  for (int c = 0; c < config.num_classes; ++c) {
    Rng rng = make_rng(config.seed, 2000 + static_cast<std::uint64_t>(c) + 1000000 * config.instance_stream);
    for (int i = 0; i < config.examples_per_class; ++i) {
      const auto inst = deform(protos[c], config.intra_class_variation, rng);
      LabeledExample ex;
      ex.id = "synth-c" + std::to_string(c) + "-" + std::to_string(i);
      ex.image = render(inst, config.image_size, config.channels, config.pixel_noise, rng);
      ex.label = c;
      ex.strata_tags.insert(inst.magnitude < 0.5 ? "early" : "late");
      if (!pair_tag[c].empty()) ex.strata_tags.insert(pair_tag[c]);
      corpus.examples.push_back(std::move(ex));
    }
  }
  return corpus;
}

std::vector<Raster> generate_ood(std::size_t count, int image_size, int channels, std::uint64_t seed) {
  std::vector<Raster> out;
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = make_rng(seed, 5000 + i);
    Raster img(image_size, image_size, channels);
    const auto kind = i % 3;
    const int cell = 2 + static_cast<int>(uniform_index(rng, 6));
    const double cx = uniform01(rng), cy = uniform01(rng), ring = 4.0 + 8.0 * uniform01(rng);
    const double lo = 0.1 * uniform01(rng), hi = 0.9 + 0.1 * uniform01(rng);
    // Coarse random grid, bilinearly upsampled, for smooth noise.
    const int g = 5;
    std::vector<double> grid(static_cast<std::size_t>(g) * g);
    for (auto& v : grid) v = uniform01(rng);
    for (int y = 0; y < image_size; ++y)
      for (int x = 0; x < image_size; ++x) {
        double v = 0.0;
        const double fx = (x + 0.5) / image_size, fy = (y + 0.5) / image_size;
        if (kind == 0) {
          v = ((x / cell + y / cell) % 2) ? hi : lo;
        } else if (kind == 1) {
          const double r = std::hypot(fx - cx, fy - cy);
          v = 0.5 + 0.5 * std::cos(2.0 * kPi * ring * r);
        } else {
          const double gx = fx * (g - 1), gy = fy * (g - 1);
          const int x0 = std::min(static_cast<int>(gx), g - 2), y0 = std::min(static_cast<int>(gy), g - 2);
          const double tx = gx - x0, ty = gy - y0;
          auto at = [&](int xx, int yy) { return grid[static_cast<std::size_t>(yy) * g + xx]; };
          v = (1 - ty) * ((1 - tx) * at(x0, y0) + tx * at(x0 + 1, y0)) + ty * ((1 - tx) * at(x0, y0 + 1) + tx * at(x0 + 1, y0 + 1));
        }
        for (int c = 0; c < channels; ++c) img.at(y, x, c) = std::clamp(v + 0.03 * normal(rng), 0.0, 1.0);
      }
    out.push_back(std::move(img));
  }
  return out;
}

nlohmann::json to_json(const SynthConfig& c) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : c.lookalike_pairs) pairs.push_back({{"a", p.a}, {"b", p.b}, {"similarity", p.similarity}});
  return {{"num_classes", c.num_classes},
          {"examples_per_class", c.examples_per_class},
          {"image_size", c.image_size},
          {"channels", c.channels},
          {"intra_class_variation", c.intra_class_variation},
          {"lookalike_pairs", pairs},
          {"pixel_noise", c.pixel_noise},
          {"seed", c.seed},
          {"instance_stream", c.instance_stream}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  try {
    SynthConfig c;
    c.num_classes = j.value("num_classes", c.num_classes);
    c.examples_per_class = j.value("examples_per_class", c.examples_per_class);
    c.image_size = j.value("image_size", c.image_size);
    c.channels = j.value("channels", c.channels);
    c.intra_class_variation = j.value("intra_class_variation", c.intra_class_variation);
    c.pixel_noise = j.value("pixel_noise", c.pixel_noise);
    c.seed = j.value("seed", c.seed);
    c.instance_stream = j.value("instance_stream", c.instance_stream);
    if (j.contains("lookalike_pairs"))
      for (const auto& p : j.at("lookalike_pairs"))
        c.lookalike_pairs.push_back({p.at("a").get<int>(), p.at("b").get<int>(), p.at("similarity").get<double>()});
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("synthetic config: ") + e.what());
  }
}

SynthConfig default_synth_config(std::uint64_t seed) {
  SynthConfig c;
  c.seed = seed;
  c.lookalike_pairs = {{0, 1, 0.6}, {2, 3, 0.6}};
  return c;
}

}  // namespace weedid::pipeline
