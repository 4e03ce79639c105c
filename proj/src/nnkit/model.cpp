#include "weedid/nnkit/model.hpp"

#include <atomic>
#include <cmath>

#include "weedid/core/random.hpp"
#include "weedid/error.hpp"
#include "weedid/io/container.hpp"
#include "weedid/io/digest.hpp"
#include "weedid/io/files.hpp"

namespace weedid::nn {
namespace {

constexpr char kMagic[] = "WEEDCKPT";

std::uint64_t next_revision() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

std::uint64_t name_stream(const std::string& name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void xavier_uniform(Tensor& t, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
  for (auto& v : t.values) v = (2.0 * uniform01(rng) - 1.0) * limit;
}

void fill_normal(Tensor& t, Rng& rng, double stddev) {
  for (auto& v : t.values) v = normal(rng, 0.0, stddev);
}

// Fixed 2-D sine-cosine table; row 0 (class token) stays zero.
void sincos_2d(Tensor& t, int grid, Rng& rng) {
  const auto dim = static_cast<int>(t.cols());
  if (dim % 4 != 0) {
    fill_normal(t, rng, 0.02);
    return;
  }
  const int quarter = dim / 4;
  for (int r = 0; r < grid; ++r) {
    for (int c = 0; c < grid; ++c) {
      double* row = t.values.data() + static_cast<std::size_t>(1 + r * grid + c) * dim;
      for (int k = 0; k < quarter; ++k) {
        const double omega = 1.0 / std::pow(10000.0, static_cast<double>(k) / quarter);
        row[k] = std::sin(r * omega);
        row[quarter + k] = std::cos(r * omega);
        row[2 * quarter + k] = std::sin(c * omega);
        row[3 * quarter + k] = std::cos(c * omega);
      }
    }
  }
}

void add_block(ParameterSet& p, const std::string& prefix, std::size_t dim, std::size_t hidden) {
  p.add(prefix + "norm1.weight", {dim});
  p.add(prefix + "norm1.bias", {dim});
  p.add(prefix + "attn.qkv.weight", {dim, 3 * dim});
  p.add(prefix + "attn.qkv.bias", {3 * dim});
  p.add(prefix + "attn.proj.weight", {dim, dim});
  p.add(prefix + "attn.proj.bias", {dim});
  p.add(prefix + "norm2.weight", {dim});
  p.add(prefix + "norm2.bias", {dim});
  p.add(prefix + "mlp.fc1.weight", {dim, hidden});
  p.add(prefix + "mlp.fc1.bias", {hidden});
  p.add(prefix + "mlp.fc2.weight", {hidden, dim});
  p.add(prefix + "mlp.fc2.bias", {dim});
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void initialise(ParameterSet& p, const ArchConfig& arch, std::uint64_t seed, const std::string& only_prefix = "") {
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& name = p.name(i);
    if (!only_prefix.empty() && name.rfind(only_prefix, 0) != 0) continue;
    auto& t = p.tensor(i);
    Rng rng = make_rng(seed, name_stream(name));
    if (name == "cls_token" || name == "mask_token") {
      fill_normal(t, rng, 0.02);
    } else if (name == "pos_embed" || name == "decoder_pos_embed") {
      sincos_2d(t, arch.grid(), rng);
    } else if (name == "head.weight") {
      fill_normal(t, rng, 0.01);
    } else if (ends_with(name, "norm1.weight") || ends_with(name, "norm2.weight") || name == "norm.weight" ||
               name == "decoder_norm.weight") {
      std::fill(t.values.begin(), t.values.end(), 1.0);
    } else if (ends_with(name, ".weight")) {
      xavier_uniform(t, rng);
    }
    // biases stay zero
  }
}

}  // namespace

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::Random: return "random";
    case Stage::Pretrained: return "pretrained";
    case Stage::Finetuned: return "finetuned";
    case Stage::Local: return "local";
  }
  return "random";
}

Stage stage_from_string(const std::string& s) {
  if (s == "random") return Stage::Random;
  if (s == "pretrained") return Stage::Pretrained;
  if (s == "finetuned") return Stage::Finetuned;
  if (s == "local") return Stage::Local;
  throw Error(ErrorCode::MalformedFile, "unknown stage " + s);
}

ModelCheckpoint::ModelCheckpoint(ArchConfig arch, ParameterSet params, std::uint64_t seed, Stage stage)
    : arch_(std::move(arch)), params_(std::move(params)), seed_(seed), stage_(stage), revision_(next_revision()) {}

ParameterSet& ModelCheckpoint::mutable_params() {
  touch();
  return params_;
}

void ModelCheckpoint::touch() { revision_ = next_revision(); }

void ModelCheckpoint::reset_head(int num_classes, std::uint64_t seed) {
  if (num_classes < 0) throw Error(ErrorCode::ConfigError, "num_classes must be >= 0");
  params_.remove_prefix("head.");
  arch_.num_classes = num_classes;
  if (num_classes > 0) {
    params_.add("head.weight", {static_cast<std::size_t>(arch_.embed_dim), static_cast<std::size_t>(num_classes)});
    params_.add("head.bias", {static_cast<std::size_t>(num_classes)});
    initialise(params_, arch_, seed, "head.");
  }
  touch();
}

bool ModelCheckpoint::operator==(const ModelCheckpoint& o) const {
  return arch_ == o.arch_ && params_ == o.params_ && seed_ == o.seed_ && stage_ == o.stage_ && lineage_ == o.lineage_;
}

ModelCheckpoint init_checkpoint(const ArchConfig& arch, std::uint64_t seed) {
  arch.validate();
  const auto D = static_cast<std::size_t>(arch.embed_dim);
  const auto Dd = static_cast<std::size_t>(arch.decoder_dim);
  const auto P = static_cast<std::size_t>(arch.num_patches());
  const auto pd = static_cast<std::size_t>(arch.patch_dim());

  ParameterSet p;
  p.add("patch_embed.weight", {pd, D});
  p.add("patch_embed.bias", {D});
  p.add("cls_token", {D});
  p.add("pos_embed", {P + 1, D});
  for (int b = 0; b < arch.depth; ++b)
    add_block(p, "blocks." + std::to_string(b) + ".", D, static_cast<std::size_t>(arch.mlp_hidden()));
  p.add("norm.weight", {D});
  p.add("norm.bias", {D});
  p.add("decoder_embed.weight", {D, Dd});
  p.add("decoder_embed.bias", {Dd});
  p.add("mask_token", {Dd});
  p.add("decoder_pos_embed", {P + 1, Dd});
  for (int b = 0; b < arch.decoder_depth; ++b)
    add_block(p, "decoder_blocks." + std::to_string(b) + ".", Dd, static_cast<std::size_t>(arch.decoder_mlp_hidden()));
  p.add("decoder_norm.weight", {Dd});
  p.add("decoder_norm.bias", {Dd});
  p.add("decoder_pred.weight", {Dd, pd});
  p.add("decoder_pred.bias", {pd});
  if (arch.num_classes > 0) {
    p.add("head.weight", {D, static_cast<std::size_t>(arch.num_classes)});
    p.add("head.bias", {static_cast<std::size_t>(arch.num_classes)});
  }
  initialise(p, arch, seed);
  ModelCheckpoint ckpt(arch, std::move(p), seed, Stage::Random);
  ckpt.append_lineage({"random", "", seed, {{"arch", to_json(arch)}}});
  return ckpt;
}

int layer_id(const std::string& name, int depth) {
  if (name.rfind("patch_embed.", 0) == 0 || name == "cls_token" || name == "pos_embed") return 0;
  if (name.rfind("blocks.", 0) == 0) {
    const auto dot = name.find('.', 7);
    return std::stoi(name.substr(7, dot - 7)) + 1;
  }
  return depth + 1;
}

bool skip_weight_decay(const std::string& name, const Tensor& t) {
  return t.shape.size() == 1 || name == "cls_token" || name == "pos_embed" || name == "mask_token" ||
         name == "decoder_pos_embed";
}

std::string encode_checkpoint(const ModelCheckpoint& ckpt) {
  io::Container c;
  c.magic = kMagic;
  nlohmann::json params = nlohmann::json::array();
  std::size_t offset = 0;
  for (std::size_t i = 0; i < ckpt.params().size(); ++i) {
    const auto& t = ckpt.params().tensor(i);
    params.push_back({{"name", ckpt.params().name(i)}, {"shape", t.shape}, {"offset", offset}, {"count", t.values.size()}});
    offset += t.values.size();
    c.payload.insert(c.payload.end(), t.values.begin(), t.values.end());
  }
  nlohmann::json lineage = nlohmann::json::array();
  for (const auto& e : ckpt.lineage())
    lineage.push_back({{"stage", e.stage}, {"parent_digest", e.parent_digest}, {"seed", e.seed}, {"settings", e.settings}});
  c.header = {{"format", "weedid-checkpoint"}, {"version", 1},          {"arch", to_json(ckpt.arch())},
              {"seed", ckpt.seed()},           {"stage", to_string(ckpt.stage())}, {"lineage", lineage},
              {"parameters", params}};
  return io::encode_container(c);
}

ModelCheckpoint decode_checkpoint(std::string_view bytes) {
  auto c = io::decode_container(bytes, kMagic);
  try {
    const auto& h = c.header;
    if (h.at("format") != "weedid-checkpoint" || h.at("version") != 1)
      throw Error(ErrorCode::MalformedFile, "not a version-1 checkpoint");
    auto arch = arch_from_json(h.at("arch"));
    ParameterSet params;
    for (const auto& entry : h.at("parameters")) {
      auto& t = params.add(entry.at("name").get<std::string>(), entry.at("shape").get<std::vector<std::size_t>>());
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto count = entry.at("count").get<std::size_t>();
      if (count != t.values.size() || offset + count > c.payload.size())
        throw Error(ErrorCode::MalformedFile, "parameter directory does not match payload");
      std::copy_n(c.payload.begin() + static_cast<std::ptrdiff_t>(offset), count, t.values.begin());
    }
    for (std::size_t i = 0; i < params.size(); ++i)
      for (double v : params.tensor(i).values)
        if (!std::isfinite(v)) throw Error(ErrorCode::MalformedFile, "non-finite value in " + params.name(i));
    ModelCheckpoint ckpt(arch, std::move(params), h.at("seed").get<std::uint64_t>(),
                         stage_from_string(h.at("stage").get<std::string>()));
    for (const auto& e : h.at("lineage"))
      ckpt.append_lineage({e.at("stage").get<std::string>(), e.at("parent_digest").get<std::string>(),
                           e.at("seed").get<std::uint64_t>(), e.at("settings")});
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedFile, std::string("checkpoint header: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt) {
  io::write_file_atomic(path, encode_checkpoint(ckpt));
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path));
}

std::string checkpoint_digest(const ModelCheckpoint& ckpt) { return io::sha256_hex(encode_checkpoint(ckpt)); }

}  // namespace weedid::nn
