#include "context.hpp"

#include <algorithm>

#include "weedid/error.hpp"
#include "weedid/io/digest.hpp"
#include "weedid/io/files.hpp"

namespace weedid::cli {

namespace fs = std::filesystem;

RunContext::RunContext(std::string command, std::vector<std::string> argv, Globals globals, std::ostream& out,
                       std::ostream& err)
    : command_(std::move(command)), argv_(std::move(argv)), globals_(std::move(globals)), out_(out), err_(err) {
  if (!globals_.config_path.empty()) {
    config_ = io::KeyValueConfig::load(input(globals_.config_path));
  }
  if (!globals_.out.empty()) fs::create_directories(globals_.out);
}

fs::path RunContext::input(const std::string& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::MissingFile, "input not found: " + path);
  std::string digest;
  if (fs::is_regular_file(path)) digest = io::sha256_file(path);
  inputs_.push_back({{"path", path}, {"sha256", digest}});
  return path;
}

fs::path RunContext::out_path(const std::string& name) const {
  if (globals_.out.empty()) throw Error(ErrorCode::ConfigError, "this command needs --out");
  return fs::path(globals_.out) / name;
}

fs::path RunContext::write(const std::string& name, std::string_view contents) {
  const auto p = out_path(name);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  io::write_file_atomic(p, contents);
  record_output(p);
  return p;
}

void RunContext::record_output(const fs::path& path) {
  outputs_.push_back({{"path", fs::relative(path, globals_.out).generic_string()}, {"sha256", io::sha256_file(path)}});
}

void RunContext::log(const std::string& line) {
  if (globals_.verbose > 0) err_ << "[" << command_ << "] " << line << "\n";
}

void RunContext::finish(const nlohmann::json& summary) {
  if (globals_.out.empty()) return;
  nlohmann::json run = {{"command", command_},        {"argv", argv_},     {"seed", globals_.seed},
                        {"settings", config_.entries()}, {"inputs", inputs_}, {"outputs", outputs_},
                        {"summary", summary}};
  auto name = command_;
  std::replace(name.begin(), name.end(), ' ', '_');
  io::write_file_atomic(fs::path(globals_.out) / ("run_" + name + ".json"), run.dump(2) + "\n");
}

nn::ArchConfig arch_from(const io::KeyValueConfig& c, nn::ArchConfig a) {
  a.patch_size = static_cast<int>(c.get_int("arch.patch_size", a.patch_size));
  a.embed_dim = static_cast<int>(c.get_int("arch.embed_dim", a.embed_dim));
  a.depth = static_cast<int>(c.get_int("arch.depth", a.depth));
  a.heads = static_cast<int>(c.get_int("arch.heads", a.heads));
  a.mlp_ratio = c.get_double("arch.mlp_ratio", a.mlp_ratio);
  a.decoder_dim = static_cast<int>(c.get_int("arch.decoder_dim", a.decoder_dim));
  a.decoder_depth = static_cast<int>(c.get_int("arch.decoder_depth", a.decoder_depth));
  a.decoder_heads = static_cast<int>(c.get_int("arch.decoder_heads", a.decoder_heads));
  a.mask_ratio = c.get_double("arch.mask_ratio", a.mask_ratio);
  a.drop_path = c.get_double("arch.drop_path", a.drop_path);
  a.norm_pix_loss = c.get_bool("arch.norm_pix_loss", a.norm_pix_loss);
  const auto pooling = c.get_or("arch.pooling", a.pooling == nn::Pooling::Mean ? "mean" : "cls");
  if (pooling == "mean") a.pooling = nn::Pooling::Mean;
  else if (pooling == "cls") a.pooling = nn::Pooling::ClassToken;
  else throw Error(ErrorCode::ConfigError, "arch.pooling must be mean or cls");
  return a;
}

pipeline::MaeConfig mae_from(const io::KeyValueConfig& c) {
  pipeline::MaeConfig m;
  m.batch_size = static_cast<int>(c.get_int("mae.batch_size", m.batch_size));
  m.lr = c.get_double("mae.lr", m.lr);
  m.weight_decay = c.get_double("mae.weight_decay", m.weight_decay);
  m.warmup_steps = static_cast<int>(c.get_int("mae.warmup_steps", m.warmup_steps));
  return m;
}

pipeline::SupervisedConfig supervised_from(const io::KeyValueConfig& c) {
  pipeline::SupervisedConfig s;
  s.batch_size = static_cast<int>(c.get_int("supervised.batch_size", s.batch_size));
  s.lr = c.get_double("supervised.lr", s.lr);
  s.weight_decay = c.get_double("supervised.weight_decay", s.weight_decay);
  s.layer_decay = c.get_double("supervised.layer_decay", s.layer_decay);
  s.drop_path = c.get_double("supervised.drop_path", s.drop_path);
  s.warmup_epochs = static_cast<int>(c.get_int("supervised.warmup_epochs", s.warmup_epochs));
  auto& a = s.augment;
  a.flip = c.get_double("augment.flip", a.flip);
  a.crop = c.get_double("augment.crop", a.crop);
  a.crop_padding = static_cast<int>(c.get_int("augment.crop_padding", a.crop_padding));
  a.brightness_contrast = c.get_double("augment.brightness_contrast", a.brightness_contrast);
  a.mixup_alpha = c.get_double("augment.mixup_alpha", a.mixup_alpha);
  a.cutmix_alpha = c.get_double("augment.cutmix_alpha", a.cutmix_alpha);
  return s;
}

pipeline::HeadConfig head_from(const io::KeyValueConfig& c) {
  pipeline::HeadConfig h;
  h.epochs = static_cast<int>(c.get_int("head.epochs", h.epochs));
  h.lr = c.get_double("head.lr", h.lr);
  h.weight_decay = c.get_double("head.weight_decay", h.weight_decay);
  return h;
}

}  // namespace weedid::cli
