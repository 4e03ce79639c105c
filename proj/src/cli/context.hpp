#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "weedid/io/config.hpp"
#include "weedid/nnkit/arch.hpp"
#include "weedid/pipeline/synth.hpp"
#include "weedid/pipeline/train.hpp"

namespace weedid::cli {

struct Globals {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out;
  bool json = false;
  int verbose = 0;
};

// State shared by one command run: settings, output directory and the
// inputs/outputs that end up in the run manifest.
class RunContext {
 public:
  RunContext(std::string command, std::vector<std::string> argv, Globals globals, std::ostream& out,
             std::ostream& err);

  const Globals& globals() const { return globals_; }
  const io::KeyValueConfig& config() const { return config_; }
  std::uint64_t seed() const { return globals_.seed; }
  bool json() const { return globals_.json; }
  std::ostream& out() { return out_; }

  /// Records an input file (path and digest) and returns the path.
  std::filesystem::path input(const std::string& path);
  /// Writes an output file under the output directory and records it.
  std::filesystem::path write(const std::string& name, std::string_view contents);
  /// Records a file written by other means under the output directory.
  void record_output(const std::filesystem::path& path);
  std::filesystem::path out_path(const std::string& name) const;

  void log(const std::string& line);
  /// Writes run_<command>.json: command, arguments, seed, settings, input and output digests.
  void finish(const nlohmann::json& summary = nlohmann::json::object());

 private:
  std::string command_;
  std::vector<std::string> argv_;
  Globals globals_;
  io::KeyValueConfig config_;
  std::ostream& out_;
  std::ostream& err_;
  nlohmann::json inputs_ = nlohmann::json::array();
  nlohmann::json outputs_ = nlohmann::json::array();
};

// Settings read from the config file (with environment overrides); keys
// mirror the module config fields, e.g. `[arch] embed_dim = 64` or
// `[supervised] lr = 5e-4`.
nn::ArchConfig arch_from(const io::KeyValueConfig& c, nn::ArchConfig base = {});
pipeline::MaeConfig mae_from(const io::KeyValueConfig& c);
pipeline::SupervisedConfig supervised_from(const io::KeyValueConfig& c);
pipeline::HeadConfig head_from(const io::KeyValueConfig& c);

}  // namespace weedid::cli
