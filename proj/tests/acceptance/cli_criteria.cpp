#include <map>

#include "criteria.hpp"
#include "process.hpp"
#include "support/temp_dir.hpp"
#include "weedid/io/digest.hpp"

namespace weedid::acceptance {

namespace fs = std::filesystem;

namespace {

// Relative path -> digest of every file under `root`.
std::map<std::string, std::string> tree_digests(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& f : fs::recursive_directory_iterator(root))
    if (f.is_regular_file()) out[fs::relative(f.path(), root).generic_string()] = io::sha256_file(f.path());
  return out;
}

}  // namespace

Outcome cli_determinism() {
  Checks checks;
  testing::TempDir dir("accept-cli");
  const std::string cli = WEEDID_CLI_PATH;
  const std::vector<std::vector<std::string>> chain{
      {cli, "synth", "--seed", "5", "--out", "synth"},
      {cli, "pretrain", "--corpus", "synth/corpus.bin", "--steps", "300", "--seed", "5", "--out", "pretrain"},
      {cli, "finetune", "--model", "pretrain/model.ckpt", "--corpus", "synth/corpus.bin", "--epochs", "3", "--seed",
       "5", "--out", "finetune"},
      {cli, "calibrate", "ood", "--model", "finetune/model.ckpt", "--corpus", "synth/corpus.bin", "--seed", "5",
       "--out", "calib"},
      {cli, "calibrate", "conformal", "--model", "finetune/model.ckpt", "--corpus", "synth/corpus.bin", "--seed", "5",
       "--out", "calib"},
      {cli, "evaluate", "--model", "finetune/model.ckpt", "--corpus", "synth/corpus.bin", "--calib", "calib",
       "--seed", "5", "--out", "evaluate"},
  };
  for (const char* run : {"one", "two"}) {
    fs::create_directories(dir / run);
    for (const auto& args : chain) {
      const int code = run_process(args, dir / run, dir / (std::string(run) + ".log"));
      checks.expect(code == 0, std::string(run) + ": " + args[1] + " exit " + std::to_string(code));
      if (code != 0) return checks.outcome("chain aborted");
    }
  }
  const auto a = tree_digests(dir / "one"), b = tree_digests(dir / "two");
  std::size_t differing = 0;
  for (const auto& [path, digest] : a) {
    auto it = b.find(path);
    if (it == b.end() || it->second != digest) {
      ++differing;
      checks.expect(false, path + " differs");
    }
  }
  checks.expect(a.size() == b.size(), "file sets differ");
  const auto& ckpt = a.count("finetune/model.ckpt") ? a.at("finetune/model.ckpt") : std::string("missing");
  return checks.outcome(std::to_string(a.size()) + " files compared across two runs of synth, pretrain, finetune, "
                        "calibrate ood/conformal and evaluate (seed 5), " + std::to_string(differing) +
                        " differ; fine-tuned checkpoint " + ckpt.substr(0, 16));
}

}  // namespace weedid::acceptance
