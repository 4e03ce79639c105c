#pragma once

#include <optional>
#include <string>
#include <vector>

#include "context.hpp"

namespace weedid::cli {

// Where a command reads its labeled data from: a corpus file written by
// `synth`, or a folder of PNGs with a `filename,label[,tags]` CSV.
struct CorpusInput {
  std::string corpus;
  std::string images;
  std::string labels;
  std::string class_set;
  int image_size = 32;
  int channels = 1;
};

struct AcquireBuildArgs {
  std::string class_set, index, template_ = "{species}/{split}/{filename}";
  std::size_t per_class = 0;
};
struct AcquireGroupArgs {
  std::string manifest;
  int groups = 1;
};
struct AcquireRunArgs {
  std::string manifest, root, groups_file;
  int groups = 1;
  int group = -1;
  int max_per_host = 4;
  int max_concurrency = 8;
  std::optional<double> rate_limit;
  bool resume = false;
  int max_attempts = 5;
  int backoff_ms = 500;
};
struct AcquireLayoutArgs {
  std::string manifest, root, journal, template_ = "{species}/{filename}";
};
struct SynthArgs {
  int classes = 12, per_class = 60, size = 32, channels = 1;
  double variation = 0.6, noise = 0.05;
  std::vector<std::string> similar;
  std::uint64_t instance_stream = 0;
};
struct PretrainArgs {
  CorpusInput data;
  std::string init;
  std::optional<int> steps;  // default: [mae] steps, else 500
};
struct FinetuneArgs {
  CorpusInput data;
  std::string model;
  std::optional<int> epochs;  // default: [supervised] epochs, else 10
  int per_class_test = 20;
  bool no_probe = false;
};
struct LocalArgs {
  CorpusInput data;
  std::string model, global_classes, subset;
  std::optional<int> epochs;  // default: [supervised] epochs, else 10
  int per_class_test = 20;
};
struct RefineArgs {
  CorpusInput data;
  std::string model, extra;
  std::optional<int> epochs;
  int per_class_test = 20;
};
struct KShotArgs {
  CorpusInput data;
  std::string model, source_classes, mapping;
  std::vector<std::string> k{"10"};
  int trials = 10;
  std::optional<int> epochs;  // default: [supervised] epochs, else 10
  int per_class_test = 20;
  int threads = 1;
  bool full = false, head_only = false;
};
struct CalibrateArgs {
  CorpusInput data;
  std::string model, ood_corpus;
  int per_class_test = 20;
  double alpha = 0.05;
  double target_tpr = 0.95;
  int ood_count = 0;  // 0 = as many as in-distribution examples
};
struct EvaluateArgs {
  CorpusInput data;
  std::string model, calib;
  int per_class_test = 20;
  double threshold = 0.8;
  double ceiling = 0.8;
};
struct ReportArgs {
  std::string per_class;
  int bins = 10;
};
struct ServeArgs {
  std::string model, classes, calib, host;
  int port = -1;
};

void run_acquire_build(RunContext& ctx, const AcquireBuildArgs& a);
void run_acquire_group(RunContext& ctx, const AcquireGroupArgs& a);
/// Returns false when some entries failed for good.
bool run_acquire_run(RunContext& ctx, const AcquireRunArgs& a);
void run_acquire_layout(RunContext& ctx, const AcquireLayoutArgs& a);
void run_synth(RunContext& ctx, const SynthArgs& a);
void run_pretrain(RunContext& ctx, const PretrainArgs& a);
void run_finetune(RunContext& ctx, const FinetuneArgs& a);
void run_local(RunContext& ctx, const LocalArgs& a);
void run_refine(RunContext& ctx, const RefineArgs& a);
void run_kshot(RunContext& ctx, const KShotArgs& a);
void run_calibrate_ood(RunContext& ctx, const CalibrateArgs& a);
void run_calibrate_conformal(RunContext& ctx, const CalibrateArgs& a);
void run_evaluate(RunContext& ctx, const EvaluateArgs& a);
void run_report(RunContext& ctx, const ReportArgs& a);
void run_serve(RunContext& ctx, const ServeArgs& a);

}  // namespace weedid::cli
