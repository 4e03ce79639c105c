#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "weedid/core/dataset.hpp"
#include "weedid/core/taxonomy.hpp"
#include "weedid/nnkit/model.hpp"
#include "weedid/pipeline/corpus.hpp"
#include "weedid/pipeline/synth.hpp"
#include "weedid/pipeline/train.hpp"

namespace weedid::pipeline {

/// Held-out evaluation of one checkpoint at the end of a stage.
struct StageReport {
  std::string stage;
  std::string dataset;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double top1 = 0.0;
  double top5 = 0.0;  // top-min(5, C)
  std::vector<std::string> class_names;
  std::vector<double> per_class_accuracy;  // one entry per class, 0 for classes absent from the test set
  std::string checkpoint;                  // checkpoint digest
};

nlohmann::json to_json(const StageReport& r);
/// Aligned columns: a summary block then one row per class.
std::string to_text(const StageReport& r);

/// Evaluates `ckpt` on `test` (labels index `classes`).
StageReport evaluate_stage(const nn::ModelCheckpoint& ckpt, const ClassSet& classes,
                           std::span<const LabeledExample> test, const std::string& stage,
                           const std::string& dataset);

// Every stage records where its data came from so the lineage can be
// replayed. `source` is free-form JSON understood by a CorpusResolver; the
// built-in resolver knows {"kind":"synth","config":{...}} and
// {"kind":"file","path":"..."}. The corpus digest is always recorded too.
inline nlohmann::json inline_source() { return {{"kind", "inline"}}; }
nlohmann::json synth_source(const SynthConfig& config);
nlohmann::json file_source(const std::string& path);

struct PretrainOptions {
  MaeConfig mae;
  nlohmann::json data_source = inline_source();
};

struct PretrainResult {
  nn::ModelCheckpoint checkpoint;
  std::vector<double> loss_trace;  // one value per step
};

/// Fresh encoder (seeded) trained for `steps` masked-autoencoder steps on the
/// corpus images; labels are ignored. steps = 0 returns the initial weights.
/// Throws EmptyInput for an empty corpus, ShapeMismatch when image size or
/// channels differ from `arch`.
PretrainResult pretrain_mae(const Corpus& corpus, const nn::ArchConfig& arch, int steps, std::uint64_t seed,
                            const PretrainOptions& options = {});

/// Second pretraining stage on another corpus, starting from `parent`.
PretrainResult continue_pretraining(const nn::ModelCheckpoint& parent, const Corpus& corpus, int steps,
                                    std::uint64_t seed, const PretrainOptions& options = {});

struct FinetuneOptions {
  SupervisedConfig supervised;  // epochs is taken from the call argument
  // Fit the fresh head on frozen features before unfreezing the encoder.
  bool probe_init = true;
  HeadConfig probe;
  int per_class_test = 20;
  std::optional<std::uint64_t> split_seed;  // defaults to the stage seed
  nlohmann::json data_source = inline_source();
  std::string dataset_name = "corpus";
};

struct FinetuneResult {
  nn::ModelCheckpoint checkpoint;
  StageReport report;
  std::vector<double> epoch_loss;
  DatasetSplit split;
};

/// End-to-end fine-tuning with a classifier head sized to the corpus class
/// set; the MAE decoder is dropped. The report covers the held-out split.
/// Throws ClassCountMismatch when the checkpoint already carries a head of a
/// different width, ShapeMismatch on image dimensions.
FinetuneResult finetune_classifier(const nn::ModelCheckpoint& ckpt, const Corpus& corpus, int epochs,
                                   std::uint64_t seed, const FinetuneOptions& options = {});

/// Specialises a global classifier to a subset of its classes: the encoder is
/// kept, the head is re-initialised at |subset| outputs and the model is
/// trained on `local` (whose labels index `subset`). Throws
/// UnknownSubsetClass when a subset name is not a global class or the local
/// corpus does not list the subset classes.
FinetuneResult global_to_local(const nn::ModelCheckpoint& global_ckpt, const ClassSet& global_classes,
                               const ClassSet& subset, const Corpus& local, int epochs, std::uint64_t seed,
                               const FinetuneOptions& options = {});

/// Top-1 of the global model when its argmax is restricted to the subset
/// columns; labels of `test` index `subset`.
double subset_restricted_top1(const nn::ModelCheckpoint& global_ckpt, const ClassSet& global_classes,
                              const ClassSet& subset, std::span<const LabeledExample> test);

struct RefineRow {
  int class_id = 0;
  std::string class_name;
  std::size_t images_added = 0;
  double acc_before = 0.0;
  double acc_after = 0.0;
};

struct RefineOptions {
  SupervisedConfig supervised;  // epochs is taken from the call argument
  int per_class_test = 20;
  std::optional<std::uint64_t> split_seed;
  nlohmann::json base_source = inline_source();
  nlohmann::json extra_source = inline_source();
};

struct RefineResult {
  nn::ModelCheckpoint checkpoint;
  std::vector<RefineRow> rows;
  StageReport before;
  StageReport after;
};

/// Continues fine-tuning on the union of the base train split and `extra`
/// (labels index the base class set), then reports per-class accuracy on the
/// base held-out split before and after. Throws UnknownClass for extra labels
/// outside the class set.
RefineResult refine_with_expert(const nn::ModelCheckpoint& local_ckpt, const Corpus& base, const Corpus& extra,
                                int epochs, std::uint64_t seed, const RefineOptions& options = {});

nlohmann::json to_json(std::span<const RefineRow> rows);
std::string refine_to_text(std::span<const RefineRow> rows);

struct KShotSpec {
  std::optional<int> k;  // nullopt = all train examples; 0 = zero-shot
  int trials = 10;
  std::uint64_t seed = 0;
  // Target scientific name -> source scientific name; required for k = 0.
  std::optional<std::map<std::string, std::string>> class_mapping;
  // Default: head only for k <= 20, whole model beyond that and for k = all.
  std::optional<bool> full_finetune;
  int per_class_test = 20;
  int epochs = 10;
  HeadConfig head;
  SupervisedConfig supervised;
  int threads = 1;  // trials run in parallel when > 1
  std::string dataset_name = "target";

  void validate() const;
};

struct KShotRow {
  std::string dataset;
  int classes = 0;
  std::string k;  // "0", "10", "all", ...
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation over trials
  std::vector<double> trial_accuracy;
  std::size_t n_eval = 0;  // test examples scored per trial
};

/// Zero-shot (k = 0) scores the source head on target test examples whose
/// class maps to a source class; nothing is trained and `ckpt` is untouched.
/// k > 0 samples k train examples per class without replacement per trial,
/// trains a fresh target head (and the encoder when full fine-tuning) and
/// scores the target test split. Throws MissingMapping (k = 0 without a
/// mapping, or no overlap), UnknownClass (mapping names a class missing from
/// either side), InsufficientExamples (a class has fewer than k train
/// examples).
KShotRow kshot_evaluate(const nn::ModelCheckpoint& ckpt, const ClassSet& source_classes, const Corpus& target,
                        const KShotSpec& spec);

nlohmann::json to_json(const KShotRow& row);
/// One line per dataset with columns Dataset, Classes and one column per k
/// present in the rows, cells formatted "mean ± sd".
std::string kshot_table_text(std::span<const KShotRow> rows);

/// Reads a two-column CSV with header `target,source`.
std::map<std::string, std::string> load_class_mapping(const std::string& path);

using CorpusResolver = std::function<Corpus(const nlohmann::json& source)>;

/// Resolves "synth" sources by regeneration and "file" sources by loading.
Corpus default_resolver(const nlohmann::json& source);

/// Rebuilds a checkpoint from its lineage alone. Each step checks the parent
/// digest and the resolved corpus digest before training. Throws ConfigError
/// on a mismatch or an unknown stage.
nn::ModelCheckpoint replay_lineage(std::span<const nn::LineageEntry> lineage,
                                   const CorpusResolver& resolve = default_resolver);

}  // namespace weedid::pipeline
