#include "weedid/pipeline/stages.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "weedid/core/random.hpp"
#include "weedid/error.hpp"
#include "weedid/evalkit/metrics.hpp"
#include "weedid/io/csv.hpp"
#include "weedid/io/files.hpp"

namespace weedid::pipeline {

namespace {

// Seed streams for the pieces of a stage.
constexpr std::uint64_t kHeadInitStream = 11;
constexpr std::uint64_t kProbeStream = 12;
constexpr std::uint64_t kTrainStream = 13;
constexpr std::uint64_t kSupportStream = 14;
constexpr std::uint64_t kTrialStream = 1000;

void check_images(const nn::ArchConfig& arch, std::span<const LabeledExample> examples, const char* what) {
  for (const auto& e : examples)
    if (e.image.height != arch.image_size || e.image.width != arch.image_size || e.image.channels != arch.channels)
      throw Error(ErrorCode::ShapeMismatch, std::string(what) + " image " + e.id + " is " +
                                                std::to_string(e.image.height) + "x" + std::to_string(e.image.width) +
                                                "x" + std::to_string(e.image.channels) + ", model expects " +
                                                std::to_string(arch.image_size) + "x" +
                                                std::to_string(arch.image_size) + "x" + std::to_string(arch.channels));
}

void check_labels(std::span<const LabeledExample> examples, std::size_t C, ErrorCode code, const char* what) {
  for (const auto& e : examples)
    if (e.label < 0 || static_cast<std::size_t>(e.label) >= C)
      throw Error(code, std::string(what) + " example " + e.id + " has label " + std::to_string(e.label) +
                            " outside 0.." + std::to_string(C - 1));
}

std::vector<std::string> names_of(const ClassSet& classes) {
  std::vector<std::string> out;
  for (const auto& t : classes.taxa()) out.push_back(t.scientific_name);
  return out;
}

nlohmann::json data_ref(const nlohmann::json& source, const Corpus& corpus) {
  return {{"source", source}, {"digest", corpus_digest(corpus)}};
}

Corpus resolve_checked(const CorpusResolver& resolve, const nlohmann::json& ref) {
  auto corpus = resolve(ref.at("source"));
  if (corpus_digest(corpus) != ref.at("digest").get<std::string>())
    throw Error(ErrorCode::ConfigError, "replayed data source " + ref.at("source").dump() +
                                            " does not match the recorded digest");
  return corpus;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string lpad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

// Shared body of fine-tuning and global-to-local training. A fresh head is
// optionally fitted on frozen features first, which keeps early full-model
// updates from wrecking the pretrained encoder.
nn::ModelCheckpoint train_classifier(nn::ModelCheckpoint ckpt, int C, std::span<const LabeledExample> train,
                                     bool fresh_head, int epochs, std::uint64_t seed, bool probe_init,
                                     const HeadConfig& probe, SupervisedConfig sup, std::vector<double>* losses) {
  if (fresh_head) {
    ckpt.reset_head(C, mix_seed(seed, kHeadInitStream));
    if (probe_init) train_head(ckpt, train, probe, mix_seed(seed, kProbeStream));
  }
  sup.epochs = epochs;
  auto l = train_supervised(ckpt, train, sup, mix_seed(seed, kTrainStream));
  if (losses) *losses = std::move(l);
  return ckpt;
}

nlohmann::json finetune_settings(int epochs, const FinetuneOptions& o, std::uint64_t split_seed) {
  return {{"epochs", epochs},
          {"supervised", to_json(o.supervised)},
          {"probe_init", o.probe_init},
          {"probe", to_json(o.probe)},
          {"per_class_test", o.per_class_test},
          {"split_seed", split_seed},
          {"dataset_name", o.dataset_name}};
}

FinetuneOptions finetune_options_from(const nlohmann::json& s) {
  FinetuneOptions o;
  o.supervised = supervised_config_from_json(s.at("supervised"));
  o.probe_init = s.at("probe_init").get<bool>();
  o.probe = head_config_from_json(s.at("probe"));
  o.per_class_test = s.at("per_class_test").get<int>();
  o.split_seed = s.at("split_seed").get<std::uint64_t>();
  o.dataset_name = s.at("dataset_name").get<std::string>();
  return o;
}

double accuracy_of(const nn::ModelCheckpoint& ckpt, std::span<const LabeledExample> test) {
  if (test.empty()) return 0.0;
  const auto preds = eval::argmax_rows(predict_logits(ckpt, images_of(test)));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i) hits += preds[i] == test[i].label;
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

// Runs fn(i) for i in [0, n) on up to `threads` workers; the first exception
// is rethrown after all workers stop.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex m;
  std::vector<std::thread> pool;
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(m);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::string k_label(const std::optional<int>& k) { return k ? std::to_string(*k) : "all"; }

}  // namespace

nlohmann::json synth_source(const SynthConfig& config) { return {{"kind", "synth"}, {"config", to_json(config)}}; }
nlohmann::json file_source(const std::string& path) { return {{"kind", "file"}, {"path", path}}; }

// ---- reports ---------------------------------------------------------------

nlohmann::json to_json(const StageReport& r) {
  nlohmann::json per_class = nlohmann::json::array();
  for (std::size_t c = 0; c < r.per_class_accuracy.size(); ++c)
    per_class.push_back({{"class_id", c}, {"scientific_name", r.class_names.at(c)}, {"accuracy", r.per_class_accuracy[c]}});
  return {{"stage", r.stage}, {"dataset", r.dataset}, {"n_train", r.n_train}, {"n_test", r.n_test},
          {"top1", r.top1},   {"top5", r.top5},       {"per_class", per_class}, {"checkpoint", r.checkpoint}};
}

std::string to_text(const StageReport& r) {
  std::ostringstream out;
  out << pad("stage", 12) << r.stage << '\n'
      << pad("dataset", 12) << r.dataset << '\n'
      << pad("train", 12) << r.n_train << '\n'
      << pad("test", 12) << r.n_test << '\n'
      << pad("top1", 12) << fmt("%.4f", r.top1) << '\n'
      << pad("top5", 12) << fmt("%.4f", r.top5) << '\n'
      << pad("checkpoint", 12) << r.checkpoint << '\n';
  std::size_t w = 5;
  for (const auto& n : r.class_names) w = std::max(w, n.size());
  out << '\n' << pad("id", 4) << pad("class", w + 2) << "accuracy\n";
  for (std::size_t c = 0; c < r.per_class_accuracy.size(); ++c)
    out << pad(std::to_string(c), 4) << pad(r.class_names.at(c), w + 2) << fmt("%.4f", r.per_class_accuracy[c])
        << '\n';
  return out.str();
}

StageReport evaluate_stage(const nn::ModelCheckpoint& ckpt, const ClassSet& classes,
                           std::span<const LabeledExample> test, const std::string& stage,
                           const std::string& dataset) {
  const int C = static_cast<int>(classes.size());
  if (ckpt.arch().num_classes != C)
    throw Error(ErrorCode::ClassCountMismatch, "head has " + std::to_string(ckpt.arch().num_classes) +
                                                   " outputs, class set has " + std::to_string(C));
  check_labels(test, classes.size(), ErrorCode::ClassCountMismatch, "test");
  StageReport r;
  r.stage = stage;
  r.dataset = dataset;
  r.n_test = test.size();
  r.class_names = names_of(classes);
  r.per_class_accuracy.assign(static_cast<std::size_t>(C), 0.0);
  r.checkpoint = nn::checkpoint_digest(ckpt);
  if (test.empty()) return r;
  const auto probs = predict_probs(ckpt, images_of(test));
  const auto labels = labels_of(test);
  const auto cm = eval::confusion(eval::argmax_rows(probs), labels, C);
  std::size_t hits = 0;
  for (int c = 0; c < C; ++c) {
    hits += static_cast<std::size_t>(cm.at(c, c));
    const auto n = cm.row_sum(c);
    r.per_class_accuracy[c] = n > 0 ? static_cast<double>(cm.at(c, c)) / static_cast<double>(n) : 0.0;
  }
  r.top1 = static_cast<double>(hits) / static_cast<double>(test.size());
  r.top5 = eval::topk_accuracy(probs, labels, std::min(5, C));
  return r;
}

// ---- pretraining -----------------------------------------------------------

PretrainResult continue_pretraining(const nn::ModelCheckpoint& parent, const Corpus& corpus, int steps,
                                    std::uint64_t seed, const PretrainOptions& options) {
  if (corpus.examples.empty()) throw Error(ErrorCode::EmptyInput, "pretraining corpus is empty");
  if (steps < 0) throw Error(ErrorCode::ConfigError, "steps must be nonnegative");
  check_images(parent.arch(), corpus.examples, "pretraining");
  PretrainResult out{parent, {}};
  const auto parent_digest = nn::checkpoint_digest(parent);
  const auto images = images_of(corpus.examples);
  out.loss_trace = train_mae(out.checkpoint, images, steps, options.mae, seed);
  out.checkpoint.set_stage(nn::Stage::Pretrained);
  out.checkpoint.append_lineage({"pretrained", parent_digest, seed,
                                 {{"steps", steps},
                                  {"mae", to_json(options.mae)},
                                  {"data", data_ref(options.data_source, corpus)}}});
  return out;
}

PretrainResult pretrain_mae(const Corpus& corpus, const nn::ArchConfig& arch, int steps, std::uint64_t seed,
                            const PretrainOptions& options) {
  arch.validate();
  return continue_pretraining(nn::init_checkpoint(arch, seed), corpus, steps, seed, options);
}

// ---- supervised stages -----------------------------------------------------

FinetuneResult finetune_classifier(const nn::ModelCheckpoint& ckpt, const Corpus& corpus, int epochs,
                                   std::uint64_t seed, const FinetuneOptions& options) {
  const int C = static_cast<int>(corpus.classes.size());
  if (ckpt.has_head() && ckpt.arch().num_classes != C)
    throw Error(ErrorCode::ClassCountMismatch, "checkpoint head has " + std::to_string(ckpt.arch().num_classes) +
                                                   " outputs, corpus has " + std::to_string(C) + " classes");
  check_labels(corpus.examples, corpus.classes.size(), ErrorCode::ClassCountMismatch, "fine-tuning");
  check_images(ckpt.arch(), corpus.examples, "fine-tuning");
  const auto split_seed = options.split_seed.value_or(seed);
  FinetuneResult out;
  out.split = split_dataset(corpus.examples, options.per_class_test, split_seed, {false, C});
  out.checkpoint = train_classifier(ckpt, C, out.split.train, !ckpt.has_head(), epochs, seed, options.probe_init,
                                    options.probe, options.supervised, &out.epoch_loss);
  out.checkpoint.set_stage(nn::Stage::Finetuned);
  auto settings = finetune_settings(epochs, options, split_seed);
  settings["data"] = data_ref(options.data_source, corpus);
  out.checkpoint.append_lineage({"finetuned", nn::checkpoint_digest(ckpt), seed, settings});
  out.report = evaluate_stage(out.checkpoint, corpus.classes, out.split.test, "finetuned", options.dataset_name);
  out.report.n_train = out.split.train.size();
  return out;
}

FinetuneResult global_to_local(const nn::ModelCheckpoint& global_ckpt, const ClassSet& global_classes,
                               const ClassSet& subset, const Corpus& local, int epochs, std::uint64_t seed,
                               const FinetuneOptions& options) {
  const auto names = names_of(subset);
  if (names.empty()) throw Error(ErrorCode::UnknownSubsetClass, "subset is empty");
  for (const auto& n : names)
    if (!global_classes.find(n)) throw Error(ErrorCode::UnknownSubsetClass, n + " is not a class of " + global_classes.name());
  if (names_of(local.classes) != names)
    throw Error(ErrorCode::UnknownSubsetClass, "local corpus classes do not match the subset");
  const int C = static_cast<int>(names.size());
  check_labels(local.examples, local.classes.size(), ErrorCode::ClassCountMismatch, "local");
  check_images(global_ckpt.arch(), local.examples, "local");
  const auto split_seed = options.split_seed.value_or(seed);
  FinetuneResult out;
  out.split = split_dataset(local.examples, options.per_class_test, split_seed, {false, C});
  out.checkpoint = train_classifier(global_ckpt, C, out.split.train, true, epochs, seed, options.probe_init,
                                    options.probe, options.supervised, &out.epoch_loss);
  out.checkpoint.set_stage(nn::Stage::Local);
  auto settings = finetune_settings(epochs, options, split_seed);
  settings["subset"] = names;
  settings["data"] = data_ref(options.data_source, local);
  out.checkpoint.append_lineage({"local", nn::checkpoint_digest(global_ckpt), seed, settings});
  out.report = evaluate_stage(out.checkpoint, local.classes, out.split.test, "local", options.dataset_name);
  out.report.n_train = out.split.train.size();
  return out;
}

double subset_restricted_top1(const nn::ModelCheckpoint& global_ckpt, const ClassSet& global_classes,
                              const ClassSet& subset, std::span<const LabeledExample> test) {
  if (global_ckpt.arch().num_classes != static_cast<int>(global_classes.size()))
    throw Error(ErrorCode::ClassCountMismatch, "global head width differs from the global class set");
  std::vector<int> columns;
  for (const auto& n : names_of(subset)) {
    auto id = global_classes.find(n);
    if (!id) throw Error(ErrorCode::UnknownSubsetClass, n + " is not a class of " + global_classes.name());
    columns.push_back(*id);
  }
  check_labels(test, columns.size(), ErrorCode::ClassCountMismatch, "subset test");
  if (test.empty()) return 0.0;
  const auto logits = predict_logits(global_ckpt, images_of(test));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    int best = 0;
    for (std::size_t j = 1; j < columns.size(); ++j)
      if (logits[i][columns[j]] > logits[i][columns[best]]) best = static_cast<int>(j);
    hits += best == test[i].label;
  }
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

RefineResult refine_with_expert(const nn::ModelCheckpoint& local_ckpt, const Corpus& base, const Corpus& extra,
                                int epochs, std::uint64_t seed, const RefineOptions& options) {
  const int C = static_cast<int>(base.classes.size());
  if (local_ckpt.arch().num_classes != C)
    throw Error(ErrorCode::ClassCountMismatch, "checkpoint head width differs from the class set");
  check_labels(extra.examples, base.classes.size(), ErrorCode::UnknownClass, "expert");
  check_images(local_ckpt.arch(), extra.examples, "expert");
  const auto split_seed = options.split_seed.value_or(seed);
  const auto split = split_dataset(base.examples, options.per_class_test, split_seed, {false, C});

  RefineResult out;
  out.before = evaluate_stage(local_ckpt, base.classes, split.test, "before-refine", base.classes.name());
  std::vector<LabeledExample> uni = split.train;
  uni.insert(uni.end(), extra.examples.begin(), extra.examples.end());
  auto sup = options.supervised;
  sup.epochs = epochs;
  out.checkpoint = local_ckpt;
  train_supervised(out.checkpoint, uni, sup, mix_seed(seed, kTrainStream));
  out.checkpoint.set_stage(nn::Stage::Local);
  out.checkpoint.append_lineage({"refined", nn::checkpoint_digest(local_ckpt), seed,
                                 {{"epochs", epochs},
                                  {"supervised", to_json(options.supervised)},
                                  {"per_class_test", options.per_class_test},
                                  {"split_seed", split_seed},
                                  {"base", data_ref(options.base_source, base)},
                                  {"extra", data_ref(options.extra_source, extra)}}});
  out.after = evaluate_stage(out.checkpoint, base.classes, split.test, "refined", base.classes.name());
  out.before.n_train = split.train.size();
  out.after.n_train = uni.size();
  std::vector<std::size_t> added(static_cast<std::size_t>(C), 0);
  for (const auto& e : extra.examples) ++added[e.label];
  for (int c = 0; c < C; ++c)
    out.rows.push_back({c, base.classes.taxa()[c].scientific_name, added[c], out.before.per_class_accuracy[c],
                        out.after.per_class_accuracy[c]});
  return out;
}

nlohmann::json to_json(std::span<const RefineRow> rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows)
    out.push_back({{"class_id", r.class_id},
                   {"class", r.class_name},
                   {"images_added", r.images_added},
                   {"acc_before", r.acc_before},
                   {"acc_after", r.acc_after},
                   {"delta", r.acc_after - r.acc_before}});
  return out;
}

std::string refine_to_text(std::span<const RefineRow> rows) {
  std::size_t w = 5;
  for (const auto& r : rows) w = std::max(w, r.class_name.size());
  std::ostringstream out;
  out << pad("class", w + 2) << lpad("images added", 12) << lpad("acc before", 12) << lpad("acc after", 12)
      << lpad("delta", 10) << '\n';
  for (const auto& r : rows)
    out << pad(r.class_name, w + 2) << lpad(std::to_string(r.images_added), 12)
        << lpad(fmt("%.4f", r.acc_before), 12) << lpad(fmt("%.4f", r.acc_after), 12)
        << lpad(fmt("%+.4f", r.acc_after - r.acc_before), 10) << '\n';
  return out.str();
}

// ---- k-shot ----------------------------------------------------------------

void KShotSpec::validate() const {
  if (k && *k < 0) throw Error(ErrorCode::ConfigError, "k must be nonnegative");
  if (trials < 1) throw Error(ErrorCode::ConfigError, "trials must be at least 1");
  if (threads < 1) throw Error(ErrorCode::ConfigError, "threads must be at least 1");
  if (per_class_test < 1) throw Error(ErrorCode::ConfigError, "per_class_test must be at least 1");
}

KShotRow kshot_evaluate(const nn::ModelCheckpoint& ckpt, const ClassSet& source_classes, const Corpus& target,
                        const KShotSpec& spec) {
  spec.validate();
  const int C = static_cast<int>(target.classes.size());
  check_labels(target.examples, target.classes.size(), ErrorCode::ClassCountMismatch, "target");
  check_images(ckpt.arch(), target.examples, "target");
  KShotRow row;
  row.dataset = spec.dataset_name;
  row.classes = C;
  row.k = k_label(spec.k);

  if (spec.k && *spec.k == 0) {
    if (!spec.class_mapping) throw Error(ErrorCode::MissingMapping, "zero-shot evaluation needs a class mapping");
    if (ckpt.arch().num_classes != static_cast<int>(source_classes.size()))
      throw Error(ErrorCode::ClassCountMismatch, "source head width differs from the source class set");
    std::map<int, int> to_source;
    for (const auto& [tname, sname] : *spec.class_mapping) {
      const auto tid = target.classes.find(tname);
      if (!tid) throw Error(ErrorCode::UnknownClass, "mapping names " + tname + ", absent from the target classes");
      const auto sid = source_classes.find(sname);
      if (!sid) throw Error(ErrorCode::UnknownClass, "mapping names " + sname + ", absent from the source classes");
      to_source[*tid] = *sid;
    }
    const auto split = split_dataset(target.examples, spec.per_class_test, spec.seed, {false, C});
    std::vector<LabeledExample> overlap;
    std::vector<int> want;
    for (const auto& e : split.test)
      if (auto it = to_source.find(e.label); it != to_source.end()) {
        overlap.push_back(e);
        want.push_back(it->second);
      }
    if (overlap.empty()) throw Error(ErrorCode::MissingMapping, "no target test example maps to a source class");
    const auto preds = eval::argmax_rows(predict_logits(ckpt, images_of(overlap)));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < overlap.size(); ++i) hits += preds[i] == want[i];
    row.mean = static_cast<double>(hits) / static_cast<double>(overlap.size());
    row.trial_accuracy = {row.mean};
    row.n_eval = overlap.size();
    return row;
  }

  const auto split = split_dataset(target.examples, spec.per_class_test, spec.seed, {false, C});
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(C));
  for (std::size_t i = 0; i < split.train.size(); ++i) by_class[split.train[i].label].push_back(i);
  if (spec.k)
    for (int c = 0; c < C; ++c)
      if (by_class[c].size() < static_cast<std::size_t>(*spec.k))
        throw Error(ErrorCode::InsufficientExamples, "class " + target.classes.taxa()[c].scientific_name + " has " +
                                                         std::to_string(by_class[c].size()) +
                                                         " train examples, k = " + std::to_string(*spec.k));
  const bool full = spec.full_finetune.value_or(!spec.k || *spec.k > 20);
  row.trial_accuracy.assign(static_cast<std::size_t>(spec.trials), 0.0);
  row.n_eval = split.test.size();

  parallel_for(static_cast<std::size_t>(spec.trials), spec.threads, [&](std::size_t t) {
    const auto trial_seed = mix_seed(spec.seed, kTrialStream + t);
    std::vector<LabeledExample> support;
    if (spec.k) {
      Rng rng = make_rng(trial_seed, kSupportStream);
      for (int c = 0; c < C; ++c) {
        const auto order = permutation(rng, by_class[c].size());
        for (int i = 0; i < *spec.k; ++i) support.push_back(split.train[by_class[c][order[i]]]);
      }
    } else {
      support = split.train;
    }
    nn::ModelCheckpoint model = ckpt;
    if (full) {
      model = train_classifier(std::move(model), C, support, true, spec.epochs, trial_seed, true, spec.head,
                               spec.supervised, nullptr);
    } else {
      model.reset_head(C, mix_seed(trial_seed, kHeadInitStream));
      train_head(model, support, spec.head, mix_seed(trial_seed, kProbeStream));
    }
    row.trial_accuracy[t] = accuracy_of(model, split.test);
  });

  double sum = 0.0;
  for (double a : row.trial_accuracy) sum += a;
  row.mean = sum / static_cast<double>(spec.trials);
  if (spec.trials > 1) {
    double ss = 0.0;
    for (double a : row.trial_accuracy) ss += (a - row.mean) * (a - row.mean);
    row.sd = std::sqrt(ss / static_cast<double>(spec.trials - 1));
  }
  return row;
}

nlohmann::json to_json(const KShotRow& r) {
  return {{"dataset", r.dataset}, {"classes", r.classes},       {"k", r.k},
          {"mean", r.mean},       {"sd", r.sd},                 {"trials", r.trial_accuracy.size()},
          {"trial_accuracy", r.trial_accuracy}, {"n_eval", r.n_eval}};
}

std::string kshot_table_text(std::span<const KShotRow> rows) {
  // Column order: numeric k ascending, then "all".
  auto key = [](const std::string& k) { return k == "all" ? std::numeric_limits<long>::max() : std::stol(k); };
  std::vector<std::string> ks;
  std::vector<std::string> datasets;
  for (const auto& r : rows) {
    if (std::find(ks.begin(), ks.end(), r.k) == ks.end()) ks.push_back(r.k);
    if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end()) datasets.push_back(r.dataset);
  }
  std::sort(ks.begin(), ks.end(), [&](const auto& a, const auto& b) { return key(a) < key(b); });
  std::size_t wd = 7;
  for (const auto& d : datasets) wd = std::max(wd, d.size());
  const std::size_t wc = 16;
  std::ostringstream out;
  out << pad("Dataset", wd + 2) << lpad("Classes", 8);
  for (const auto& k : ks) out << lpad("k=" + k, wc);
  out << '\n';
  for (const auto& d : datasets) {
    int classes = 0;
    for (const auto& r : rows)
      if (r.dataset == d) classes = r.classes;
    out << pad(d, wd + 2) << lpad(std::to_string(classes), 8);
    for (const auto& k : ks) {
      std::string cell = "-";
      for (const auto& r : rows)
        if (r.dataset == d && r.k == k) cell = fmt("%.2f", 100.0 * r.mean) + " ± " + fmt("%.2f", 100.0 * r.sd);
      // "±" is two bytes in UTF-8 but one column wide.
      const auto extra = cell.find("±") != std::string::npos ? 1u : 0u;
      out << lpad(cell, wc + extra);
    }
    out << '\n';
  }
  return out.str();
}

std::map<std::string, std::string> load_class_mapping(const std::string& path) {
  const auto rows = io::parse_csv(io::read_file(path));
  if (rows.empty() || rows[0].size() < 2 || rows[0][0] != "target" || rows[0][1] != "source")
    throw Error(ErrorCode::MalformedFile, "class mapping must start with header target,source");
  std::map<std::string, std::string> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() == 1 && rows[i][0].empty()) continue;
    if (rows[i].size() < 2) throw Error(ErrorCode::MalformedFile, "class mapping row " + std::to_string(i) + " is short");
    out[rows[i][0]] = rows[i][1];
  }
  return out;
}

// ---- lineage replay --------------------------------------------------------

Corpus default_resolver(const nlohmann::json& source) {
  const auto kind = source.value("kind", std::string());
  if (kind == "synth") return generate_synthetic(synth_config_from_json(source.at("config")));
  if (kind == "file") return load_corpus(source.at("path").get<std::string>());
  throw Error(ErrorCode::ConfigError, "cannot resolve data source of kind '" + kind + "'");
}

nn::ModelCheckpoint replay_lineage(std::span<const nn::LineageEntry> lineage, const CorpusResolver& resolve) {
  if (lineage.empty() || lineage.front().stage != "random")
    throw Error(ErrorCode::ConfigError, "lineage must start with a random initialisation");
  nn::ModelCheckpoint cur;
  try {
    for (const auto& e : lineage) {
      const auto& s = e.settings;
      if (e.stage == "random") {
        cur = nn::init_checkpoint(nn::arch_from_json(s.at("arch")), e.seed);
        continue;
      }
      if (nn::checkpoint_digest(cur) != e.parent_digest)
        throw Error(ErrorCode::ConfigError, "replay diverged before stage " + e.stage);
      if (e.stage == "pretrained") {
        PretrainOptions o{mae_config_from_json(s.at("mae")), s.at("data").at("source")};
        cur = continue_pretraining(cur, resolve_checked(resolve, s.at("data")), s.at("steps").get<int>(), e.seed, o)
                  .checkpoint;
      } else if (e.stage == "finetuned") {
        auto o = finetune_options_from(s);
        o.data_source = s.at("data").at("source");
        cur = finetune_classifier(cur, resolve_checked(resolve, s.at("data")), s.at("epochs").get<int>(), e.seed, o)
                  .checkpoint;
      } else if (e.stage == "local") {
        auto o = finetune_options_from(s);
        o.data_source = s.at("data").at("source");
        const auto local = resolve_checked(resolve, s.at("data"));
        if (names_of(local.classes) != s.at("subset").get<std::vector<std::string>>())
          throw Error(ErrorCode::ConfigError, "replayed local corpus does not match the recorded subset");
        // The subset is a subset of itself; the global class names are not
        // needed again once the first run validated them.
        cur = global_to_local(cur, local.classes, local.classes, local, s.at("epochs").get<int>(), e.seed, o)
                  .checkpoint;
      } else if (e.stage == "refined") {
        RefineOptions o;
        o.supervised = supervised_config_from_json(s.at("supervised"));
        o.per_class_test = s.at("per_class_test").get<int>();
        o.split_seed = s.at("split_seed").get<std::uint64_t>();
        o.base_source = s.at("base").at("source");
        o.extra_source = s.at("extra").at("source");
        cur = refine_with_expert(cur, resolve_checked(resolve, s.at("base")), resolve_checked(resolve, s.at("extra")),
                                 s.at("epochs").get<int>(), e.seed, o)
                  .checkpoint;
      } else {
        throw Error(ErrorCode::ConfigError, "unknown lineage stage '" + e.stage + "'");
      }
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::ConfigError, std::string("lineage settings: ") + ex.what());
  }
  return cur;
}

}  // namespace weedid::pipeline
