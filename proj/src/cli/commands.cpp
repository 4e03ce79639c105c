#include "commands.hpp"

#include <pthread.h>

#include <csignal>
#include <map>
#include <sstream>
#include <thread>

#include "weedid/acquire/download.hpp"
#include "weedid/acquire/grouping.hpp"
#include "weedid/acquire/layout.hpp"
#include "weedid/acquire/manifest.hpp"
#include "weedid/error.hpp"
#include "weedid/evalkit/metrics.hpp"
#include "weedid/evalkit/plot.hpp"
#include "weedid/evalkit/reports.hpp"
#include "weedid/evalkit/roc.hpp"
#include "weedid/io/csv.hpp"
#include "weedid/io/files.hpp"
#include "weedid/pipeline/corpus.hpp"
#include "weedid/pipeline/stages.hpp"
#include "weedid/serve/service.hpp"
#include "weedid/trust/artifact.hpp"
#include "weedid/trust/conformal.hpp"
#include "weedid/trust/ood.hpp"

namespace weedid::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Data {
  pipeline::Corpus corpus;
  json source;
};

Data load_data(RunContext& ctx, const CorpusInput& in) {
  if (!in.corpus.empty()) {
    return {pipeline::load_corpus(ctx.input(in.corpus)), pipeline::file_source(in.corpus)};
  }
  if (!in.images.empty()) {
    if (in.labels.empty() || in.class_set.empty())
      throw Error(ErrorCode::ConfigError, "--images needs --labels and --class-set");
    const auto classes = load_class_set(ctx.input(in.class_set));
    auto corpus = pipeline::load_image_folder(ctx.input(in.images), ctx.input(in.labels), classes, in.image_size,
                                              in.channels);
    return {std::move(corpus), {{"kind", "image_folder"}, {"images", in.images}, {"labels", in.labels}}};
  }
  throw Error(ErrorCode::ConfigError, "give --corpus or --images");
}

nn::ModelCheckpoint load_model(RunContext& ctx, const std::string& path) {
  return nn::load_checkpoint(ctx.input(path));
}

void save_model(RunContext& ctx, const nn::ModelCheckpoint& ckpt) {
  ctx.write("model.ckpt", nn::encode_checkpoint(ckpt));
}

std::string loss_csv(const std::string& column, const std::vector<double>& values) {
  std::ostringstream s;
  s.precision(17);
  s << "index," << column << "\n";
  for (std::size_t i = 0; i < values.size(); ++i) s << i << "," << values[i] << "\n";
  return s.str();
}

// Prints `summary` as JSON with --json, `text` otherwise.
void emit(RunContext& ctx, const json& summary, const std::string& text) {
  if (ctx.json()) ctx.out() << summary.dump(2) << "\n";
  else ctx.out() << text;
  ctx.finish(summary);
}

// Same held-out examples as the fine-tuning split with the same seed; the
// first half of each class is test and the second half validation.
DatasetSplit held_out(const pipeline::Corpus& corpus, int per_class_test, std::uint64_t seed) {
  SplitOptions opt;
  opt.split_validation = true;
  opt.class_count = static_cast<int>(corpus.classes.size());
  return split_dataset(corpus.examples, per_class_test, seed, opt);
}

std::vector<std::string> split_names(const std::string& list) {
  std::vector<std::string> names;
  std::stringstream s(list);
  for (std::string item; std::getline(s, item, ',');) {
    const auto a = item.find_first_not_of(' ');
    const auto b = item.find_last_not_of(' ');
    if (a != std::string::npos) names.push_back(item.substr(a, b - a + 1));
  }
  return names;
}

std::string percent(double v) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(2);
  s << 100.0 * v << "%";
  return s.str();
}

}  // namespace

void run_acquire_build(RunContext& ctx, const AcquireBuildArgs& a) {
  acquire::ManifestCriteria criteria;
  criteria.class_set = load_class_set(ctx.input(a.class_set));
  criteria.per_class_limit = a.per_class;
  criteria.seed = ctx.seed();
  criteria.dest_template = a.template_;
  const auto manifest = acquire::build_manifest(criteria, io::read_file(ctx.input(a.index)));
  ctx.write("manifest.ndjson", acquire::manifest_to_ndjson(manifest));
  emit(ctx, {{"entries", manifest.size()}}, "manifest entries: " + std::to_string(manifest.size()) + "\n");
}

void run_acquire_group(RunContext& ctx, const AcquireGroupArgs& a) {
  const auto manifest = acquire::load_manifest(ctx.input(a.manifest));
  const auto grouping = acquire::optimize_groups(manifest, a.groups);
  ctx.write("groups.json", acquire::group_file_json(grouping, a.manifest));
  std::ostringstream text;
  json loads = json::array();
  for (std::size_t g = 0; g < grouping.groups.size(); ++g) {
    text << "group " << g << ": " << grouping.groups[g].size() << " entries, " << grouping.loads[g] << " bytes\n";
    loads.push_back({{"entries", grouping.groups[g].size()}, {"bytes", grouping.loads[g]}});
  }
  text << "makespan: " << grouping.makespan() << " bytes\n";
  emit(ctx, {{"groups", loads}, {"makespan", grouping.makespan()}}, text.str());
}

bool run_acquire_run(RunContext& ctx, const AcquireRunArgs& a) {
  const auto manifest = acquire::load_manifest(ctx.input(a.manifest));

  std::vector<std::size_t> order;
  if (!a.groups_file.empty()) {
    const auto specs = acquire::parse_group_file(io::read_file(ctx.input(a.groups_file)));
    for (std::size_t g = 0; g < specs.size(); ++g)
      if (a.group < 0 || static_cast<std::size_t>(a.group) == g)
        order.insert(order.end(), specs[g].indices.begin(), specs[g].indices.end());
    if (a.group >= static_cast<int>(specs.size())) throw Error(ErrorCode::ConfigError, "--group out of range");
  } else {
    const auto grouping = acquire::optimize_groups(manifest, a.groups);
    if (a.group >= a.groups) throw Error(ErrorCode::ConfigError, "--group must be below --groups");
    for (std::size_t g = 0; g < grouping.groups.size(); ++g)
      if (a.group < 0 || static_cast<std::size_t>(a.group) == g)
        order.insert(order.end(), grouping.groups[g].begin(), grouping.groups[g].end());
  }
  for (auto i : order)
    if (i >= manifest.size()) throw Error(ErrorCode::IdOutOfRange, "group file names entry " + std::to_string(i));

  acquire::PolitenessPolicy policy;
  policy.max_global_concurrency = a.max_concurrency;
  policy.max_per_host_concurrency = a.max_per_host;
  policy.bytes_per_second_cap = a.rate_limit;
  policy.retry.max_attempts = a.max_attempts;
  policy.retry.base_backoff = std::chrono::milliseconds(a.backoff_ms);
  policy.seed = ctx.seed();

  acquire::DownloadOptions options;
  options.root = a.root.empty() ? ctx.out_path("files") : fs::path(a.root);
  options.journal = ctx.out_path("journal.ndjson");
  options.resume = a.resume;
  ctx.log("fetching " + std::to_string(order.size()) + " entries into " + options.root.string());
  const auto journal = acquire::download_all(manifest, order, policy, options);

  std::size_t done = 0, failed = 0;
  json failures = json::array();
  for (auto i : order) {
    const auto& st = journal.entries[i];
    if (st.state == acquire::EntryState::Done) ++done;
    if (st.state == acquire::EntryState::Failed) {
      ++failed;
      failures.push_back({{"index", i}, {"url", manifest[i].url}, {"reason", st.reason}});
    }
  }
  const json summary{{"selected", order.size()},
                     {"done", done},
                     {"failed", failed},
                     {"bytes_downloaded", journal.bytes_downloaded},
                     {"failures", failures}};
  ctx.write("summary.json", summary.dump(2) + "\n");
  emit(ctx, summary,
       "done " + std::to_string(done) + " of " + std::to_string(order.size()) + ", failed " +
           std::to_string(failed) + ", " + std::to_string(journal.bytes_downloaded) + " bytes\n");
  return failed == 0 && done == order.size();
}

void run_acquire_layout(RunContext& ctx, const AcquireLayoutArgs& a) {
  const auto manifest = acquire::load_manifest(ctx.input(a.manifest));
  const auto journal = acquire::replay_journal(ctx.input(a.journal), manifest.size());
  const auto out_root = ctx.out_path("layout");
  const auto result = acquire::layout_transform(manifest, journal, ctx.input(a.root), out_root, a.template_);
  ctx.record_output(result.index_path);
  emit(ctx, {{"files", result.rows.size()}, {"files_written", result.files_written}},
       "laid out " + std::to_string(result.rows.size()) + " files (" + std::to_string(result.files_written) +
           " written)\n");
}

void run_synth(RunContext& ctx, const SynthArgs& a) {
  auto cfg = pipeline::default_synth_config(ctx.seed());
  cfg.num_classes = a.classes;
  cfg.examples_per_class = a.per_class;
  cfg.image_size = a.size;
  cfg.channels = a.channels;
  cfg.intra_class_variation = a.variation;
  cfg.pixel_noise = a.noise;
  cfg.instance_stream = a.instance_stream;
  // The default pairs only make sense for the default class count.
  if (!a.similar.empty() || cfg.num_classes != pipeline::default_synth_config().num_classes) {
    cfg.lookalike_pairs.clear();
  }
  for (const auto& spec : a.similar) {
    pipeline::LookalikePair pair;
    char c1 = 0, c2 = 0;
    std::istringstream s(spec);
    if (!(s >> pair.a >> c1 >> pair.b >> c2 >> pair.similarity) || c1 != ':' || c2 != ':' || !s.eof())
      throw Error(ErrorCode::ConfigError, "--similar expects A:B:SIMILARITY, got " + spec);
    cfg.lookalike_pairs.push_back(pair);
  }
  const auto corpus = pipeline::generate_synthetic(cfg);
  ctx.write("corpus.bin", pipeline::encode_corpus(corpus));
  ctx.write("classes.csv", class_set_to_csv(corpus.classes));
  ctx.write("synth.json", pipeline::to_json(cfg).dump(2) + "\n");
  const auto digest = pipeline::corpus_digest(corpus);
  emit(ctx, {{"examples", corpus.examples.size()}, {"classes", corpus.classes.size()}, {"corpus_digest", digest}},
       "examples " + std::to_string(corpus.examples.size()) + ", classes " + std::to_string(corpus.classes.size()) +
           "\ncorpus digest " + digest + "\n");
}

void run_pretrain(RunContext& ctx, const PretrainArgs& a) {
  const auto data = load_data(ctx, a.data);
  pipeline::PretrainOptions opt;
  opt.mae = mae_from(ctx.config());
  opt.data_source = data.source;
  const int steps = a.steps.value_or(static_cast<int>(ctx.config().get_int("mae.steps", 500)));
  pipeline::PretrainResult res;
  if (!a.init.empty()) {
    res = pipeline::continue_pretraining(load_model(ctx, a.init), data.corpus, steps, ctx.seed(), opt);
  } else {
    nn::ArchConfig base;
    if (!data.corpus.examples.empty()) {
      base.image_size = data.corpus.examples.front().image.height;
      base.channels = data.corpus.examples.front().image.channels;
    }
    res = pipeline::pretrain_mae(data.corpus, arch_from(ctx.config(), base), steps, ctx.seed(), opt);
  }
  save_model(ctx, res.checkpoint);
  ctx.write("loss.csv", loss_csv("loss", res.loss_trace));
  const double last = res.loss_trace.empty() ? 0.0 : res.loss_trace.back();
  const auto digest = nn::checkpoint_digest(res.checkpoint);
  emit(ctx, {{"steps", steps}, {"final_loss", last}, {"checkpoint", digest}},
       "pretrained " + std::to_string(steps) + " steps, final loss " + std::to_string(last) + "\ncheckpoint " +
           digest + "\n");
}

namespace {

pipeline::FinetuneOptions finetune_options(RunContext& ctx, const Data& data, int per_class_test) {
  pipeline::FinetuneOptions opt;
  opt.supervised = supervised_from(ctx.config());
  opt.probe = head_from(ctx.config());
  opt.per_class_test = per_class_test;
  opt.data_source = data.source;
  opt.dataset_name = data.corpus.classes.name();
  return opt;
}

int epochs_of(RunContext& ctx, std::optional<int> flag) {
  return flag.value_or(static_cast<int>(ctx.config().get_int("supervised.epochs", 10)));
}

void write_stage_outputs(RunContext& ctx, const pipeline::FinetuneResult& res, const std::string& extra_text,
                         json summary) {
  save_model(ctx, res.checkpoint);
  ctx.write("report.json", pipeline::to_json(res.report).dump(2) + "\n");
  ctx.write("report.txt", pipeline::to_text(res.report));
  ctx.write("split.ndjson", split_to_ndjson(res.split));
  ctx.write("loss.csv", loss_csv("loss", res.epoch_loss));
  summary["top1"] = res.report.top1;
  summary["top5"] = res.report.top5;
  summary["checkpoint"] = res.report.checkpoint;
  emit(ctx, summary, pipeline::to_text(res.report) + extra_text);
}

}  // namespace

void run_finetune(RunContext& ctx, const FinetuneArgs& a) {
  const auto data = load_data(ctx, a.data);
  auto opt = finetune_options(ctx, data, a.per_class_test);
  opt.probe_init = !a.no_probe;
  const int epochs = epochs_of(ctx, a.epochs);
  const auto res = pipeline::finetune_classifier(load_model(ctx, a.model), data.corpus, epochs, ctx.seed(), opt);
  write_stage_outputs(ctx, res, "", {{"epochs", epochs}});
}

void run_local(RunContext& ctx, const LocalArgs& a) {
  const auto data = load_data(ctx, a.data);
  const auto global_classes = load_class_set(ctx.input(a.global_classes));
  auto local = data.corpus;
  if (!a.subset.empty()) local = pipeline::restrict_corpus(data.corpus, split_names(a.subset), "local");
  const auto global = load_model(ctx, a.model);
  auto opt = finetune_options(ctx, Data{local, data.source}, a.per_class_test);
  const int epochs = epochs_of(ctx, a.epochs);
  const auto res = pipeline::global_to_local(global, global_classes, local.classes, local, epochs, ctx.seed(), opt);
  const double restricted = pipeline::subset_restricted_top1(global, global_classes, local.classes, res.split.test);
  write_stage_outputs(ctx, res, "global model restricted to the subset: " + percent(restricted) + "\n",
                      {{"epochs", epochs}, {"global_restricted_top1", restricted}});
}

void run_refine(RunContext& ctx, const RefineArgs& a) {
  const auto data = load_data(ctx, a.data);
  const auto extra = pipeline::load_corpus(ctx.input(a.extra));
  pipeline::RefineOptions opt;
  opt.supervised = supervised_from(ctx.config());
  opt.per_class_test = a.per_class_test;
  opt.base_source = data.source;
  opt.extra_source = pipeline::file_source(a.extra);
  const int epochs = epochs_of(ctx, a.epochs);
  const auto res = pipeline::refine_with_expert(load_model(ctx, a.model), data.corpus, extra, epochs, ctx.seed(), opt);
  save_model(ctx, res.checkpoint);
  const auto rows = pipeline::to_json(res.rows);
  const json summary{{"rows", rows},
                     {"top1_before", res.before.top1},
                     {"top1_after", res.after.top1},
                     {"checkpoint", res.after.checkpoint}};
  ctx.write("refine.json", summary.dump(2) + "\n");
  ctx.write("refine.txt", pipeline::refine_to_text(res.rows));
  emit(ctx, summary,
       pipeline::refine_to_text(res.rows) + "top-1 before " + percent(res.before.top1) + ", after " +
           percent(res.after.top1) + "\n");
}

void run_kshot(RunContext& ctx, const KShotArgs& a) {
  const auto data = load_data(ctx, a.data);
  const auto ckpt = load_model(ctx, a.model);
  ClassSet source;
  if (!a.source_classes.empty()) source = load_class_set(ctx.input(a.source_classes));
  std::optional<std::map<std::string, std::string>> mapping;
  if (!a.mapping.empty()) mapping = pipeline::load_class_mapping(ctx.input(a.mapping));

  std::vector<pipeline::KShotRow> rows;
  json out = json::array();
  for (const auto& kv : a.k) {
    pipeline::KShotSpec spec;
    if (kv != "all") spec.k = std::stoi(kv);
    if (spec.k == 0 && !mapping) throw Error(ErrorCode::MissingMapping, "--k 0 needs --mapping");
    if (spec.k == 0 && source.empty()) throw Error(ErrorCode::ConfigError, "--k 0 needs --source-classes");
    spec.trials = a.trials;
    spec.seed = ctx.seed();
    spec.class_mapping = mapping;
    if (a.full) spec.full_finetune = true;
    if (a.head_only) spec.full_finetune = false;
    spec.per_class_test = a.per_class_test;
    spec.epochs = epochs_of(ctx, a.epochs);
    spec.head = head_from(ctx.config());
    spec.supervised = supervised_from(ctx.config());
    spec.threads = a.threads;
    spec.dataset_name = data.corpus.classes.name();
    ctx.log("k = " + kv);
    rows.push_back(pipeline::kshot_evaluate(ckpt, source, data.corpus, spec));
    out.push_back(pipeline::to_json(rows.back()));
  }
  ctx.write("kshot.json", out.dump(2) + "\n");
  const auto table = pipeline::kshot_table_text(rows);
  ctx.write("kshot.txt", table);
  emit(ctx, {{"rows", out}}, table);
}

void run_calibrate_ood(RunContext& ctx, const CalibrateArgs& a) {
  const auto data = load_data(ctx, a.data);
  const auto ckpt = load_model(ctx, a.model);
  const auto split = held_out(data.corpus, a.per_class_test, ctx.seed());
  const auto id_logits = pipeline::predict_logits(ckpt, pipeline::images_of(split.validation));

  std::vector<Raster> ood_images;
  if (!a.ood_corpus.empty()) {
    ood_images = pipeline::images_of(pipeline::load_corpus(ctx.input(a.ood_corpus)).examples);
  } else {
    const std::size_t n = a.ood_count > 0 ? static_cast<std::size_t>(a.ood_count) : id_logits.size();
    ood_images = pipeline::generate_ood(n, ckpt.arch().image_size, ckpt.arch().channels, mix_seed(ctx.seed(), 77));
  }
  const auto ood_logits = pipeline::predict_logits(ckpt, ood_images);

  trust::OodOptions opt;
  opt.target_tpr = a.target_tpr;
  opt.seed = ctx.seed();
  const auto fit = trust::calibrate_ood(id_logits, ood_logits, opt);
  // Out-of-distribution is the positive class: higher energy ranks first.
  const auto roc = eval::roc_pr(fit.test_ood_energies, fit.test_id_energies, opt.target_tpr);

  ctx.write("ood.json", trust::to_json(fit.calibration).dump(2) + "\n");
  json metrics = trust::to_json(fit.metrics);
  metrics["temperature"] = fit.calibration.temperature;
  metrics["tau"] = fit.calibration.tau;
  metrics["auroc_by_temperature"] = fit.auroc_by_temperature;
  ctx.write("ood_metrics.json", metrics.dump(2) + "\n");
  ctx.write("roc.csv", eval::curve_to_csv(roc));
  std::ostringstream text;
  text << "temperature " << fit.calibration.temperature << ", tau " << fit.calibration.tau << "\n"
       << "held-out AUROC " << fit.metrics.auroc << ", TPR at tau " << fit.metrics.tpr_at_tau << ", FPR at tau "
       << fit.metrics.fpr_at_tau << "\n";
  emit(ctx, metrics, text.str());
}

void run_calibrate_conformal(RunContext& ctx, const CalibrateArgs& a) {
  const auto data = load_data(ctx, a.data);
  const auto ckpt = load_model(ctx, a.model);
  const auto split = held_out(data.corpus, a.per_class_test, ctx.seed());
  const double alpha = a.alpha;
  const auto cal = trust::calibrate_conformal(pipeline::predict_probs(ckpt, pipeline::images_of(split.validation)),
                                              labels_of(split.validation), alpha);
  const auto cov = trust::evaluate_coverage(pipeline::predict_probs(ckpt, pipeline::images_of(split.test)),
                                            labels_of(split.test), cal);
  ctx.write("conformal.json", trust::to_json(cal).dump(2) + "\n");
  json summary = trust::to_json(cov);
  summary["alpha"] = cal.alpha;
  summary["q_hat"] = cal.q_hat;
  summary["n_cal"] = cal.n_cal;
  ctx.write("coverage.json", summary.dump(2) + "\n");
  std::ostringstream text;
  text << "q_hat " << cal.q_hat << " from " << cal.n_cal << " examples\n"
       << "test coverage " << percent(cov.empirical_coverage) << ", mean set size " << cov.mean_set_size << "\n";
  emit(ctx, summary, text.str());
}

void run_evaluate(RunContext& ctx, const EvaluateArgs& a) {
  const auto data = load_data(ctx, a.data);
  const auto ckpt = load_model(ctx, a.model);
  const auto& classes = data.corpus.classes;
  const int C = static_cast<int>(classes.size());
  const auto split = held_out(data.corpus, a.per_class_test, ctx.seed());
  const auto labels = labels_of(split.test);
  const auto logits = pipeline::predict_logits(ckpt, pipeline::images_of(split.test));
  const auto probs = pipeline::predict_probs(ckpt, pipeline::images_of(split.test));

  std::vector<std::int64_t> train_counts(C, 0);
  for (const auto& ex : split.train) ++train_counts[ex.label];

  const auto metrics = eval::evaluate_probs(probs, labels, C);
  const auto cm = eval::confusion(eval::argmax_rows(probs), labels, C);
  const auto per_class = eval::per_class_report(cm, train_counts, a.threshold);
  const auto attributions = eval::attribute_errors(cm, classes, train_counts, a.ceiling);
  std::vector<std::set<std::string>> tags;
  for (const auto& ex : split.test) tags.push_back(ex.strata_tags);
  const auto strata = eval::strata_report(probs, labels, tags, C);

  std::vector<std::string> names;
  for (const auto& t : classes.taxa()) names.push_back(t.scientific_name);

  json summary = eval::to_json(metrics);
  summary["checkpoint"] = nn::checkpoint_digest(ckpt);
  summary["n_test"] = split.test.size();
  summary["fraction_ge_threshold"] = per_class.fraction_ge;
  summary["fraction_at_100"] = per_class.fraction_at_100;

  if (!a.calib.empty()) {
    const auto calib = serve::load_calibration(ctx.input(a.calib).string());
    const auto cov = trust::evaluate_coverage(probs, labels, calib.conformal);
    std::size_t flagged = 0;
    for (const auto& row : logits) flagged += trust::ood_decide(row, calib.ood).is_ood ? 1 : 0;
    json trust_j = trust::to_json(cov);
    trust_j["ood_flag_rate"] = logits.empty() ? 0.0 : static_cast<double>(flagged) / logits.size();
    trust_j["calibration"] = calib.fingerprint;
    ctx.write("trust.json", trust_j.dump(2) + "\n");
    summary["trust"] = trust_j;
  }

  ctx.write("metrics.json", summary.dump(2) + "\n");
  ctx.write("confusion.csv", eval::confusion_to_csv(cm, names));
  ctx.write("per_class.json", eval::to_json(per_class, &classes).dump(2) + "\n");
  ctx.write("per_class.csv", eval::per_class_to_csv(per_class, &classes));
  ctx.write("strata.csv", eval::strata_to_csv(strata));
  ctx.write("attribution.csv", eval::attribution_to_csv(attributions, classes));

  std::ostringstream text;
  text << "test examples " << split.test.size() << "\n"
       << "accuracy " << percent(metrics.accuracy) << ", macro F1 " << percent(metrics.macro_f1);
  if (metrics.top5) text << ", top-5 " << percent(*metrics.top5);
  text << "\nclasses at or above " << percent(a.threshold) << ": " << percent(per_class.fraction_ge) << "\n";
  if (summary.contains("trust"))
    text << "conformal coverage " << percent(summary["trust"]["empirical_coverage"].get<double>()) << "\n";
  text << eval::strata_to_text(strata);
  emit(ctx, summary, text.str());
}

void run_report(RunContext& ctx, const ReportArgs& a) {
  json j;
  try {
    j = json::parse(io::read_file(ctx.input(a.per_class)));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedFile, a.per_class + ": " + e.what());
  }
  std::vector<double> acc;
  std::vector<std::pair<double, double>> points;
  std::size_t skipped = 0;
  for (const auto& row : j.at("rows")) {
    if (!row.at("accuracy").is_number()) continue;
    const double v = row.at("accuracy").get<double>();
    acc.push_back(v);
    const auto n = row.value("train_count", std::int64_t{0});
    if (n > 0) points.emplace_back(static_cast<double>(n), v);
    else ++skipped;
  }
  ctx.write("accuracy_histogram.svg",
            eval::svg_histogram(acc, a.bins, "Per-class accuracy", "top-1 accuracy"));
  ctx.write("accuracy_vs_train.svg", eval::svg_scatter(points, "Accuracy vs. training images",
                                                       "training images (log scale)", "top-1 accuracy", true));
  emit(ctx, {{"classes", acc.size()}, {"scatter_points", points.size()}, {"skipped_zero_train", skipped}},
       "plotted " + std::to_string(acc.size()) + " classes\n");
}

void run_serve(RunContext& ctx, const ServeArgs& a) {
  auto kv = ctx.config();
  if (!a.model.empty()) kv.set("serve.model_path", a.model);
  if (!a.classes.empty()) kv.set("serve.classes_path", a.classes);
  if (!a.calib.empty()) kv.set("serve.calib_path", a.calib);
  if (!a.host.empty()) kv.set("serve.host", a.host);
  if (a.port >= 0) kv.set("serve.port", std::to_string(a.port));
  const auto cfg = serve::serve_config_from(kv);
  if (cfg.model_path.empty()) throw Error(ErrorCode::ConfigError, "no model: give --model or MODEL_PATH");
  if (cfg.classes_path.empty()) throw Error(ErrorCode::ConfigError, "no classes: give --classes or CLASSES_PATH");

  // Block the stop signals before any server thread exists so only the
  // waiting thread below receives them.
  sigset_t stop;
  sigemptyset(&stop);
  sigaddset(&stop, SIGINT);
  sigaddset(&stop, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop, nullptr);

  serve::PredictionService service(cfg);
  service.load_model(nn::load_checkpoint(ctx.input(cfg.model_path)), load_class_set(ctx.input(cfg.classes_path)));
  if (!cfg.calib_path.empty()) service.set_calibration(serve::load_calibration(ctx.input(cfg.calib_path).string()));
  serve::HttpFrontend frontend(service);
  const int port = frontend.bind(cfg.host, cfg.port);
  ctx.out() << "listening on " << cfg.host << ":" << port << std::endl;
  std::thread server([&] { frontend.run(); });
  int sig = 0;
  sigwait(&stop, &sig);
  frontend.stop();
  server.join();
  ctx.log("stopped by signal " + std::to_string(sig));
}

}  // namespace weedid::cli
