#include "weedid/cli/cli.hpp"

#include <functional>

#include <CLI11.hpp>

#include "commands.hpp"
#include "weedid/error.hpp"

namespace weedid::cli {
namespace {

void add_corpus_options(CLI::App* app, CorpusInput& in) {
  auto* corpus = app->add_option("--corpus", in.corpus, "Corpus file written by synth");
  auto* images = app->add_option("--images", in.images, "Folder of PNG images");
  app->add_option("--labels", in.labels, "CSV filename,label[,tags] for --images")->needs(images);
  app->add_option("--class-set", in.class_set, "Class set CSV for --images")->needs(images);
  app->add_option("--image-size", in.image_size, "Resize --images to this square size")->check(CLI::PositiveNumber);
  app->add_option("--channels", in.channels, "Channels for --images")->check(CLI::IsMember({1, 3}));
  corpus->excludes(images);
  images->excludes(corpus);
}

void add_split_option(CLI::App* app, int& per_class_test) {
  app->add_option("--per-class-test", per_class_test, "Held-out examples per class")->check(CLI::PositiveNumber);
}

const CLI::Validator kshot_k(
    [](std::string& v) -> std::string {
      if (v == "all") return {};
      if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) return "k must be 'all' or an integer >= 0";
      return {};
    },
    "INT|all");

// Deepest subcommand that was selected; its help is the grammar shown on a
// usage error.
const CLI::App* selected(const CLI::App& app) {
  const CLI::App* cur = &app;
  for (;;) {
    auto subs = cur->get_subcommands();
    if (subs.empty()) return cur;
    cur = subs.front();
  }
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Weed species identification toolkit", "weedid"};
  app.fallthrough();  // global options may follow the subcommand
  app.require_subcommand(1);

  Globals g;
  app.add_option("--config", g.config_path, "Settings file ([section] key = value)");
  app.add_option("--seed", g.seed, "Seed for every random draw (default 0)");
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("--json", g.json, "Machine-readable output on stdout");
  app.add_flag("-v,--verbose", g.verbose, "Line-based progress on stderr");

  std::string command;
  std::function<int(RunContext&)> action;
  auto on = [&](CLI::App* sub, std::string name, std::function<int(RunContext&)> fn) {
    sub->callback([&command, &action, name = std::move(name), fn = std::move(fn)] {
      command = name;
      action = fn;
    });
  };
  auto ok = [](auto fn) { return [fn](RunContext& ctx) { fn(ctx); return 0; }; };

  // acquire
  auto* acquire = app.add_subcommand("acquire", "Build, group, download and lay out image manifests");
  acquire->require_subcommand(1);

  AcquireBuildArgs build;
  auto* a_build = acquire->add_subcommand("build", "Manifest from a class set and an image index CSV");
  a_build->add_option("--class-set", build.class_set, "Class set CSV")->required();
  a_build->add_option("--index", build.index, "CSV species,url,size[,checksum][,split]")->required();
  a_build->add_option("--per-class", build.per_class, "Cap per class (0 = all)");
  a_build->add_option("--template", build.template_, "Destination template");
  on(a_build, "acquire build", ok([&](RunContext& c) { run_acquire_build(c, build); }));

  AcquireGroupArgs group;
  auto* a_group = acquire->add_subcommand("group", "Split a manifest into balanced download groups");
  a_group->add_option("--manifest", group.manifest)->required();
  a_group->add_option("--groups", group.groups, "Number of groups")->check(CLI::PositiveNumber);
  on(a_group, "acquire group", ok([&](RunContext& c) { run_acquire_group(c, group); }));

  AcquireRunArgs run;
  std::string rate;
  auto* a_run = acquire->add_subcommand("run", "Download manifest entries politely, with retries");
  a_run->add_option("--manifest", run.manifest)->required();
  a_run->add_option("--root", run.root, "Download root (default <out>/files)");
  a_run->add_option("--groups", run.groups, "Split into G groups")->check(CLI::PositiveNumber);
  a_run->add_option("--group", run.group, "Only fetch this group (0-based)")->check(CLI::NonNegativeNumber);
  a_run->add_option("--groups-file", run.groups_file, "Group file written by 'acquire group'");
  a_run->add_option("--max-per-host", run.max_per_host)->check(CLI::PositiveNumber);
  a_run->add_option("--max-concurrency", run.max_concurrency)->check(CLI::PositiveNumber);
  a_run->add_option("--rate-limit", rate, "Byte-rate cap, BYTES or BYTES/s");
  a_run->add_flag("--resume", run.resume, "Keep the journal and skip verified files");
  a_run->add_option("--max-attempts", run.max_attempts)->check(CLI::PositiveNumber);
  a_run->add_option("--backoff-ms", run.backoff_ms)->check(CLI::NonNegativeNumber);
  on(a_run, "acquire run", [&](RunContext& c) {
    if (!rate.empty()) {
      auto v = rate;
      if (v.size() > 2 && v.substr(v.size() - 2) == "/s") v.resize(v.size() - 2);
      try {
        std::size_t used = 0;
        run.rate_limit = std::stod(v, &used);
        if (used != v.size() || *run.rate_limit <= 0) throw std::invalid_argument(v);
      } catch (const std::logic_error&) {
        throw Error(ErrorCode::ConfigError, "--rate-limit must be a positive byte rate");
      }
    }
    return run_acquire_run(c, run) ? 0 : 1;
  });

  AcquireLayoutArgs layout;
  auto* a_layout = acquire->add_subcommand("layout", "Copy verified downloads into a training layout");
  a_layout->add_option("--manifest", layout.manifest)->required();
  a_layout->add_option("--root", layout.root, "Download root")->required();
  a_layout->add_option("--journal", layout.journal, "Download journal")->required();
  a_layout->add_option("--template", layout.template_, "Layout template");
  on(a_layout, "acquire layout", ok([&](RunContext& c) { run_acquire_layout(c, layout); }));

  // synth
  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic labeled corpus");
  s->add_option("--classes", synth.classes)->check(CLI::Range(2, 1000));
  s->add_option("--per-class", synth.per_class)->check(CLI::PositiveNumber);
  s->add_option("--size", synth.size)->check(CLI::PositiveNumber);
  s->add_option("--channels", synth.channels)->check(CLI::IsMember({1, 3}));
  s->add_option("--variation", synth.variation)->check(CLI::Range(0.0, 1.0));
  s->add_option("--noise", synth.noise)->check(CLI::NonNegativeNumber);
  s->add_option("--similar", synth.similar, "Look-alike pair A:B:SIMILARITY (repeatable)");
  s->add_option("--instance-stream", synth.instance_stream, "Independent instance draw of the same classes");
  on(s, "synth", ok([&](RunContext& c) { run_synth(c, synth); }));

  PretrainArgs pre;
  auto* p = app.add_subcommand("pretrain", "Masked-autoencoder pretraining");
  add_corpus_options(p, pre.data);
  p->add_option("--init", pre.init, "Continue from this checkpoint");
  p->add_option("--steps", pre.steps)->check(CLI::NonNegativeNumber);
  on(p, "pretrain", ok([&](RunContext& c) { run_pretrain(c, pre); }));

  FinetuneArgs ft;
  auto* f = app.add_subcommand("finetune", "Supervised fine-tuning with a fresh classifier head");
  add_corpus_options(f, ft.data);
  add_split_option(f, ft.per_class_test);
  f->add_option("--model", ft.model, "Starting checkpoint")->required();
  f->add_option("--epochs", ft.epochs)->check(CLI::NonNegativeNumber);
  f->add_flag("--no-probe", ft.no_probe, "Skip fitting the head on frozen features first");
  on(f, "finetune", ok([&](RunContext& c) { run_finetune(c, ft); }));

  LocalArgs loc;
  auto* l = app.add_subcommand("local", "Specialise a global classifier to a regional subset");
  add_corpus_options(l, loc.data);
  add_split_option(l, loc.per_class_test);
  l->add_option("--model", loc.model, "Global checkpoint")->required();
  l->add_option("--global-classes", loc.global_classes, "Class set CSV of the global model")->required();
  l->add_option("--subset", loc.subset, "Comma-separated scientific names kept from the corpus");
  l->add_option("--epochs", loc.epochs)->check(CLI::NonNegativeNumber);
  on(l, "local", ok([&](RunContext& c) { run_local(c, loc); }));

  RefineArgs ref;
  auto* r = app.add_subcommand("refine", "Continue training with expert-supplied images");
  add_corpus_options(r, ref.data);
  add_split_option(r, ref.per_class_test);
  r->add_option("--model", ref.model)->required();
  r->add_option("--extra", ref.extra, "Corpus file of added images")->required();
  r->add_option("--epochs", ref.epochs)->check(CLI::NonNegativeNumber);
  on(r, "refine", ok([&](RunContext& c) { run_refine(c, ref); }));

  KShotArgs ks;
  auto* k = app.add_subcommand("kshot", "Few-shot transfer to a target corpus");
  add_corpus_options(k, ks.data);
  add_split_option(k, ks.per_class_test);
  k->add_option("--model", ks.model)->required();
  k->add_option("--k", ks.k, "Examples per class: INT or all (repeatable)")->check(kshot_k);
  k->add_option("--trials", ks.trials)->check(CLI::PositiveNumber);
  k->add_option("--mapping", ks.mapping, "CSV target,source; required for --k 0");
  k->add_option("--source-classes", ks.source_classes, "Class set CSV of the model's head");
  k->add_option("--epochs", ks.epochs)->check(CLI::NonNegativeNumber);
  k->add_option("--threads", ks.threads)->check(CLI::PositiveNumber);
  auto* full = k->add_flag("--full", ks.full, "Train the whole model");
  auto* head = k->add_flag("--head-only", ks.head_only, "Train only the head");
  full->excludes(head);
  on(k, "kshot", ok([&](RunContext& c) { run_kshot(c, ks); }));

  auto* cal = app.add_subcommand("calibrate", "Fit trust calibrations on held-out data");
  cal->require_subcommand(1);
  CalibrateArgs cood;
  auto* co = cal->add_subcommand("ood", "Energy threshold for out-of-distribution flags");
  add_corpus_options(co, cood.data);
  add_split_option(co, cood.per_class_test);
  co->add_option("--model", cood.model)->required();
  co->add_option("--ood-corpus", cood.ood_corpus, "Corpus file of out-of-distribution images");
  co->add_option("--ood-count", cood.ood_count, "Generated OOD images (default: match ID count)");
  co->add_option("--target-tpr", cood.target_tpr)->check(CLI::Range(0.5, 1.0));
  on(co, "calibrate ood", ok([&](RunContext& c) { run_calibrate_ood(c, cood); }));

  CalibrateArgs ccon;
  auto* cc = cal->add_subcommand("conformal", "Split-conformal prediction sets");
  add_corpus_options(cc, ccon.data);
  add_split_option(cc, ccon.per_class_test);
  cc->add_option("--model", ccon.model)->required();
  cc->add_option("--alpha", ccon.alpha, "Miscoverage rate")->check(CLI::Range(0.0, 1.0));
  on(cc, "calibrate conformal", ok([&](RunContext& c) { run_calibrate_conformal(c, ccon); }));

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Metrics, per-class report, strata and error attribution");
  add_corpus_options(e, ev.data);
  add_split_option(e, ev.per_class_test);
  e->add_option("--model", ev.model)->required();
  e->add_option("--calib", ev.calib, "Calibration directory or bundle; adds coverage and OOD rates");
  e->add_option("--threshold", ev.threshold, "Per-class accuracy threshold")->check(CLI::Range(0.0, 1.0));
  e->add_option("--ceiling", ev.ceiling, "Attribute errors of classes below this accuracy")
      ->check(CLI::Range(0.0, 1.0));
  on(e, "evaluate", ok([&](RunContext& c) { run_evaluate(c, ev); }));

  ReportArgs rep;
  auto* rp = app.add_subcommand("report", "SVG plots from an evaluate run");
  rp->add_option("--per-class", rep.per_class, "per_class.json from evaluate")->required();
  rp->add_option("--bins", rep.bins)->check(CLI::PositiveNumber);
  on(rp, "report", ok([&](RunContext& c) { run_report(c, rep); }));

  ServeArgs sv;
  auto* sp = app.add_subcommand("serve", "HTTP prediction service");
  sp->add_option("--model", sv.model, "Checkpoint (or MODEL_PATH)");
  sp->add_option("--classes", sv.classes, "Class set CSV (or CLASSES_PATH)");
  sp->add_option("--calib", sv.calib, "Calibration directory or bundle (or CALIB_PATH)");
  sp->add_option("--host", sv.host);
  sp->add_option("--port", sv.port)->check(CLI::Range(0, 65535));
  on(sp, "serve", ok([&](RunContext& c) { run_serve(c, sv); }));

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::CallForHelp& h) {
    return app.exit(h, out, err);
  } catch (const CLI::CallForAllHelp& h) {
    return app.exit(h, out, err);
  } catch (const CLI::ParseError& pe) {
    err << "error: " << pe.what() << "\n\n" << selected(app)->help();
    return 2;
  }
  if (!action) {
    err << selected(app)->help();
    return 2;
  }

  try {
    RunContext ctx(command, args, g, out, err);
    return action(ctx);
  } catch (const Error& ex) {
    err << "error: " << ex.what() << "\n";
    return 1;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return 1;
  }
}

}  // namespace weedid::cli
