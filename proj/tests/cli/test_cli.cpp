#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "support/acquire_fixture.hpp"
#include "support/temp_dir.hpp"
#include "weedid/cli/cli.hpp"
#include "weedid/core/taxonomy.hpp"
#include "weedid/io/digest.hpp"
#include "weedid/io/files.hpp"

using namespace weedid;
using testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = cli::dispatch(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string digest(const fs::path& p) { return io::sha256_file(p); }

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(io::read_file(p)); }

}  // namespace

TEST_CASE("synth with one seed gives identical corpora") {
  TempDir dir("cli-synth");
  const auto a = (dir / "a").string(), b = (dir / "b").string();
  REQUIRE(run_cli({"synth", "--classes", "4", "--per-class", "50", "--seed", "7", "--out", a}).code == 0);
  REQUIRE(run_cli({"synth", "--classes", "4", "--per-class", "50", "--seed", "7", "--out", b}).code == 0);
  CHECK(digest(dir / "a/corpus.bin") == digest(dir / "b/corpus.bin"));
  CHECK(digest(dir / "a/classes.csv") == digest(dir / "b/classes.csv"));

  const auto run = read_json(dir / "a/run_synth.json");
  CHECK(run["seed"] == 7);
  CHECK(run["command"] == "synth");
  CHECK(run["outputs"][0]["sha256"] == digest(dir / "a/corpus.bin"));

  REQUIRE(run_cli({"synth", "--classes", "4", "--per-class", "50", "--seed", "8", "--out", (dir / "c").string()}).code ==
          0);
  CHECK(digest(dir / "a/corpus.bin") != digest(dir / "c/corpus.bin"));
}

TEST_CASE("usage errors exit 2, print the grammar and write nothing") {
  TempDir dir("cli-usage");
  const auto out = dir / "never";
  auto r = run_cli({"synth", "--bogus", "1", "--out", out.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("--per-class") != std::string::npos);
  CHECK_FALSE(fs::exists(out));

  CHECK(run_cli({}).code == 2);
  CHECK(run_cli({"nosuchcommand"}).code == 2);
  CHECK(run_cli({"calibrate", "--out", out.string()}).code == 2);
  CHECK(run_cli({"finetune", "--corpus", "x", "--out", out.string()}).code == 2);  // --model missing
  CHECK(run_cli({"kshot", "--model", "m", "--corpus", "c", "--k", "ten", "--out", out.string()}).code == 2);
  CHECK(run_cli({"synth", "--classes", "1", "--out", out.string()}).code == 2);
  CHECK_FALSE(fs::exists(out));

  auto help = run_cli({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("acquire") != std::string::npos);
}

TEST_CASE("operation failures exit 1") {
  TempDir dir("cli-fail");
  auto r = run_cli({"pretrain", "--corpus", (dir / "missing.bin").string(), "--out", (dir / "o").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("missing.bin") != std::string::npos);
  REQUIRE(run_cli({"synth", "--classes", "2", "--per-class", "8", "--out", (dir / "s").string()}).code == 0);
  // k = 0 without a mapping
  REQUIRE(run_cli({"pretrain", "--corpus", (dir / "s/corpus.bin").string(), "--steps", "0", "--out",
               (dir / "p").string()})
              .code == 0);
  CHECK(run_cli({"kshot", "--model", (dir / "p/model.ckpt").string(), "--corpus", (dir / "s/corpus.bin").string(), "--k",
             "0", "--per-class-test", "2", "--out", (dir / "k").string()})
            .code == 1);
}

TEST_CASE("zero-shot kshot scores only the mapped overlap and leaves the model alone") {
  TempDir dir("cli-kshot");
  auto p = [&](const std::string& n) { return (dir / n).string(); };
  REQUIRE(run_cli({"synth", "--classes", "3", "--per-class", "30", "--seed", "1", "--out", p("src")}).code == 0);
  REQUIRE(run_cli({"pretrain", "--corpus", p("src/corpus.bin"), "--steps", "0", "--out", p("pre")}).code == 0);
  REQUIRE(run_cli({"finetune", "--model", p("pre/model.ckpt"), "--corpus", p("src/corpus.bin"), "--epochs", "1",
               "--per-class-test", "10", "--out", p("ft")})
              .code == 0);
  // The target is a different draw with four classes, two of which map.
  REQUIRE(run_cli({"synth", "--classes", "4", "--per-class", "30", "--seed", "2", "--out", p("tgt")}).code == 0);
  {
    std::ofstream m(p("map.csv"));
    m << "target,source\nSynthgenus0 species0,Synthgenus0 species0\nSynthgenus0 species1,Synthgenus0 species1\n";
  }
  const auto before = digest(dir / "ft/model.ckpt");
  auto r = run_cli({"kshot", "--model", p("ft/model.ckpt"), "--source-classes", p("src/classes.csv"), "--corpus",
                p("tgt/corpus.bin"), "--k", "0", "--mapping", p("map.csv"), "--per-class-test", "10", "--json",
                "--out", p("ks")});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(digest(dir / "ft/model.ckpt") == before);
  const auto rows = read_json(dir / "ks/kshot.json");
  REQUIRE(rows.size() == 1);
  CHECK(rows[0]["k"] == "0");
  CHECK(rows[0]["n_eval"] == 20);  // 2 mapped classes x 10 test examples
  CHECK(fs::exists(dir / "ks/kshot.txt"));
  CHECK(nlohmann::json::parse(r.out)["rows"].size() == 1);
}

TEST_CASE("acquire chain: build, group, run and layout") {
  testing::FaultServer server;
  const auto manifest = testing::fault_manifest(server, 24, 5);
  TempDir dir("cli-acquire");
  auto p = [&](const std::string& n) { return (dir / n).string(); };

  std::vector<TaxonRecord> taxa;
  std::set<std::string> species;
  for (const auto& e : manifest) species.insert(e.species_id);
  for (const auto& s : species)
    taxa.push_back({static_cast<int>(taxa.size()), s, s, s.substr(0, s.find(' ')), "Family", 100});
  save_class_set(dir / "classes.csv", ClassSet("weeds", taxa));
  {
    std::ofstream idx(p("index.csv"));
    idx << "species,url,size,checksum\n";
    for (const auto& e : manifest) idx << e.species_id << "," << e.url << "," << *e.expected_bytes << "," << *e.checksum << "\n";
  }

  REQUIRE(run_cli({"acquire", "build", "--class-set", p("classes.csv"), "--index", p("index.csv"), "--out", p("m")}).code ==
          0);
  REQUIRE(run_cli({"acquire", "group", "--manifest", p("m/manifest.ndjson"), "--groups", "2", "--out", p("g")}).code == 0);
  for (const char* g : {"0", "1"}) {
    auto r = run_cli({"acquire", "run", "--manifest", p("m/manifest.ndjson"), "--groups-file", p("g/groups.json"),
                  "--group", g, "--max-per-host", "2", "--backoff-ms", "20", "--resume", "--root", p("files"),
                  "--out", p("d")});
    REQUIRE_MESSAGE(r.code == 0, r.err);
  }
  const auto summary = read_json(dir / "d/summary.json");
  CHECK(summary["failed"] == 0);
  for (const auto& host : testing::fault_hosts())
    CHECK(server.max_active(host + ":" + std::to_string(server.port())) <= 2);

  REQUIRE(run_cli({"acquire", "layout", "--manifest", p("m/manifest.ndjson"), "--root", p("files"), "--journal",
               p("d/journal.ndjson"), "--out", p("l")})
              .code == 0);
  const auto index = io::read_file(dir / "l/layout/index.csv");
  CHECK(std::count(index.begin(), index.end(), '\n') == 25);  // header + 24 rows
}

// Checkpoints record the corpus path they were trained on, so both runs use
// the same relative paths from their own working directory.
TEST_CASE("training chain is byte-identical across runs") {
  TempDir dir("cli-chain");
  const auto cwd = fs::current_path();
  auto chain = [&](const std::string& tag) {
    fs::create_directories(dir / tag);
    fs::current_path(dir / tag);
    auto p = [](const std::string& n) { return n; };
    const std::string seed = "11";
    REQUIRE(run_cli({"synth", "--classes", "3", "--per-class", "40", "--seed", seed, "--out", p("s")}).code == 0);
    REQUIRE(run_cli({"pretrain", "--corpus", p("s") + "/corpus.bin", "--steps", "10", "--seed", seed, "--out", p("p")})
                .code == 0);
    REQUIRE(run_cli({"finetune", "--model", p("p") + "/model.ckpt", "--corpus", p("s") + "/corpus.bin", "--epochs", "2",
                 "--per-class-test", "10", "--seed", seed, "--out", p("f")})
                .code == 0);
    for (const char* kind : {"ood", "conformal"})
      REQUIRE(run_cli({"calibrate", kind, "--model", p("f") + "/model.ckpt", "--corpus", p("s") + "/corpus.bin",
                   "--per-class-test", "10", "--seed", seed, "--out", p("c")})
                  .code == 0);
    REQUIRE(run_cli({"evaluate", "--model", p("f") + "/model.ckpt", "--corpus", p("s") + "/corpus.bin", "--calib",
                 p("c"), "--per-class-test", "10", "--seed", seed, "--out", p("e")})
                .code == 0);
    REQUIRE(run_cli({"report", "--per-class", p("e") + "/per_class.json", "--out", p("r")}).code == 0);
    fs::current_path(cwd);
  };
  chain("one");
  chain("two");
  for (const char* f : {"p/model.ckpt", "f/model.ckpt", "f/report.json", "f/split.ndjson", "c/ood.json",
                        "c/conformal.json", "e/metrics.json", "e/confusion.csv", "e/per_class.csv",
                        "e/attribution.csv", "r/accuracy_vs_train.svg"}) {
    CAPTURE(std::string(f));
    CHECK(digest(dir / "one" / f) == digest(dir / "two" / f));
  }
}
