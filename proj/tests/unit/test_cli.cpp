#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "../support.hpp"
#include "manifest/cli.hpp"
#include "manifest/config.hpp"
#include "manifest/image_io.hpp"

using namespace manifest;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "manifest");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// One corpus and one short training run shared by the tests below.
struct Fixture {
  testing::TempDir dir{"cli"};
  fs::path data = dir.path / "data";
  fs::path run_dir = dir.path / "run";

  Fixture() {
    const Run s = run({"synth-data", "--out", data.string(), "--size", "32", "--source-count", "8", "--anchor-count",
                       "4", "--fewshot-count", "3", "--reference-count", "2"});
    REQUIRE(s.code == 0);
    const Run t = run(train_args(run_dir));
    REQUIRE_MESSAGE(t.code == 0, t.err);
  }

  std::vector<std::string> train_args(const fs::path& out) const {
    return {"train",          "--data-root",     data.string(),      "--out-dir",     out.string(),
            "--resolution",   "32",              "--iterations",     "2",             "--base-width",
            "8",              "--style-dim",     "4",                "--style-width", "8",
            "--mlp-dim",      "16",              "--disc-width",     "8",             "--patch-size",
            "8",              "--patch-count",   "2",                "--extractor-widths",
            "8,8,16,16",      "--mean-style-samples", "2",           "--checkpoint-every", "0"};
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("synth-data prints the tree and is reproducible") {
  testing::TempDir dir("synth");
  const std::vector<std::string> common = {"--size", "16", "--source-count", "3", "--anchor-count", "2",
                                           "--fewshot-count", "2", "--reference-count", "1"};
  auto args = [&](const fs::path& out, const std::string& seed) {
    std::vector<std::string> a = {"synth-data", "--out", out.string(), "--seed", seed};
    a.insert(a.end(), common.begin(), common.end());
    return a;
  };
  const Run a = run(args(dir.path / "a", "3"));
  REQUIRE(a.code == 0);
  CHECK(a.out.find("fewshot/") != std::string::npos);
  CHECK(a.out.find("manifest.tsv") != std::string::npos);
  REQUIRE(run(args(dir.path / "b", "3")).code == 0);
  REQUIRE(run(args(dir.path / "c", "4")).code == 0);
  CHECK(slurp(dir.path / "a" / "manifest.tsv") == slurp(dir.path / "b" / "manifest.tsv"));
  CHECK(slurp(dir.path / "a" / "source" / "0000.png") == slurp(dir.path / "b" / "source" / "0000.png"));
  CHECK(slurp(dir.path / "a" / "manifest.tsv") != slurp(dir.path / "c" / "manifest.tsv"));
}

TEST_CASE("usage errors exit with 1") {
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"train", "--no-such-flag", "1"}).code == kExitUsage);
  CHECK(run({"train", "--iterations", "ten"}).code == kExitUsage);
  CHECK(run({"train", "--ablate", "lgfs_only,no_style"}).code == kExitUsage);
  CHECK(run({"train", "--exemplar-prob", "2"}).code == kExitUsage);
  CHECK(run({"translate", "--input", "x"}).code == kExitUsage);
}

TEST_CASE("missing paths exit with 2") {
  testing::TempDir dir("badpath");
  const Run r = run({"train", "--data-root", (dir.path / "absent").string(), "--out-dir", (dir.path / "o").string()});
  CHECK(r.code == kExitIo);
  CHECK(r.err.find("absent") != std::string::npos);
  CHECK(run({"inspect-weights", "--checkpoint", (dir.path / "none.ckpt").string()}).code == kExitIo);
  CHECK(run({"train", "--config", (dir.path / "none.cfg").string()}).code == kExitIo);
}

TEST_CASE("train writes a checkpoint; inspect-weights prints the simplex") {
  Fixture& f = fixture();
  CHECK(fs::exists(f.run_dir / "final.ckpt"));
  CHECK(fs::exists(f.run_dir / "metrics.tsv"));
  const Run r = run({"inspect-weights", "--checkpoint", (f.run_dir / "final.ckpt").string()});
  REQUIRE(r.code == 0);
  std::istringstream is(r.out);
  std::string name;
  double w, sum = 0.0;
  int rows = 0;
  while (is >> name >> w) {
    sum += w;
    ++rows;
  }
  CHECK(rows == 2);
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("config file precedence: flags over file over defaults") {
  Fixture& f = fixture();
  const fs::path cfg = f.dir.path / "p.cfg";
  std::ofstream(cfg) << "iterations = 1\nseed = 5\n";
  auto args = f.train_args(f.dir.path / "prec");
  args.erase(std::find(args.begin(), args.end(), "--iterations"), std::find(args.begin(), args.end(), "--iterations") + 2);
  args.insert(args.end(), {"--config", cfg.string(), "--seed", "6"});
  REQUIRE(run(args).code == 0);
  const std::string saved = slurp(f.dir.path / "prec" / "config.txt");
  CHECK(saved.find("iterations = 1\n") != std::string::npos);
  CHECK(saved.find("seed = 6\n") != std::string::npos);
  TrainingConfig loaded;
  loaded.load_file(f.dir.path / "prec" / "config.txt");
  CHECK(loaded.lr_gen == TrainingConfig{}.lr_gen);

  std::ofstream(cfg) << "bogus_key = 1\n";
  CHECK(run({"train", "--config", cfg.string()}).code == kExitUsage);
}

TEST_CASE("lgfs_only training runs from the CLI") {
  Fixture& f = fixture();
  auto args = f.train_args(f.dir.path / "lgfs");
  args.insert(args.end(), {"--ablate", "lgfs_only"});
  CHECK(run(args).code == 0);
  // Exemplar mode needs GERM.
  const Run r = run({"translate", "--checkpoint", (f.dir.path / "lgfs" / "final.ckpt").string(), "--input",
                     (f.data / "fewshot").string(), "--output", (f.dir.path / "x").string(), "--mode", "exemplar",
                     "--exemplar", (f.data / "fewshot" / "0000.png").string()});
  CHECK(r.code == kExitUsage);
}

TEST_CASE("translate in both modes and from an anchor") {
  Fixture& f = fixture();
  const std::string ckpt = (f.run_dir / "final.ckpt").string();
  const fs::path out = f.dir.path / "translated";
  REQUIRE(run({"translate", "--checkpoint", ckpt, "--input", (f.data / "fewshot").string(), "--output",
               (out / "g").string()})
              .code == 0);
  CHECK(read_png(out / "g" / "0002.png").shape() == Shape{3, 32, 32});
  REQUIRE(run({"translate", "--checkpoint", ckpt, "--input", (f.data / "fewshot").string(), "--output",
               (out / "e").string(), "--mode", "exemplar", "--exemplar", (f.data / "fewshot" / "0001.png").string()})
              .code == 0);
  CHECK(fs::exists(out / "e" / "0000.png"));
  CHECK(run({"translate", "--checkpoint", ckpt, "--input", (f.data / "fewshot").string(), "--output",
             (out / "bad").string(), "--mode", "exemplar"})
            .code == kExitUsage);
  REQUIRE(run({"translate", "--checkpoint", ckpt, "--input", (f.data / "anchor_m").string(), "--output",
               (out / "a").string(), "--from-anchor"})
              .code == 0);
  CHECK(fs::exists(out / "a" / "0003.png"));
}

TEST_CASE("evaluate and plot") {
  Fixture& f = fixture();
  const std::string ckpt = (f.run_dir / "final.ckpt").string();
  const Run e = run({"evaluate", "--checkpoint", ckpt, "--max-sources", "2", "--no-baseline"});
  REQUIRE_MESSAGE(e.code == 0, e.err);
  CHECK(e.out.find("frechet_general") != std::string::npos);
  CHECK(fs::exists(f.run_dir / "eval" / "contact_sheet.png"));

  fs::copy(f.data, f.dir.path / "norefs", fs::copy_options::recursive);
  fs::remove_all(f.dir.path / "norefs" / "fewshot");
  fs::remove_all(f.dir.path / "norefs" / "fewshot_ref");
  CHECK(run({"evaluate", "--checkpoint", ckpt, "--data-root", (f.dir.path / "norefs").string(), "--out",
             (f.dir.path / "e2").string()})
            .code == kExitIo);

  const Run p = run({"plot", "--log", (f.run_dir / "metrics.tsv").string(), "--out", (f.dir.path / "plots").string()});
  REQUIRE(p.code == 0);
  CHECK(fs::exists(f.dir.path / "plots" / "overview.png"));
  CHECK(fs::exists(f.dir.path / "plots" / "total_G.png"));
}

TEST_CASE("a diverging run exits with 3") {
  Fixture& f = fixture();
  auto args = f.train_args(f.dir.path / "diverge");
  *(std::find(args.begin(), args.end(), "--iterations") + 1) = "5";
  args.insert(args.end(), {"--lr-gen", "1e30", "--lr-disc", "1e30"});
  const Run r = run(args);
  CHECK(r.code == kExitNumerical);
  CHECK(r.err.find("non-finite") != std::string::npos);
}
