#include <doctest.h>

#include <sstream>

#include "batchal/cli.hpp"
#include "batchal/service.hpp"
#include "support/support.hpp"

using namespace batchal;
using testing::read_text;
using testing::TempDir;
using testing::write_text;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome cli(std::vector<std::string> args) {
  args.insert(args.begin(), "batchal");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string write_spec(const TempDir& dir) {
  SyntheticSpec spec;
  spec.num_classes = 3;
  spec.samples_per_class = {300, 300, 300};
  spec.dimension = 2;
  spec.class_centers = {{0, 0}, {3, 0}, {0, 3}};
  spec.class_scales = {1.0, 1.0, 1.0};
  spec.seed = 4;
  const auto path = dir / "blobs.json";
  write_synthetic_spec(spec, path);
  return path.string();
}

std::size_t count_lines(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("run --strategy all writes paired curves") {
  TempDir dir("cli-run");
  const std::string spec = write_spec(dir);
  const auto out = dir / "r";
  const Outcome o = cli({"run", "--synthetic", spec, "--strategy", "all", "--initial", "100", "--batch", "50",
                         "--budget", "600", "--reps", "1", "--seed", "7", "--epochs", "1", "--mc-passes", "3",
                         "--hidden", "8", "--out", out.string()});
  REQUIRE(o.code == 0);
  CHECK(o.err.find("resolved config") != std::string::npos);
  CHECK(o.err.find("repetition_seeds") != std::string::npos);
  CHECK(count_lines(read_text(out / "curves.csv")) == 1 + 5 * 11);
}

TEST_CASE("run is byte-for-byte reproducible") {
  TempDir dir("cli-det");
  const std::string spec = write_spec(dir);
  std::vector<std::string> args{"run", "--synthetic", spec, "--strategy", "dbal", "--initial", "20", "--batch", "10",
                                "--budget", "50", "--reps", "2", "--epochs", "2", "--mc-passes", "3", "--hidden", "8",
                                "--evaluation", "holdout"};
  for (const char* name : {"a", "b"}) {
    auto a = args;
    a.push_back("--out");
    a.push_back((dir / name).string());
    REQUIRE(cli(a).code == 0);
  }
  CHECK(read_text(dir / "a" / "rounds.csv") == read_text(dir / "b" / "rounds.csv"));
  CHECK(read_text(dir / "a" / "selection.csv") == read_text(dir / "b" / "selection.csv"));
  CHECK(read_text(dir / "a" / "config.json") == read_text(dir / "b" / "config.json"));
}

TEST_CASE("run flag errors exit 1") {
  TempDir dir("cli-bad");
  const std::string spec = write_spec(dir);
  const auto out = (dir / "r").string();
  Outcome o = cli({"run", "--synthetic", spec, "--strategy", "margin", "--out", out});
  CHECK(o.code == 1);
  CHECK(o.err.find("random, least_confidence, entropy, dbal, coreset") != std::string::npos);
  CHECK(cli({"run", "--out", out}).code == 1);
  CHECK(cli({"run", "--synthetic", spec, "--data", "x.csv", "--out", out}).code == 1);
  CHECK(cli({"run", "--synthetic", spec, "--out", out, "--frobnicate"}).code == 1);
  CHECK(cli({"run", "--synthetic", spec, "--out", out, "--initial", "0"}).code == 1);
  CHECK(cli({"run", "--synthetic", spec, "--out", out, "--initial", "500", "--budget", "100"}).code == 1);
  CHECK(cli({}).code == 1);
}

TEST_CASE("training divergence exits 2") {
  TempDir dir("cli-diverge");
  const std::string spec = write_spec(dir);
  const Outcome o = cli({"run", "--synthetic", spec, "--initial", "20", "--batch", "10", "--budget", "40", "--reps",
                         "1", "--epochs", "3", "--learning-rate", "1e300", "--out", (dir / "r").string()});
  CHECK(o.code == 2);
  CHECK(o.err.find("epoch") != std::string::npos);
}

TEST_CASE("score reproduces the acquisition fixtures") {
  TempDir dir("cli-score");
  write_text(dir / "lc.txt", "PRED 1 3 2\n0 1 2\n0.9 0.1\n0.6 0.4\n0.5 0.5\n");
  Outcome o = cli({"score", "--pred", (dir / "lc.txt").string(), "--strategy", "least_confidence", "--batch", "2"});
  CHECK(o.code == 0);
  CHECK(o.out == "2\n1\n");

  o = cli({"score", "--pred", (dir / "lc.txt").string(), "--strategy", "dbal", "--batch", "1"});
  CHECK(o.code == 1);

  write_text(dir / "u.txt", "EMB 3 1\n0 1 2\n1.0\n2.0\n5.0\n");
  write_text(dir / "l.txt", "EMB 1 1\n9\n0.0\n");
  o = cli({"score", "--emb", (dir / "u.txt").string(), "--emb-labeled", (dir / "l.txt").string(), "--strategy",
           "coreset", "--batch", "2"});
  CHECK(o.code == 0);
  CHECK(o.out == "2\n1\n");

  write_text(dir / "bad.txt", "PRED 1 2 2\n0 1\n0.5 0.5\n0.6 0.6\n");
  o = cli({"score", "--pred", (dir / "bad.txt").string(), "--strategy", "entropy", "--batch", "1"});
  CHECK(o.code == 1);
  CHECK(o.err.find("line 4") != std::string::npos);

  o = cli({"score", "--emb", (dir / "u.txt").string(), "--strategy", "coreset", "--batch", "1"});
  CHECK(o.code == 1);
}

TEST_CASE("score averages multi-pass files for entropy") {
  TempDir dir("cli-score-mean");
  write_text(dir / "p.txt", "PRED 2 2 2\n5 6\n1 0\n0.5 0.5\n0 1\n0.5 0.5\n");
  const Outcome o = cli({"score", "--pred", (dir / "p.txt").string(), "--strategy", "entropy", "--batch", "2"});
  CHECK(o.code == 0);
  CHECK(o.out == "5\n6\n");
}

TEST_CASE("generate round-trips and is reproducible") {
  TempDir dir("cli-gen");
  const std::string spec = write_spec(dir);
  REQUIRE(cli({"generate", "--spec", spec, "--out", (dir / "a.csv").string()}).code == 0);
  REQUIRE(cli({"generate", "--spec", spec, "--out", (dir / "b.csv").string()}).code == 0);
  CHECK(read_text(dir / "a.csv") == read_text(dir / "b.csv"));
  CHECK(ingest_csv(dir / "a.csv") == generate_synthetic(read_synthetic_spec(spec)));
  CHECK(cli({"generate", "--spec", spec, "--out", (dir / "no" / "such" / "dir.csv").string()}).code == 2);
}

TEST_CASE("serve on an occupied port exits 2") {
  TempDir dir("cli-serve");
  ServiceConfig cfg;
  cfg.store_dir = dir / "store";
  AnnotationService holder(cfg);
  const int port = holder.start("127.0.0.1", 0);
  const std::string addr = "127.0.0.1:" + std::to_string(port);
  const Outcome o = cli({"serve", "--addr", addr, "--store", (dir / "store2").string()});
  CHECK(o.code == 2);
  CHECK(o.err.find(addr) != std::string::npos);
  CHECK(cli({"serve", "--addr", "nonsense"}).code == 1);
  holder.stop();
}

}
