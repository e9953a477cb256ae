#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "oodf/synthetic.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using oodf::test::slurp;
using oodf::test::spit;

namespace {

int oodf_exit(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + OODF_CLI + "\" " + args + " > \"" + log.string() +
                          "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

constexpr const char* kToyConfig = R"({
  "experiment": "toy_example1", "epochs": 2, "batch_size": 64, "seed": 3,
  "model": {"hidden_layers": 1, "hidden_width": 8},
  "toy": {"train_count": 128, "grid": {"points_per_axis": 11}}
})";

}  // namespace

TEST_CASE("usage and configuration errors exit with 2") {
  oodf::test::TempDir dir("cli_usage");
  const fs::path log = dir / "log.txt";
  CHECK(oodf_exit("", log) == 2);
  CHECK(oodf_exit("frobnicate", log) == 2);
  CHECK(oodf_exit("--help", log) == 0);
  CHECK(oodf_exit("run " + (dir / "missing.json").string(), log) == 2);

  spit(dir / "bad.json", R"({"experiment": "toy_example1", "epochs": 2, "typo": 1})");
  CHECK(oodf_exit("run " + (dir / "bad.json").string(), log) == 2);
  CHECK(slurp(log).find("typo") != std::string::npos);

  spit(dir / "toy.json", kToyConfig);
  CHECK(oodf_exit("run " + (dir / "toy.json").string() + " --trials 0", log) == 2);
  CHECK(oodf_exit("run " + (dir / "toy.json").string() + " --seed banana", log) == 2);
}

TEST_CASE("run honours seed, output and trial overrides") {
  oodf::test::TempDir dir("cli_run");
  spit(dir / "toy.json", kToyConfig);
  const fs::path out = dir / "results";
  REQUIRE(oodf_exit("run " + (dir / "toy.json").string() + " --seed 40 --trials 2 --out " +
                        out.string(),
                    dir / "log.txt") == 0);
  const std::string trials = slurp(out / "trials.csv");
  CHECK(trials.find("\n0,40,") != std::string::npos);
  CHECK(trials.find("\n1,41,") != std::string::npos);
  CHECK(line_count(out / "trial_0" / "grid.csv") == 1 + 11 * 11);

  SUBCASE("grid from a checkpoint with negative bounds") {
    const fs::path grid = dir / "grid.csv";
    REQUIRE(oodf_exit("grid " + (out / "trial_0" / "model.ckpt").string() + " -6,6 101 " +
                          grid.string(),
                      dir / "log.txt") == 0);
    CHECK(line_count(grid) == 1 + 101 * 101);
    std::ifstream in(grid);
    std::string header, first;
    std::getline(in, header);
    std::getline(in, first);
    CHECK(header == "x1,x2,p_class1");
    CHECK(first.rfind("-6,-6,", 0) == 0);
    CHECK(oodf_exit("grid " + (out / "trial_0" / "model.ckpt").string() + " 6,-6 11 " +
                        grid.string(),
                    dir / "log.txt") == 2);
  }

  SUBCASE("metrics recomputed from predictions match the run") {
    const fs::path again = dir / "again";
    REQUIRE(oodf_exit("metrics " + (out / "trial_0" / "predictions.csv").string() + " " +
                          again.string(),
                      dir / "log.txt") == 0);
    CHECK(slurp(again / "metrics.csv") == slurp(out / "trial_0" / "metrics.csv"));
    CHECK(slurp(again / "roc.csv") == slurp(out / "trial_0" / "roc.csv"));
  }
}

TEST_CASE("runtime failures exit with 3") {
  oodf::test::TempDir dir("cli_fail");
  spit(dir / "junk.ckpt", "not a checkpoint");
  CHECK(oodf_exit("grid " + (dir / "junk.ckpt").string() + " -1,1 5 " + (dir / "g.csv").string(),
                  dir / "log.txt") == 3);
  spit(dir / "img.json", R"({"experiment": "image",
    "data": {"train": {"dir": "nowhere"}, "test": {"dir": "nowhere"}}})");
  CHECK(oodf_exit("run " + (dir / "img.json").string() + " --out " + (dir / "o").string(),
                  dir / "log.txt") == 3);
  CHECK(slurp(dir / "log.txt").find("nowhere") != std::string::npos);
}

TEST_CASE("mine-outliers writes a manifest") {
  oodf::test::TempDir dir("cli_mine");
  oodf::ImageCorpusSpec spec;
  spec.side = 8;
  spec.count_class0 = 6;
  spec.count_class1 = 6;
  oodf::write_image_corpus(dir / "train", spec);
  spec.tag = "cand";
  spec.seed = 9;
  spec.count_class0 = 12;
  spec.count_class1 = 8;
  oodf::write_image_corpus(dir / "cand", spec);
  spit(dir / "c.json", R"({"experiment": "image", "data": {"side": 32,
    "train": {"dir": "train"}, "test": {"dir": "train"},
    "outliers": {"source": "mined_top_fraction", "dir": "cand", "fraction": 0.2}}})");
  REQUIRE(oodf_exit("mine-outliers " + (dir / "c.json").string() + " --out " +
                        (dir / "m").string(),
                    dir / "log.txt") == 0);
  CHECK(line_count(dir / "m" / "outlier_manifest.tsv") == 1 + 4);
}
