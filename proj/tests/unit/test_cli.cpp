#include "stunt/text_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(STUNT_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) { return stunt::detail::read_file(p); }

const std::string kTiny = "--profile fast --set hidden=8 --set embed=4 --set total_steps=20 --set val_interval=10 "
                          "--set val_episodes=5 --set seed=3";

}  // namespace

TEST_CASE("cli pipeline, exit codes and replay") {
  const fs::path root = fs::temp_directory_path() / "stunt_cli_test";
  fs::remove_all(root);
  const std::string schema = std::string(STUNT_DATA_DIR) + "/diabetes/diabetes.schema";

  REQUIRE(run_cli("prepare --schema " + schema + " --seed 1 --out " + (root / "a").string()) == 0);
  REQUIRE(run_cli("prepare --schema " + schema + " --seed 1 --out " + (root / "b").string()) == 0);
  for (const char* f : {"train_unlabeled.csv", "pseudo_val.csv", "test.csv", "labeled_pool.csv", "scaler.txt"}) {
    CHECK(slurp(root / "a" / f) == slurp(root / "b" / f));
  }
  CHECK(fs::exists(root / "a" / "manifest.json"));

  CHECK(run_cli("train --splits " + (root / "missing").string() + " --out " + (root / "t").string()) == 1);
  CHECK(run_cli("train --bogus") == 1);
  CHECK(run_cli("prepare --schema " + (root / "nope.schema").string() + " --out " + (root / "x").string()) == 1);
  CHECK(run_cli("train --splits " + (root / "a").string() + " --set way=1 --out " + (root / "t").string()) == 1);

  REQUIRE(run_cli("train --splits " + (root / "a").string() + " " + kTiny + " --out " + (root / "t").string()) == 0);
  CHECK(fs::exists(root / "t" / "best.ckpt"));
  CHECK(fs::exists(root / "t" / "log.jsonl"));

  REQUIRE(run_cli("evaluate --splits " + (root / "a").string() + " --checkpoint " + (root / "t" / "best.ckpt").string() +
                  " --shots 1,5 --seeds 1 --out " + (root / "e").string()) == 0);
  const auto one = slurp(root / "e" / "eval_1shot.jsonl");
  CHECK(std::count(one.begin(), one.end(), '\n') == 2);  // one seed record + aggregate

  REQUIRE(run_cli("report " + (root / "e" / "eval_1shot.jsonl").string() + " " +
                  (root / "e" / "eval_5shot.jsonl").string() + " --out " + (root / "report.md").string()) == 0);
  const auto md = slurp(root / "report.md");
  CHECK(std::count(md.begin(), md.end(), '\n') == 4);

  // replay the recorded training run into the same directory
  const auto before = slurp(root / "t" / "best.ckpt");
  fs::copy_file(root / "t" / "manifest.json", root / "train_manifest.json");
  REQUIRE(run_cli("replay " + (root / "train_manifest.json").string()) == 0);
  CHECK(slurp(root / "t" / "best.ckpt") == before);

  CHECK(run_cli("evaluate --splits " + (root / "a").string() + " --checkpoint " + (root / "missing.ckpt").string() +
                " --out " + (root / "e2").string()) == 1);
  fs::remove_all(root);
}
