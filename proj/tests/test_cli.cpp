#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "test_util.hpp"

using perfseg::test::TempDir;

namespace {

// Exit status of the CLI run with `args`; output goes to `log`.
int run(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = std::string(PERFSEG_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("exit codes") {
  TempDir dir("cli_codes");
  const auto log = dir / "log.txt";
  CHECK(run("", log) == 2);
  CHECK(run("nosuch", log) == 2);
  CHECK(run("phantom", log) == 2);
  CHECK(run("--config " + (dir / "missing.json").string() + " phantom --out x", log) == 2);
  CHECK(run("segment --model " + (dir / "none.json").string() + " --in " + (dir / "s.json").string() + " --out " +
                (dir / "o.json").string(),
            log) == 2);
  CHECK(slurp(log).find("none.json") != std::string::npos);

  std::ofstream(dir / "bad.json") << R"({"ts": 1.01})";
  CHECK(run("--config " + (dir / "bad.json").string() + " crossval --cases " + dir.path().string() + " --out " +
                (dir / "m.csv").string(),
            log) == 2);
  CHECK(slurp(log).find("ts") != std::string::npos);
  CHECK(run("crossval --ts 1.01 --cases " + dir.path().string() + " --out " + (dir / "m.csv").string(), log) == 2);

  // Too few cases is a data error.
  CHECK(run("crossval --cases " + dir.path().string() + " --out " + (dir / "m.csv").string(), log) == 3);
  std::ofstream(dir / "junk.json") << "not json";
  CHECK(run("preprocess --in " + (dir / "junk.json").string() + " --out " + (dir / "se.json").string(), log) == 3);
}

TEST_CASE("phantom to metrics") {
  TempDir dir("cli_e2e");
  const auto log = dir / "log.txt";
  const auto cases = dir / "cases";
  for (int seed = 1; seed <= 3; ++seed) {
    const auto out = cases / ("case" + std::to_string(seed));
    REQUIRE(run("phantom --seed " + std::to_string(seed) + " --out " + out.string(), log) == 0);
    CHECK(std::filesystem::exists(out / "scan.json"));
    CHECK(std::filesystem::exists(out / "gt.json"));
  }
  const auto test_case = dir / "test";
  REQUIRE(run("phantom --seed 7 --decoy --out " + test_case.string(), log) == 0);
  CHECK(std::filesystem::exists(test_case / "decoy.json"));

  const auto model = dir / "model.json";
  REQUIRE(run("train --cases " + cases.string() + " --out " + model.string(), log) == 0);
  REQUIRE(std::filesystem::exists(model));

  const auto seg = dir / "out" / "seg.json";
  REQUIRE(run("--keep-intermediates segment --model " + model.string() + " --in " + (test_case / "scan.json").string() +
                  " --out " + seg.string(),
              log) == 0);
  CHECK(std::filesystem::exists(seg));
  CHECK(std::filesystem::exists(dir / "out" / "seg_sv.json"));
  CHECK(std::filesystem::exists(dir / "out" / "seg_sv_nopost.json"));
  CHECK(std::filesystem::exists(dir / "out" / "seg_belief.json"));
  CHECK(std::filesystem::exists(dir / "out" / "seg_intermediates" / "sv.json"));

  const auto metrics = dir / "metrics.csv";
  REQUIRE(run("evaluate --seg " + seg.string() + " --truth " + (test_case / "gt.json").string() + " --belief " +
                  (dir / "out" / "seg_belief.json").string() + " --roc " + (dir / "roc.csv").string() + " --out " +
                  metrics.string(),
              log) == 0);
  const auto text = slurp(metrics);
  REQUIRE(text.rfind("case,dsc,sens,spec,auc,detected\nseg,", 0) == 0);
  const double d = std::stod(text.substr(text.find("\nseg,") + 5));
  CHECK(d > 0.2);
  CHECK(slurp(dir / "roc.csv").rfind("threshold,sens,spec\n", 0) == 0);

  // The step-by-step route ends in the same files.
  const auto se = dir / "step" / "se.json";
  REQUIRE(run("preprocess --in " + (test_case / "scan.json").string() + " --out " + se.string(), log) == 0);
  const auto sv = dir / "step" / "sv.json";
  REQUIRE(run("supervoxel --in " + se.string() + " --out " + sv.string(), log) == 0);
  REQUIRE(run("features --se " + se.string() + " --sv " + sv.string() + " --model " + model.string() + " --out " +
                  (dir / "step" / "features.json").string(),
              log) == 0);
  const auto seg2 = dir / "step" / "seg.json";
  REQUIRE(run("segment --model " + model.string() + " --in " + se.string() + " --sv " + sv.string() + " --out " +
                  seg2.string(),
              log) == 0);
  CHECK(slurp(seg2.string().substr(0, seg2.string().size() - 5) + ".raw") ==
        slurp((dir / "out" / "seg.raw").string()));

  const auto cv = dir / "cv.csv";
  REQUIRE(run("crossval --cases " + cases.string() + " --out " + cv.string(), log) == 0);
  CHECK(slurp(cv).find("\nmedian,") != std::string::npos);
}
