#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

const char* cli = RULELEARN_CLI_PATH;

struct RunResult {
  int status = -1;
  std::string output;
};

RunResult run(const std::string& args) {
  std::string out_file = (fs::temp_directory_path() / "rulelearn_cli_out.txt").string();
  std::string cmd = std::string(cli) + " " + args + " > " + out_file + " 2>&1";
  int rc = std::system(cmd.c_str());
  RunResult r;
  r.status = WEXITSTATUS(rc);
  std::ifstream f(out_file);
  std::stringstream ss;
  ss << f.rdbuf();
  r.output = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("rulelearn_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string s(const std::string& sub) const { return (path / sub).string(); }
};

}  // namespace

TEST_CASE("gen-es writes the split files and validates --n") {
  TempDir tmp;
  RunResult r = run("gen-es --n 10 --out " + tmp.s("es10"));
  CHECK(r.status == 0);
  CHECK(fs::exists(tmp.s("es10") + "/meta.tsv"));
  CHECK(fs::exists(tmp.s("es10") + "/train.txt"));
  CHECK(fs::exists(tmp.s("es10") + "/test.txt"));
  CHECK(fs::exists(tmp.s("es10") + "/manifest.json"));
  CHECK(r.output.find("15 facts") != std::string::npos);

  RunResult bad = run("gen-es --n 1 --out " + tmp.s("bad"));
  CHECK(bad.status == 1);
  CHECK(bad.output.find("InvalidSize") != std::string::npos);
}

TEST_CASE("full pipeline: gen-es, train, extract, eval") {
  TempDir tmp;
  REQUIRE(run("gen-es --n 10 --out " + tmp.s("kb")).status == 0);

  // config file + flag overrides
  {
    std::ofstream cfg(tmp.s("train.cfg"));
    cfg << "# ES training settings\n"
        << "T=2\nL=1\nC=2\nd=32\n"
        << "lr=3e-3\nepochs=400\nneg_ratio=1.0\n"
        << "restarts=6\nanchored_restarts=1\n";
  }
  RunResult tr = run("--seed 0 train --kb " + tmp.s("kb") + " --targets Even,Zero --config " +
                     tmp.s("train.cfg") + " --out " + tmp.s("run"));
  CHECK(tr.status == 0);
  REQUIRE(fs::exists(tmp.s("run") + "/checkpoint.bin"));
  CHECK(fs::exists(tmp.s("run") + "/report.txt"));
  CHECK(fs::exists(tmp.s("run") + "/manifest.json"));

  RunResult ex = run("extract --checkpoint " + tmp.s("run") + "/checkpoint.bin --out " +
                     tmp.s("rules.txt"));
  CHECK(ex.status == 0);
  std::string rules = slurp(tmp.s("rules.txt"));
  CHECK(rules.find("Even(X)") != std::string::npos);
  CHECK(rules.find("Zero(X)") != std::string::npos);

  RunResult ev = run("--seed 1 eval --rules " + tmp.s("rules.txt") + " --kb " + tmp.s("kb") +
                     " --split test");
  CHECK(ev.status == 0);
  CHECK(ev.output.find("accuracy=1.000000") != std::string::npos);

  // soft evaluation from the checkpoint
  RunResult evs = run("eval --checkpoint " + tmp.s("run") + "/checkpoint.bin --kb " + tmp.s("kb") +
                      " --split test");
  CHECK(evs.status == 0);
  CHECK(evs.output.find("mrr=") != std::string::npos);

  // variable-form and ast renderings
  CHECK(run("extract --checkpoint " + tmp.s("run") + "/checkpoint.bin --variable-form --out " +
            tmp.s("rules_var.txt"))
            .status == 0);
  CHECK(slurp(tmp.s("rules_var.txt")).find("Y1") != std::string::npos);
  CHECK(run("extract --checkpoint " + tmp.s("run") + "/checkpoint.bin --ast --out " +
            tmp.s("rules_ast.txt"))
            .status == 0);
  CHECK(slurp(tmp.s("rules_ast.txt")).find("(rule ") != std::string::npos);
}

TEST_CASE("reproducibility: identical flags and seed give byte-identical artifacts") {
  TempDir tmp;
  REQUIRE(run("gen-es --n 10 --out " + tmp.s("kb")).status == 0);
  std::string flags = "--seed 7 train --kb " + tmp.s("kb") +
                      " --targets Even --epochs 30 --lr 1e-3 --out ";
  REQUIRE(run(flags + tmp.s("a")).status == 0);
  REQUIRE(run(flags + tmp.s("b")).status == 0);
  CHECK(slurp(tmp.s("a") + "/report.txt") == slurp(tmp.s("b") + "/report.txt"));
  CHECK(slurp(tmp.s("a") + "/checkpoint.bin") == slurp(tmp.s("b") + "/checkpoint.bin"));

  REQUIRE(run("extract --checkpoint " + tmp.s("a") + "/checkpoint.bin --out " + tmp.s("ra.txt"))
              .status == 0);
  REQUIRE(run("extract --checkpoint " + tmp.s("b") + "/checkpoint.bin --out " + tmp.s("rb.txt"))
              .status == 0);
  CHECK(slurp(tmp.s("ra.txt")) == slurp(tmp.s("rb.txt")));

  std::string eval_flags = "--seed 3 eval --rules " + tmp.s("ra.txt") + " --kb " + tmp.s("kb") +
                           " --split test --out ";
  REQUIRE(run(eval_flags + tmp.s("ma.txt")).status == 0);
  REQUIRE(run(eval_flags + tmp.s("mb.txt")).status == 0);
  CHECK(slurp(tmp.s("ma.txt")) == slurp(tmp.s("mb.txt")));
}

TEST_CASE("eval flag conflicts and missing files are reported") {
  TempDir tmp;
  REQUIRE(run("gen-es --n 10 --out " + tmp.s("kb")).status == 0);
  RunResult both = run("eval --checkpoint x.bin --rules y.txt --kb " + tmp.s("kb"));
  CHECK(both.status == 1);
  CHECK(both.output.find("FlagConflict") != std::string::npos);
  RunResult neither = run("eval --kb " + tmp.s("kb"));
  CHECK(neither.status == 1);
  RunResult missing = run("eval --checkpoint " + tmp.s("nope.bin") + " --kb " + tmp.s("kb"));
  CHECK(missing.status == 1);
  CHECK(missing.output.find("IoFailure") != std::string::npos);
}

TEST_CASE("check-grad reports pass under the default config") {
  RunResult r = run("--seed 1 check-grad");
  CHECK(r.status == 0);
  CHECK(r.output.find("PASS") != std::string::npos);
}

TEST_CASE("train rejects unknown targets") {
  TempDir tmp;
  REQUIRE(run("gen-es --n 10 --out " + tmp.s("kb")).status == 0);
  RunResult r = run("train --kb " + tmp.s("kb") + " --targets Nope --epochs 1 --out " + tmp.s("r"));
  CHECK(r.status == 1);
  CHECK(r.output.find("UnknownPredicate") != std::string::npos);
}
