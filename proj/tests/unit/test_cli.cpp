#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::current_path() / "cli-work";

struct Run {
  int code;
  std::string output;
};

// Runs the CLI with stdout and stderr captured together.
Run ewflow(const std::string& args) {
  fs::create_directories(kRoot);
  const fs::path log = kRoot / "last_output.txt";
  const std::string cmd = std::string("\"") + EWFLOW_BIN + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string out_args(const std::string& name) {
  return "--out-dir \"" + kRoot.string() + "\" --run-name " + name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Rows after the comment lines and the column header.
std::size_t data_lines(const fs::path& csv) {
  std::ifstream in(csv);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') ++n;
  return n == 0 ? 0 : n - 1;
}

void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

const std::string kTiny = "--dataset gaussian --steps 50 --set model.hidden=16,16 --set sample.n=10";

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("a minimal training run writes its artifacts") {
    const Run r = ewflow("train " + kTiny + " --beta 0 " + out_args("minimal"));
    INFO(r.output);
    REQUIRE(r.code == 0);
    for (const char* f : {"manifest.json", "checkpoint.bin", "log.csv", "report.json"})
      CHECK(fs::exists(kRoot / "minimal" / f));
  }

  TEST_CASE("configuration errors exit with code 2 and name the key") {
    const Run loss = ewflow("train " + kTiny + " --loss nonsense " + out_args("badloss"));
    CHECK(loss.code == 2);
    CHECK(loss.output.find("nonsense") != std::string::npos);

    write_file(kRoot / "typo.cfg", "dataset = gaussian\nstep = 10\n");
    const Run typo = ewflow("train -c \"" + (kRoot / "typo.cfg").string() + "\" " + out_args("typo"));
    CHECK(typo.code == 2);
    CHECK(typo.output.find("step") != std::string::npos);
    CHECK(typo.output.find(":2") != std::string::npos);

    const Run set = ewflow("train --set novalue " + out_args("badset"));
    CHECK(set.code == 2);

    const Run num = ewflow("train " + kTiny + " --set lr=fast " + out_args("badnum"));
    CHECK(num.code == 2);
    CHECK(num.output.find("lr") != std::string::npos);
  }

  TEST_CASE("sampling defaults and reproducibility") {
    REQUIRE(ewflow("train " + kTiny + " " + out_args("tosample")).code == 0);
    const std::string ckpt = "--checkpoint \"" + (kRoot / "tosample" / "checkpoint.bin").string() + "\"";

    const Run a = ewflow("sample " + ckpt + " --seed 5 " + out_args("sample-a"));
    INFO(a.output);
    REQUIRE(a.code == 0);
    CHECK(data_lines(kRoot / "sample-a" / "samples.csv") == 2000);
    const std::string report = slurp(kRoot / "sample-a" / "report.json");
    CHECK(report.find("\"heun\"") != std::string::npos);

    REQUIRE(ewflow("sample " + ckpt + " --seed 5 " + out_args("sample-b")).code == 0);
    CHECK(slurp(kRoot / "sample-a" / "samples.csv") == slurp(kRoot / "sample-b" / "samples.csv"));

    REQUIRE(ewflow("sample " + ckpt + " --seed 6 -n 100 " + out_args("sample-c")).code == 0);
    CHECK(data_lines(kRoot / "sample-c" / "samples.csv") == 100);
  }

  TEST_CASE("broken checkpoints are runtime failures") {
    write_file(kRoot / "broken.bin", "{\"not\": \"a checkpoint\"}\n garbage");
    const Run r = ewflow("sample --checkpoint \"" + (kRoot / "broken.bin").string() + "\" " + out_args("broken"));
    CHECK(r.code == 1);
    const Run missing = ewflow("sample --checkpoint \"" + (kRoot / "nope.bin").string() + "\" " + out_args("nope"));
    CHECK(missing.code == 1);
  }

  TEST_CASE("reruns reproduce a run") {
    REQUIRE(ewflow("train " + kTiny + " --seed 3 " + out_args("orig")).code == 0);
    const Run r = ewflow("rerun \"" + (kRoot / "orig" / "manifest.json").string() + "\" --verify");
    INFO(r.output);
    CHECK(r.code == 0);
  }

  TEST_CASE("compare-guidance smoke run") {
    const Run r = ewflow("compare-guidance --steps 100 --betas 0,2 --set model.hidden=16 --set sample.n=200 " +
                         out_args("compare"));
    INFO(r.output);
    REQUIRE(r.code == 0);
    const std::string report = slurp(kRoot / "compare" / "report.json");
    CHECK(report.find("CFG_tv") != std::string::npos);
    CHECK(report.find("EWD_tv") != std::string::npos);
  }

  TEST_CASE("qipo smoke runs") {
    const std::string quick =
        "--env bandit --epochs 2 --support 4 --set pretrain.steps=50 --set qipo.steps_per_epoch=3 "
        "--set qipo.eval_every=1 --set qipo.eval_samples=50 --set data.size=64 ";
    for (const char* mode : {"oracle", "learned"}) {
      CAPTURE(mode);
      const Run r = ewflow("qipo " + quick + "--q-mode " + mode + " --set q.steps=50 " + out_args(std::string("qipo-") + mode));
      INFO(r.output);
      CHECK(r.code == 0);
      CHECK(fs::exists(kRoot / (std::string("qipo-") + mode) / "log.csv"));
    }
    const Run norenew = ewflow("qipo " + quick + "--renew 1000 " + out_args("qipo-norenew"));
    CHECK(norenew.code == 0);
    const Run chain = ewflow("qipo --env chain --set q.steps=100 --set data.size=100 " + out_args("qipo-chain"));
    CHECK(chain.code == 0);
    CHECK(ewflow("qipo --env maze " + out_args("qipo-maze")).code == 2);
  }

  TEST_CASE("selftest passes and reports timings") {
    const Run r = ewflow("selftest");
    CHECK(r.code == 0);
    CHECK(r.output.find("PASS") != std::string::npos);
    CHECK(r.output.find("FAIL") == std::string::npos);
  }
}
