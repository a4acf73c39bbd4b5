#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "app.hpp"

using namespace ewflow;
using namespace ewflow::app;

namespace {

// Flags that map onto config keys; values given on the command line override
// the config file.
struct Overrides {
  std::string config_path;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;

  void bind(CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
    sub->add_option(flag, flags[key], help + " [" + key + "]");
  }

  Config build() const {
    Config c = config_path.empty() ? Config() : Config::load(config_path);
    for (const auto& [key, value] : flags)
      if (!value.empty()) c.set(key, value);
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw ConfigError("--set", 0, kv, "expected key=value, got '" + kv + "'");
      c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return c;
  }
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("-c,--config", o.config_path, "Config file (flat key = value)");
  sub->add_option("--set", o.sets, "Extra key=value config entries (repeatable)");
  o.bind(sub, "--out-dir", "run.out_dir", "Output root");
  o.bind(sub, "--run-name", "run.name", "Run directory name");
  o.bind(sub, "--seed", "seed", "Master seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ewflow: energy-weighted flow matching and diffusion on synthetic densities"};
  app.require_subcommand(1);
  app.set_version_flag("--version", EWFLOW_VERSION);

  std::map<std::string, Overrides> ov;

  auto* train = app.add_subcommand("train", "Train a density model (CFM, CEFM, EFM_EXACT, CED, ED_EXACT, CFG, CED_BETA_INPUT)");
  add_common(train, ov["train"]);
  ov["train"].bind(train, "--dataset", "dataset", "Dataset name");
  ov["train"].bind(train, "--loss", "loss", "Loss kind");
  ov["train"].bind(train, "--beta", "energy.beta", "Guidance scale");
  ov["train"].bind(train, "--steps", "steps", "Training steps");
  ov["train"].bind(train, "--lr", "lr", "Adam learning rate");
  ov["train"].bind(train, "--batch", "batch", "Batch size");

  auto* sample = app.add_subcommand("sample", "Sample a trained checkpoint");
  add_common(sample, ov["sample"]);
  ov["sample"].bind(sample, "--checkpoint", "checkpoint", "Checkpoint path");
  ov["sample"].bind(sample, "-n,--n", "sample.n", "Number of samples (default 2000)");
  ov["sample"].bind(sample, "--sampler", "sample.sampler", "euler | heun | ancestral (default heun)");
  ov["sample"].bind(sample, "--steps", "sample.steps", "Sampler steps (default 15)");
  ov["sample"].bind(sample, "--beta", "sample.beta", "Guidance scale for CFG or beta-input checkpoints");

  auto* eval = app.add_subcommand("eval", "Compare a samples CSV against the oracle tilted density");
  add_common(eval, ov["eval"]);
  ov["eval"].bind(eval, "--samples", "samples", "Samples CSV");
  ov["eval"].bind(eval, "--dataset", "dataset", "Dataset name");
  ov["eval"].bind(eval, "--beta", "energy.beta", "Guidance scale");

  auto* cg = app.add_subcommand("compare-guidance", "EWD vs classifier-free guidance against the oracle, per beta");
  add_common(cg, ov["compare-guidance"]);
  ov["compare-guidance"].bind(cg, "--dataset", "dataset", "Dataset name (default bimodal)");
  ov["compare-guidance"].bind(cg, "--betas", "betas", "Comma-separated beta list (default 0,1,2,4)");
  ov["compare-guidance"].bind(cg, "--steps", "steps", "Training steps per model");

  auto* qipo = app.add_subcommand("qipo", "Q-weighted iterative policy optimization on an analytic environment");
  add_common(qipo, ov["qipo"]);
  ov["qipo"].bind(qipo, "--env", "env", "bandit | chain");
  ov["qipo"].bind(qipo, "--q-mode", "q.mode", "oracle | learned");
  ov["qipo"].bind(qipo, "--renew", "qipo.renew", "Support renewal period in epochs (default 10)");
  ov["qipo"].bind(qipo, "--epochs", "qipo.epochs", "Q-weighted epochs K3 (default 100)");
  ov["qipo"].bind(qipo, "-M,--support", "qipo.m", "Sampled support actions per state (default 16)");
  ov["qipo"].bind(qipo, "--beta", "qipo.beta", "Guidance scale");

  auto* selftest = app.add_subcommand("selftest", "Run the invariant suite and print a table");
  bool flip = false;
  std::string selftest_json;
  selftest->add_flag("--inject-sign-flip", flip, "Test fixture: flip the sign of cond_score");
  selftest->add_option("--json", selftest_json, "Also write the table as JSON");

  auto* rerun = app.add_subcommand("rerun", "Re-execute a run from its manifest.json");
  std::string manifest, rerun_out, rerun_name;
  bool verify = false;
  rerun->add_option("manifest", manifest, "Path to manifest.json")->required();
  rerun->add_option("--out-dir", rerun_out, "Output root for the rerun");
  rerun->add_option("--run-name", rerun_name, "Run name (default <name>-rerun)");
  rerun->add_flag("--verify", verify, "Compare output hashes with the original manifest");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (*selftest) return cmd_selftest(flip, selftest_json);
    if (*rerun) return cmd_rerun(manifest, rerun_out, rerun_name, verify);
    for (auto* sub : app.get_subcommands()) {
      const std::string name = sub->get_name();
      return run_command(name, ov.at(name).build());
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "ewflow: config error: %s\n", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ewflow: %s\n", e.what());
    return kRuntimeFailure;
  }
  return kRuntimeFailure;
}
