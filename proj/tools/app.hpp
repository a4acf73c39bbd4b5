#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>

#include "ewflow/config.hpp"
#include "ewflow/energy.hpp"
#include "ewflow/gmm.hpp"
#include "ewflow/guidance.hpp"
#include "ewflow/qipo.hpp"
#include "ewflow/sampling.hpp"
#include "ewflow/training.hpp"
#include "json.hpp"

namespace ewflow::app {

using nlohmann::json;

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kRuntimeFailure = 1;
inline constexpr int kConfigError = 2;

// One run directory out/<run-name>/ and what has been written into it.
class RunDir {
 public:
  RunDir(const std::string& command, const Config& cfg);

  const std::string& path() const { return path_; }
  std::string file(const std::string& name) const { return path_ + "/" + name; }

  // Writes a file and records it in the manifest.
  void write(const std::string& name, const std::string& bytes);
  void record(const std::string& name);  // for files written by library calls
  void set_timing(const std::string& key, json value) { timing_[key] = std::move(value); }
  void finish(const std::string& status);

 private:
  std::string command_;
  std::string config_text_;
  std::uint64_t seed_;
  std::string path_;
  json outputs_ = json::object();
  json timing_ = json::object();
  double start_ms_;
};

// Content hash that ignores wall-clock columns (log.csv) and equals the byte
// hash for every other file.
std::uint64_t deterministic_hash(const std::string& name, const std::string& bytes);
std::string read_file(const std::string& path);

// Config translation; invalid values raise ConfigError at the key's line.
std::set<std::string> common_keys();
std::set<std::string> energy_keys();
std::set<std::string> train_keys();
std::set<std::string> sampler_keys();

GaussianMixture dataset_from(const Config& c);
Energy energy_from(const Config& c, int dim);
TrainConfig train_config_from(const Config& c);
SamplerConfig sampler_from(const Config& c);

json to_json(const Vec& v);
std::string to_csv(const PointSet& pts, const std::string& metadata);

int cmd_train(const Config& c);
int cmd_sample(const Config& c);
int cmd_eval(const Config& c);
int cmd_compare_guidance(const Config& c);
int cmd_qipo(const Config& c);
int cmd_selftest(bool inject_sign_flip, const std::string& json_out);
int cmd_rerun(const std::string& manifest, const std::string& out_dir, const std::string& run_name, bool verify);

// Dispatch by command name with a fully populated config.
int run_command(const std::string& command, const Config& c);

}  // namespace ewflow::app
