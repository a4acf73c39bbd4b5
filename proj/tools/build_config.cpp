#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "app.hpp"
#include "ewflow/checkpoint.hpp"
#include "ewflow/datasets.hpp"

#ifndef EWFLOW_GIT_DESCRIBE
#define EWFLOW_GIT_DESCRIBE "unknown"
#endif
#ifndef EWFLOW_VERSION
#define EWFLOW_VERSION "0.0.0"
#endif

namespace ewflow::app {

namespace fs = std::filesystem;

namespace {

double now_ms() {
  return std::chrono::duration<double, std::milli>(std::chrono::system_clock::now().time_since_epoch()).count();
}

// Runs f and converts argument errors into a ConfigError at `key`.
template <class F>
auto keyed(const Config& c, const std::string& key, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(c.source(), c.line_of(key), key, key + ": " + e.what());
  } catch (const std::domain_error& e) {
    throw ConfigError(c.source(), c.line_of(key), key, key + ": " + e.what());
  }
}

Vec vec_of(const std::vector<double>& v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::uint64_t deterministic_hash(const std::string& name, const std::string& bytes) {
  if (name != "log.csv") return fnv1a64(bytes);
  std::istringstream is(bytes);
  std::string line;
  if (!std::getline(is, line)) return fnv1a64(bytes);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  int skip = -1;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == "wallclock_ms") skip = static_cast<int>(i);
  if (skip < 0) return fnv1a64(bytes);
  std::string kept;
  is.clear();
  is.seekg(0);
  while (std::getline(is, line)) {
    std::stringstream ss(line);
    std::string cell;
    int col = 0;
    while (std::getline(ss, cell, ',')) {
      if (col++ != skip) kept += cell + ",";
    }
    kept += "\n";
  }
  return fnv1a64(kept);
}

RunDir::RunDir(const std::string& command, const Config& cfg)
    : command_(command), config_text_(cfg.to_text()), seed_(cfg.get_u64("seed", 0)), start_ms_(now_ms()) {
  const std::string out_dir = cfg.get_string("run.out_dir", "out");
  const std::string name = cfg.get_string("run.name", command + "-" + std::to_string(seed_));
  if (name.empty() || name.find('/') != std::string::npos)
    throw ConfigError(cfg.source(), cfg.line_of("run.name"), "run.name", "run.name must be a plain directory name");
  path_ = (fs::path(out_dir) / name).string();
  fs::create_directories(path_);
  for (const char* f : {"manifest.json", "checkpoint.bin", "log.csv", "samples.csv", "report.json"}) fs::remove(file(f));
}

void RunDir::write(const std::string& name, const std::string& bytes) {
  std::ofstream f(file(name), std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + file(name));
  f << bytes;
  f.close();
  record(name);
}

void RunDir::record(const std::string& name) {
  const std::string bytes = read_file(file(name));
  outputs_[name] = {{"path", fs::absolute(file(name)).string()},
                    {"bytes", bytes.size()},
                    {"fnv1a64", hex64(fnv1a64(bytes))},
                    {"deterministic_fnv1a64", hex64(deterministic_hash(name, bytes))}};
}

void RunDir::finish(const std::string& status) {
  json m;
  m["command"] = command_;
  m["config"] = config_text_;
  m["seed"] = seed_;
  m["git_describe"] = EWFLOW_GIT_DESCRIBE;
  m["version"] = EWFLOW_VERSION;
  m["outputs"] = outputs_;
  m["wallclock_ms"] = now_ms() - start_ms_;
  m["timing"] = timing_;
  m["status"] = status;
  std::ofstream f(file("manifest.json"));
  f << m.dump(2) << "\n";
}

json to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

std::string to_csv(const PointSet& pts, const std::string& metadata) {
  std::ostringstream os;
  write_samples_csv(os, pts, metadata);
  return os.str();
}

std::set<std::string> common_keys() { return {"seed", "run.name", "run.out_dir"}; }

std::set<std::string> energy_keys() {
  return {"energy.kind", "energy.base", "energy.a", "energy.matrix", "energy.center", "energy.offset", "energy.file",
          "energy.beta"};
}

std::set<std::string> sampler_keys() { return {"sample.n", "sample.sampler", "sample.steps", "sample.seed", "sample.beta"}; }

std::set<std::string> train_keys() {
  std::set<std::string> k = {"dataset",        "path.kind",      "path.sigma_min",      "path.beta_min",
                             "path.beta_max",  "loss",           "score.param",         "time_weight",
                             "steps",          "batch",          "lr",                  "beta_max",
                             "log_every",      "model.hidden",   "model.time_embed_dim", "model.max_frequency",
                             "exact.resolution", "exact.time_nodes", "eval.sw_projections", "eval.oracle_samples"};
  for (const auto& s : energy_keys()) k.insert(s);
  for (const auto& s : sampler_keys()) k.insert(s);
  for (const auto& s : common_keys()) k.insert(s);
  return k;
}

GaussianMixture dataset_from(const Config& c) {
  const std::string name = c.get_string("dataset", "gaussian");
  return keyed(c, "dataset", [&] { return make_dataset(name); });
}

namespace {

Energy base_energy(const Config& c, const std::string& kind, const std::string& key, int dim) {
  const double offset = c.get_double("energy.offset", 0.0);
  if (kind == "linear") {
    const Vec a = vec_of(c.get_doubles("energy.a", std::vector<double>(static_cast<std::size_t>(dim), 1.0)));
    if (a.size() != dim)
      throw ConfigError(c.source(), c.line_of("energy.a"), "energy.a", "energy.a needs " + std::to_string(dim) + " entries");
    return Energy::linear(a, offset);
  }
  if (kind == "quadratic") {
    std::vector<double> id(static_cast<std::size_t>(dim * dim), 0.0);
    for (int i = 0; i < dim; ++i) id[static_cast<std::size_t>(i * dim + i)] = 1.0;
    const std::vector<double> m = c.get_doubles("energy.matrix", id);
    if (static_cast<int>(m.size()) != dim * dim)
      throw ConfigError(c.source(), c.line_of("energy.matrix"), "energy.matrix",
                        "energy.matrix needs " + std::to_string(dim * dim) + " row-major entries");
    Mat A(dim, dim);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) A(i, j) = m[static_cast<std::size_t>(i * dim + j)];
    const Vec center = vec_of(c.get_doubles("energy.center", std::vector<double>(static_cast<std::size_t>(dim), 0.0)));
    if (center.size() != dim)
      throw ConfigError(c.source(), c.line_of("energy.center"), "energy.center",
                        "energy.center needs " + std::to_string(dim) + " entries");
    return keyed(c, "energy.matrix", [&] { return Energy::quadratic(A, center, offset); });
  }
  if (kind == "tabulated") {
    const std::string path = c.get_string("energy.file", "");
    if (path.empty()) throw ConfigError(c.source(), c.line_of(key), key, "tabulated energies need energy.file");
    std::ifstream f(path);
    if (!f) throw ConfigError(c.source(), c.line_of("energy.file"), "energy.file", "cannot open energy.file '" + path + "'");
    const DensityGrid g = keyed(c, "energy.file", [&] { return DensityGrid::read(f); });
    if (g.dim() != dim) throw ConfigError(c.source(), c.line_of("energy.file"), "energy.file", "energy grid dimension mismatch");
    return Energy::tabulated(g, offset);
  }
  throw ConfigError(c.source(), c.line_of(key), key,
                    "unknown " + key + " '" + kind + "' (expected linear, quadratic, tabulated" +
                        (key == "energy.kind" ? std::string(" or classifier)") : std::string(")")));
}

}  // namespace

Energy energy_from(const Config& c, int dim) {
  const std::string kind = c.get_string("energy.kind", "linear");
  if (kind == "classifier") {
    const std::string base = c.get_string("energy.base", "quadratic");
    const Energy b = base_energy(c, base, "energy.base", dim);
    return keyed(c, "energy.base", [&] { return Energy::classifier(b); });
  }
  return base_energy(c, kind, "energy.kind", dim);
}

TrainConfig train_config_from(const Config& c) {
  TrainConfig t;
  t.dataset = c.get_string("dataset", "gaussian");
  const GaussianMixture p0 = dataset_from(c);
  t.energy = energy_from(c, p0.dim());
  t.beta = c.get_double("energy.beta", 1.0);
  if (!(t.beta >= 0.0)) throw ConfigError(c.source(), c.line_of("energy.beta"), "energy.beta", "energy.beta must be >= 0");
  t.loss = keyed(c, "loss", [&] { return loss_kind_from_string(c.get_string("loss", "CED")); });
  const ModelRole role = role_for_loss(t.loss);
  const std::string default_path = role == ModelRole::Velocity ? "ot" : "vp";
  t.path.kind = keyed(c, "path.kind", [&] { return path_kind_from_string(c.get_string("path.kind", default_path)); });
  t.path.sigma_min = c.get_double("path.sigma_min", t.path.sigma_min);
  t.path.beta_min = c.get_double("path.beta_min", t.path.beta_min);
  t.path.beta_max = c.get_double("path.beta_max", t.path.beta_max);
  t.score_param = keyed(c, "score.param", [&] { return score_param_from_string(c.get_string("score.param", "direct")); });
  const std::string default_tw = role == ModelRole::Velocity ? "uniform" : "sigma2";
  t.time_weight = keyed(c, "time_weight", [&] { return time_weight_from_string(c.get_string("time_weight", default_tw)); });
  t.steps = c.get_int("steps", t.steps);
  t.batch = static_cast<int>(c.get_int("batch", t.batch));
  t.lr = c.get_double("lr", t.lr);
  t.seed = c.get_u64("seed", 0);
  t.beta_max = c.get_double("beta_max", t.beta_max);
  t.log_every = static_cast<int>(c.get_int("log_every", t.log_every));
  t.model.hidden = c.get_ints("model.hidden", t.model.hidden);
  t.model.time_embed_dim = static_cast<int>(c.get_int("model.time_embed_dim", t.model.time_embed_dim));
  t.model.max_frequency = c.get_double("model.max_frequency", t.model.max_frequency);
  t.exact_resolution = static_cast<int>(c.get_int("exact.resolution", t.exact_resolution));
  t.exact_time_nodes = static_cast<int>(c.get_int("exact.time_nodes", t.exact_time_nodes));

  auto positive = [&](const std::string& key, bool ok) {
    if (!ok) throw ConfigError(c.source(), c.line_of(key), key, key + " must be positive");
  };
  positive("steps", t.steps > 0);
  positive("batch", t.batch >= 2);
  positive("lr", t.lr > 0.0);
  positive("beta_max", t.beta_max > 0.0);
  positive("log_every", t.log_every > 0);
  positive("model.time_embed_dim", t.model.time_embed_dim >= 0 && t.model.time_embed_dim % 2 == 0);
  positive("model.hidden", !t.model.hidden.empty() &&
                               std::all_of(t.model.hidden.begin(), t.model.hidden.end(), [](int h) { return h > 0; }));
  if ((t.loss == LossKind::EFM_EXACT || t.loss == LossKind::ED_EXACT) && p0.dim() > 2)
    throw ConfigError(c.source(), c.line_of("loss"), "loss", "exact losses need a dataset of dimension <= 2");
  if ((t.loss == LossKind::CFG_UNCOND || t.loss == LossKind::CFG_COND) && !t.energy.is_classifier())
    throw ConfigError(c.source(), c.line_of("energy.kind"), "energy.kind", "CFG training needs energy.kind = classifier");
  return t;
}

SamplerConfig sampler_from(const Config& c) {
  SamplerConfig s;
  s.n = static_cast<std::size_t>(c.get_u64("sample.n", 2000));
  s.kind = keyed(c, "sample.sampler", [&] { return sampler_kind_from_string(c.get_string("sample.sampler", "heun")); });
  s.steps = static_cast<int>(c.get_int("sample.steps", 15));
  s.seed = c.get_u64("sample.seed", c.get_u64("seed", 0));
  if (s.n < 1) throw ConfigError(c.source(), c.line_of("sample.n"), "sample.n", "sample.n must be positive");
  if (s.steps < 1) throw ConfigError(c.source(), c.line_of("sample.steps"), "sample.steps", "sample.steps must be positive");
  return s;
}

}  // namespace ewflow::app
