#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "app.hpp"
#include "ewflow/checkpoint.hpp"
#include "ewflow/datasets.hpp"
#include "ewflow/metrics.hpp"
#include "ewflow/oracle.hpp"
#include "ewflow/rl_env.hpp"

namespace ewflow::app {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) { return std::chrono::duration<double, std::milli>(Clock::now() - t0).count(); }

json moments_json(const PointSet& s) {
  const Moments m = sample_moments(s);
  return {{"mean", to_json(m.mean)}, {"var", to_json(m.var)}, {"n", s.cols()}};
}

std::set<std::string> merge(std::initializer_list<std::set<std::string>> sets, std::set<std::string> extra = {}) {
  for (const auto& s : sets) extra.insert(s.begin(), s.end());
  return extra;
}

// Oracle comparison of samples against q0 ∝ p0 exp(-beta E).
json oracle_report(const PointSet& samples, const GaussianMixture& p0, const Energy& energy, double beta, const Config& c,
                   std::uint64_t seed) {
  json r;
  r["beta"] = beta;
  r["samples"] = moments_json(samples);
  try {
    if (auto tilt = tilted_mixture(p0, energy, beta)) r["analytic"] = {{"mean", to_json(tilt->mean())}, {"var", to_json(tilt->variance())}};
  } catch (const std::domain_error&) {
  }
  if (p0.dim() <= 2 && samples.rows() == p0.dim()) {
    const EnergySpec spec{energy, beta};
    const int bins = static_cast<int>(c.get_int("tv.bins", 64));
    const auto axes = GuidedOracle::default_axes(p0, spec, bins);
    Vec lo(p0.dim()), hi(p0.dim());
    for (int d = 0; d < p0.dim(); ++d) {
      lo[d] = axes[static_cast<std::size_t>(d)].lo;
      hi[d] = axes[static_cast<std::size_t>(d)].hi;
    }
    const int refine = p0.dim() == 1 ? 16 : 4;
    const DensityGrid coarse = oracle_q0_bins(p0, energy, beta, lo, hi, bins, refine);
    const GuidedOracle fine(p0, spec, PathSchedule::ot(), make_axes(lo, hi, bins * refine));
    Rng rng = Rng(seed).split(0x0a11);
    const PointSet ref = fine.guided_q0_grid().sample(rng, static_cast<std::size_t>(c.get_u64("eval.oracle_samples", 2000)));
    Rng proj = rng.split(1);
    const TvResult tv = grid_tv_distance(samples, coarse);
    r["oracle"] = {{"grid_tv", tv.tv},
                   {"clipped_fraction", tv.clipped_fraction},
                   {"tv_bins", bins},
                   {"sliced_wasserstein", sliced_wasserstein(samples, ref, static_cast<int>(c.get_int("eval.sw_projections", 64)), proj)},
                   {"oracle_samples", ref.cols()},
                   {"normalization_constant", fine.normalization_constant()}};
  }
  return r;
}

std::optional<double> optional_double(const Config& c, const std::string& key) {
  if (!c.has(key)) return std::nullopt;
  return c.get_double(key, 0.0);
}

std::string dumps(const json& j) { return j.dump(2) + "\n"; }

}  // namespace

int cmd_train(const Config& c) {
  c.require_known(train_keys());
  const TrainConfig t = train_config_from(c);
  const SamplerConfig s = sampler_from(c);
  const GaussianMixture p0 = dataset_from(c);
  RunDir run("train", c);

  auto t0 = Clock::now();
  const TrainResult r = train_density_model(t);
  run.set_timing("train_ms", ms_since(t0));
  const ModelMeta meta = make_model_meta(t, r);
  save_checkpoint(run.file("checkpoint.bin"), r.model, model_meta_to_json(meta));
  run.record("checkpoint.bin");
  std::ostringstream log;
  write_train_log(log, r.log);
  run.write("log.csv", log.str());

  const auto sample_beta = optional_double(c, "sample.beta");
  t0 = Clock::now();
  const PointSet samples = sample_trained(r.model, meta, s, sample_beta);
  const double sample_ms = ms_since(t0);
  run.set_timing("sample_ms", sample_ms);
  run.set_timing("sample_us_per_point", 1e3 * sample_ms / static_cast<double>(s.n));
  run.write("samples.csv", to_csv(samples, "train " + t.dataset + " " + to_string(t.loss) + " sampler=" + to_string(s.kind) +
                                                 " steps=" + std::to_string(s.steps)));

  // CFG and beta-input models are compared at their sampling beta.
  const bool guided_at_sample_beta = t.loss == LossKind::CFG_UNCOND || t.loss == LossKind::CFG_COND ||
                                     t.loss == LossKind::CED_BETA_INPUT;
  const double eval_beta = guided_at_sample_beta ? sample_beta.value_or(t.beta) : (t.loss == LossKind::CFM ? 0.0 : t.beta);
  json report = oracle_report(samples, p0, t.energy, eval_beta, c, s.seed);
  report["loss"] = to_string(t.loss);
  report["final_loss"] = r.log.empty() ? 0.0 : r.log.back().loss;
  report["steps"] = t.steps;
  report["param_count"] = r.model.param_count();
  report["sampler"] = {{"kind", to_string(s.kind)}, {"steps", s.steps}, {"seed", s.seed}};
  run.write("report.json", dumps(report));
  run.finish("ok");
  std::printf("train: %s, final loss %.5g -> %s\n", to_string(t.loss).c_str(), report["final_loss"].get<double>(),
              run.path().c_str());
  return kOk;
}

int cmd_sample(const Config& c) {
  c.require_known(merge({common_keys(), sampler_keys()}, {"checkpoint"}));
  const std::string path = c.get_string("checkpoint");
  const SamplerConfig s = sampler_from(c);
  const Checkpoint ck = load_checkpoint(path);
  const ModelMeta meta = model_meta_from_json(ck.meta_json);
  RunDir run("sample", c);
  const auto t0 = Clock::now();
  const PointSet samples = sample_trained(ck.model, meta, s, optional_double(c, "sample.beta"));
  const double ms = ms_since(t0);
  run.set_timing("sample_ms", ms);
  run.set_timing("sample_us_per_point", 1e3 * ms / static_cast<double>(s.n));
  run.write("samples.csv", to_csv(samples, "sample " + fs::path(path).filename().string() + " sampler=" +
                                               to_string(s.kind) + " steps=" + std::to_string(s.steps)));
  json report;
  report["checkpoint_fnv1a64"] = hex64(fnv1a64_file(path));
  report["sampler"] = {{"kind", to_string(s.kind)}, {"steps", s.steps}, {"seed", s.seed}, {"n", s.n}};
  report["samples"] = moments_json(samples);
  run.write("report.json", dumps(report));
  run.finish("ok");
  std::printf("sample: %zu points -> %s\n", s.n, run.path().c_str());
  return kOk;
}

int cmd_eval(const Config& c) {
  c.require_known(merge({common_keys(), energy_keys()},
                        {"samples", "dataset", "tv.bins", "eval.sw_projections", "eval.oracle_samples"}));
  const std::string path = c.get_string("samples");
  const GaussianMixture p0 = dataset_from(c);
  const Energy energy = energy_from(c, p0.dim());
  const double beta = c.get_double("energy.beta", 1.0);
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open samples file " + path);
  const PointSet samples = read_samples_csv(f);
  if (samples.rows() != p0.dim()) throw std::runtime_error("samples dimension does not match dataset");
  RunDir run("eval", c);
  json report = oracle_report(samples, p0, energy, beta, c, c.get_u64("seed", 0));
  report["samples_file_fnv1a64"] = hex64(fnv1a64_file(path));
  run.write("report.json", dumps(report));
  run.finish("ok");
  std::cout << report.dump(2) << "\n";
  return kOk;
}

int cmd_compare_guidance(const Config& input) {
  Config c = input;
  c.require_known(merge({train_keys()}, {"betas", "ewd.mode", "tv.bins", "tv.lo", "tv.hi", "tv.refine"}));
  if (!c.has("dataset")) c.set("dataset", "bimodal");
  if (!c.has("energy.kind")) {
    c.set("energy.kind", "classifier");
    c.set("energy.base", "quadratic");
    c.set("energy.matrix", "0.25");
    c.set("energy.center", "2");
  }
  if (!c.has("loss")) c.set("loss", "CED");
  CompareGuidanceConfig g;
  g.train = train_config_from(c);
  g.dataset = g.train.dataset;
  g.energy = g.train.energy;
  if (!g.energy.is_classifier())
    throw ConfigError(c.source(), c.line_of("energy.kind"), "energy.kind", "compare-guidance needs energy.kind = classifier");
  const auto betas = c.get_doubles("betas", {0.0, 1.0, 2.0, 4.0});
  g.betas = betas;
  try {
    g.ewd_mode = ewd_mode_from_string(c.get_string("ewd.mode", "beta-input"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(c.source(), c.line_of("ewd.mode"), "ewd.mode", e.what());
  }
  g.sampler = sampler_from(c);
  g.tv_bins = static_cast<int>(c.get_int("tv.bins", 64));
  g.oracle_refine = static_cast<int>(c.get_int("tv.refine", 8));
  g.oracle_samples = static_cast<std::size_t>(c.get_u64("eval.oracle_samples", 2000));
  g.sw_projections = static_cast<int>(c.get_int("eval.sw_projections", 64));
  if (c.has("tv.lo") || c.has("tv.hi")) {
    const auto lo = c.get_doubles("tv.lo", {});
    const auto hi = c.get_doubles("tv.hi", {});
    g.box_lo = Eigen::Map<const Vec>(lo.data(), static_cast<Eigen::Index>(lo.size()));
    g.box_hi = Eigen::Map<const Vec>(hi.data(), static_cast<Eigen::Index>(hi.size()));
  }
  RunDir run("compare-guidance", c);
  const auto t0 = Clock::now();
  const CompareGuidanceResult r = compare_guidance(g);
  run.set_timing("total_ms", ms_since(t0));

  std::ostringstream table;
  write_compare_table(table, r.rows);
  run.write("log.csv", table.str());
  save_checkpoint(run.file("checkpoint.bin"), r.cfg_model.model, model_meta_to_json(r.cfg_meta));
  run.record("checkpoint.bin");
  for (std::size_t k = 0; k < r.ewd_models.size(); ++k) {
    const std::string name = r.ewd_models.size() == 1 ? "checkpoint_ewd.bin" : "checkpoint_ewd_" + std::to_string(k) + ".bin";
    save_checkpoint(run.file(name), r.ewd_models[k].model, model_meta_to_json(r.ewd_meta[k]));
    run.record(name);
  }
  json rows = json::array();
  std::ostringstream all;
  for (std::size_t k = 0; k < r.rows.size(); ++k) {
    const auto& row = r.rows[k];
    rows.push_back({{"beta", row.beta}, {"EWD_tv", row.ewd_tv}, {"CFG_tv", row.cfg_tv}, {"EWD_sw", row.ewd_sw}, {"CFG_sw", row.cfg_sw}});
    char tag[64];
    std::snprintf(tag, sizeof tag, "beta%g", row.beta);
    run.write(std::string("samples_ewd_") + tag + ".csv", to_csv(r.ewd_samples[k], std::string("EWD ") + tag));
    run.write(std::string("samples_cfg_") + tag + ".csv", to_csv(r.cfg_samples[k], std::string("CFG ") + tag));
  }
  // samples.csv holds the largest-beta EWD samples.
  run.write("samples.csv", to_csv(r.ewd_samples.back(), "EWD beta=" + std::to_string(r.rows.back().beta)));
  json report;
  report["table"] = rows;
  report["ewd_mode"] = to_string(g.ewd_mode);
  report["dataset"] = g.dataset;
  report["energy"] = g.energy.describe();
  report["cfg_final_loss"] = r.cfg_model.log.empty() ? 0.0 : r.cfg_model.log.back().loss;
  run.write("report.json", dumps(report));
  run.finish("ok");
  std::cout << table.str();
  return kOk;
}

namespace {

std::set<std::string> qipo_keys() {
  return merge({common_keys(), sampler_keys()},
               {"env", "bandit.w", "data.size", "data.file", "policy.loss", "policy.hidden", "policy.time_embed_dim",
                "policy.max_frequency", "policy.sampler", "policy.steps", "pretrain.steps", "pretrain.batch",
                "pretrain.lr", "q.mode", "q.steps", "q.batch", "q.lr", "q.tau", "q.hidden", "qipo.m", "qipo.renew",
                "qipo.epochs", "qipo.beta", "qipo.lr", "qipo.lambda", "qipo.states_per_batch", "qipo.steps_per_epoch",
                "qipo.eval_every", "qipo.eval_samples", "chain.states", "chain.gamma", "chain.beta", "log_every"});
}

int run_chain(const Config& c) {
  ChainMdp mdp;
  mdp.n_states = static_cast<int>(c.get_int("chain.states", 5));
  mdp.gamma = c.get_double("chain.gamma", 0.9);
  if (mdp.n_states < 2) throw ConfigError(c.source(), c.line_of("chain.states"), "chain.states", "chain.states must be >= 2");
  if (!(mdp.gamma >= 0.0 && mdp.gamma < 1.0))
    throw ConfigError(c.source(), c.line_of("chain.gamma"), "chain.gamma", "chain.gamma must lie in [0, 1)");
  const double beta = c.get_double("chain.beta", 1.0);
  const std::uint64_t seed = c.get_u64("seed", 0);
  const long steps = c.get_int("q.steps", 20000);
  const int batch = static_cast<int>(c.get_int("q.batch", 128));
  const double lr = c.get_double("q.lr", 1e-3);
  const double tau = c.get_double("q.tau", 0.005);
  const auto hidden = c.get_ints("q.hidden", {64, 64});
  TransitionBatch data;
  if (c.has("data.file")) {
    std::ifstream f(c.get_string("data.file"));
    if (!f) throw ConfigError(c.source(), c.line_of("data.file"), "data.file", "cannot open data.file");
    data = read_transitions_csv(f, mdp.n_states, mdp.n_actions);
  } else {
    Rng rng = Rng(seed).split(1);
    data = mdp.dataset(static_cast<std::size_t>(c.get_u64("data.size", 2000)), rng);
  }
  RunDir run("qipo", c);
  const auto t0 = Clock::now();
  const ChainQResult r = train_chain_q(mdp, data, beta, steps, batch, lr, tau, seed, hidden,
                                       static_cast<int>(c.get_int("log_every", 100)));
  run.set_timing("q_learning_ms", ms_since(t0));
  save_checkpoint(run.file("checkpoint.bin"), r.net, json{{"role", "q"}, {"env", "chain"}}.dump());
  run.record("checkpoint.bin");
  std::ostringstream log;
  log << "step,loss\n";
  for (const auto& [s, l] : r.log) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%ld,%.9g\n", s, l);
    log << buf;
  }
  run.write("log.csv", log.str());
  json q = json::array(), o = json::array();
  for (int s = 0; s < mdp.n_states; ++s) {
    q.push_back(to_json(r.q.row(s).transpose()));
    o.push_back(to_json(r.oracle.row(s).transpose()));
  }
  json report{{"env", "chain"}, {"q", q}, {"soft_value_iteration", o}, {"sup_error", r.sup_error}, {"final_loss", r.final_loss}};
  run.write("report.json", dumps(report));
  run.finish("ok");
  std::printf("qipo chain: sup |Q - Q*| = %.4g -> %s\n", r.sup_error, run.path().c_str());
  return kOk;
}

}  // namespace

int cmd_qipo(const Config& c) {
  c.require_known(qipo_keys());
  const std::string env = c.get_string("env", "bandit");
  if (env == "chain") return run_chain(c);
  if (env != "bandit") throw ConfigError(c.source(), c.line_of("env"), "env", "unknown env '" + env + "' (expected bandit or chain)");

  const std::uint64_t seed = c.get_u64("seed", 0);
  LinearGaussianBandit bandit;
  const auto w = c.get_doubles("bandit.w", {1.0});
  bandit.w = Eigen::Map<const Vec>(w.data(), static_cast<Eigen::Index>(w.size()));
  TransitionBatch data;
  if (c.has("data.file")) {
    std::ifstream f(c.get_string("data.file"));
    if (!f) throw ConfigError(c.source(), c.line_of("data.file"), "data.file", "cannot open data.file");
    data = read_transitions_csv(f, LinearGaussianBandit::state_dim(), bandit.action_dim());
  } else {
    Rng rng = Rng(seed).split(1);
    data = bandit.dataset(static_cast<std::size_t>(c.get_u64("data.size", 1600)), rng);
  }

  PolicySpec ps;
  try {
    ps.loss = policy_loss_from_string(c.get_string("policy.loss", "qf"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(c.source(), c.line_of("policy.loss"), "policy.loss", e.what());
  }
  ps.hidden = c.get_ints("policy.hidden", ps.hidden);
  ps.time_embed_dim = static_cast<int>(c.get_int("policy.time_embed_dim", ps.time_embed_dim));
  ps.max_frequency = c.get_double("policy.max_frequency", ps.max_frequency);
  const std::string default_sampler = ps.loss == PolicyLoss::QD ? "ancestral" : "heun";
  try {
    ps.sampler = sampler_kind_from_string(c.get_string("policy.sampler", default_sampler));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(c.source(), c.line_of("policy.sampler"), "policy.sampler", e.what());
  }
  ps.sampler_steps = static_cast<int>(c.get_int("policy.steps", ps.loss == PolicyLoss::QD ? 50 : 15));
  if (ps.loss == PolicyLoss::QF && ps.sampler == SamplerKind::Ancestral)
    throw ConfigError(c.source(), c.line_of("policy.sampler"), "policy.sampler", "qf policies need an ODE sampler");

  PretrainConfig pc;
  pc.steps = c.get_int("pretrain.steps", 10000);
  pc.batch = static_cast<int>(c.get_int("pretrain.batch", 256));
  pc.lr = c.get_double("pretrain.lr", 1e-3);
  pc.seed = Rng(seed).split(3).next_u64();

  QipoConfig qc;
  qc.m = static_cast<int>(c.get_int("qipo.m", 16));
  qc.k_renew = static_cast<int>(c.get_int("qipo.renew", 10));
  qc.k3 = static_cast<int>(c.get_int("qipo.epochs", 100));
  qc.beta = c.get_double("qipo.beta", 1.0);
  qc.lr = c.get_double("qipo.lr", 1e-3);
  qc.lambda_soft = c.get_double("qipo.lambda", 0.005);
  qc.states_per_batch = static_cast<int>(c.get_int("qipo.states_per_batch", 16));
  qc.steps_per_epoch = static_cast<int>(c.get_int("qipo.steps_per_epoch", 0));
  qc.eval_every = static_cast<int>(c.get_int("qipo.eval_every", 5));
  qc.eval_samples = static_cast<std::size_t>(c.get_u64("qipo.eval_samples", 2000));
  qc.seed = Rng(seed).split(4).next_u64();
  const std::string q_mode = c.get_string("q.mode", "oracle");
  if (q_mode != "oracle" && q_mode != "learned")
    throw ConfigError(c.source(), c.line_of("q.mode"), "q.mode", "unknown q.mode '" + q_mode + "' (expected oracle or learned)");
  const SamplerConfig out_sampler = sampler_from(c);

  RunDir run("qipo", c);
  auto t0 = Clock::now();
  Rng init = Rng(seed).split(2);
  Policy policy = make_policy(ps, LinearGaussianBandit::state_dim(), bandit.action_dim(), init);
  const double pre_loss = behavior_pretrain(policy, data, pc);
  run.set_timing("pretrain_ms", ms_since(t0));

  t0 = Clock::now();
  QFunction q = QFunction::oracle([bandit](const Vec&, const Vec& a) { return bandit.q(a); });
  double q_loss = 0.0;
  if (q_mode == "learned") {
    Mlp net(QFunction::learned_spec(LinearGaussianBandit::state_dim(), bandit.action_dim(), c.get_ints("q.hidden", {64, 64})));
    Rng qrng = Rng(seed).split(5);
    net.init(qrng);
    QLearner learner(std::move(net), c.get_double("q.lr", 1e-3), c.get_double("q.tau", 0.005));
    const int batch = static_cast<int>(c.get_int("q.batch", 256));
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(batch));
    for (long s = 0, n = c.get_int("q.steps", 5000); s < n; ++s) {
      for (auto& i : idx) i = static_cast<Eigen::Index>(qrng.below(static_cast<std::uint64_t>(data.size())));
      q_loss = q_learning_step(learner, data.select(idx), Mat(), 0, qc.beta, 0.0);
    }
    q = QFunction::learned(std::move(learner.online));
  }
  run.set_timing("q_ms", ms_since(t0));

  t0 = Clock::now();
  json report;
  report["env"] = "bandit";
  report["q_mode"] = q_mode;
  report["pretrain_final_loss"] = pre_loss;
  if (q_mode == "learned") report["q_final_loss"] = q_loss;
  QipoResult r;
  try {
    r = qipo_iterate(policy, q, data, qc, Vec::Zero(1), &bandit);
  } catch (const QipoDivergence& e) {
    report["diverged"] = e.what();
    run.write("report.json", dumps(report));
    run.finish("diverged");
    std::fprintf(stderr, "ewflow qipo: %s\n", e.what());
    return kRuntimeFailure;
  }
  run.set_timing("qipo_ms", ms_since(t0));

  std::ostringstream log;
  write_qipo_log(log, r.log);
  run.write("log.csv", log.str());
  ModelMeta meta;
  meta.role = r.policy.role;
  meta.param = r.policy.param;
  meta.path = r.policy.sched.params();
  meta.loss = r.policy.role == ModelRole::Velocity ? LossKind::CEFM : LossKind::CED;
  meta.beta = qc.beta;
  meta.dataset = "bandit";
  save_checkpoint(run.file("checkpoint.bin"), r.policy.net, model_meta_to_json(meta));
  run.record("checkpoint.bin");
  SamplerConfig sc = out_sampler;
  sc.kind = r.policy.sampler;
  if (!c.has("sample.steps")) sc.steps = r.policy.sampler_steps;
  const PointSet samples = sample_model(r.policy.field(Vec::Zero(1)), sc);
  run.write("samples.csv", to_csv(samples, "qipo bandit policy"));

  json cycles = json::array();
  for (const auto& row : r.log)
    if (row.epoch % qc.k_renew == 0 || row.epoch == qc.k3)
      cycles.push_back({{"epoch", row.epoch}, {"renewals", row.renewals}, {"policy_mean", to_json(row.policy_mean)},
                        {"analytic_target", to_json(row.analytic_target)}, {"sw_distance", row.sw_distance}});
  report["cycles"] = cycles;
  report["best_epoch"] = r.best_epoch;
  if (!r.log.empty()) {
    report["final"] = {{"epoch", r.log.back().epoch}, {"policy_mean", to_json(r.log.back().policy_mean)},
                       {"analytic_target", to_json(r.log.back().analytic_target)}, {"sw_distance", r.log.back().sw_distance}};
  }
  report["samples"] = moments_json(samples);
  report["config"] = {{"M", qc.m}, {"K_renew", qc.k_renew}, {"K3", qc.k3}, {"beta", qc.beta}, {"lambda", qc.lambda_soft}};
  run.write("report.json", dumps(report));
  run.finish("ok");
  std::printf("qipo bandit: final policy mean %.4f (analytic %.4f) -> %s\n", r.log.back().policy_mean[0],
              r.log.back().analytic_target[0], run.path().c_str());
  return kOk;
}

int run_command(const std::string& command, const Config& c) {
  if (command == "train") return cmd_train(c);
  if (command == "sample") return cmd_sample(c);
  if (command == "eval") return cmd_eval(c);
  if (command == "compare-guidance") return cmd_compare_guidance(c);
  if (command == "qipo") return cmd_qipo(c);
  throw std::invalid_argument("command '" + command + "' cannot be run from a manifest");
}

int cmd_rerun(const std::string& manifest_path, const std::string& out_dir, const std::string& run_name, bool verify) {
  const json m = json::parse(read_file(manifest_path));
  const std::string command = m.at("command").get<std::string>();
  Config c = Config::parse_string(m.at("config").get<std::string>(), manifest_path);
  if (!out_dir.empty()) c.set("run.out_dir", out_dir);
  c.set("run.name", run_name.empty() ? c.get_string("run.name", command + "-" + std::to_string(c.get_u64("seed", 0))) + "-rerun"
                                     : run_name);
  const int rc = run_command(command, c);
  if (rc != kOk || !verify) return rc;

  const fs::path dir = fs::path(c.get_string("run.out_dir", "out")) / c.get_string("run.name");
  const json fresh = json::parse(read_file((dir / "manifest.json").string()));
  bool same = true;
  for (const auto& [name, info] : m.at("outputs").items()) {
    const auto it = fresh.at("outputs").find(name);
    const bool ok = it != fresh.at("outputs").end() &&
                    (*it).at("deterministic_fnv1a64") == info.at("deterministic_fnv1a64");
    std::printf("%-28s %s\n", name.c_str(), ok ? "identical" : "DIFFERENT");
    same = same && ok;
  }
  if (fresh.at("outputs").size() != m.at("outputs").size()) {
    std::printf("output file sets differ\n");
    same = false;
  }
  return same ? kOk : kRuntimeFailure;
}

}  // namespace ewflow::app
