#include "ewflow/training.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <stdexcept>

#include "ewflow/datasets.hpp"
#include "ewflow/exact_losses.hpp"
#include "ewflow/optim.hpp"
#include "ewflow/oracle.hpp"
#include "json.hpp"

namespace ewflow {

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::CFM: return "CFM";
    case LossKind::CEFM: return "CEFM";
    case LossKind::EFM_EXACT: return "EFM_EXACT";
    case LossKind::CED: return "CED";
    case LossKind::ED_EXACT: return "ED_EXACT";
    case LossKind::CFG_UNCOND: return "CFG_UNCOND";
    case LossKind::CFG_COND: return "CFG_COND";
    case LossKind::CED_BETA_INPUT: return "CED_BETA_INPUT";
  }
  return "?";
}

LossKind loss_kind_from_string(const std::string& s) {
  std::string u;
  for (char c : s) u.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  for (LossKind k : {LossKind::CFM, LossKind::CEFM, LossKind::EFM_EXACT, LossKind::CED, LossKind::ED_EXACT,
                     LossKind::CFG_UNCOND, LossKind::CFG_COND, LossKind::CED_BETA_INPUT})
    if (u == to_string(k)) return k;
  if (u == "CFG") return LossKind::CFG_UNCOND;
  throw std::invalid_argument("unknown loss '" + s + "'");
}

ModelRole role_for_loss(LossKind k) {
  switch (k) {
    case LossKind::CFM:
    case LossKind::CEFM:
    case LossKind::EFM_EXACT: return ModelRole::Velocity;
    default: return ModelRole::Score;
  }
}

std::string to_string(TimeWeight w) { return w == TimeWeight::Uniform ? "uniform" : "sigma2"; }

TimeWeight time_weight_from_string(const std::string& s) {
  if (s == "uniform") return TimeWeight::Uniform;
  if (s == "sigma2") return TimeWeight::Sigma2;
  throw std::invalid_argument("unknown time weight '" + s + "' (expected uniform or sigma2)");
}

double time_weight(TimeWeight w, const PathSchedule& sched, double t) {
  if (w == TimeWeight::Uniform) return 1.0;
  const double s = sched.sigma(clamp_time(t));
  return s * s;
}

Vec softmax_weights(const Vec& energies, double beta) {
  if (energies.size() == 0) throw std::invalid_argument("softmax_weights: empty batch");
  if (!energies.allFinite()) throw std::domain_error("softmax_weights: non-finite energy in batch");
  const Vec logits = -beta * energies;
  const Vec e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

WeightedBatch make_weighted_batch(PointSet x0, const Vec& energies, double beta, const PathSchedule& sched, Rng& rng) {
  const Eigen::Index B = x0.cols();
  if (B < 2) throw std::invalid_argument("build_weighted_batch: batch size must be at least 2");
  if (energies.size() != B) throw std::invalid_argument("build_weighted_batch: energy count mismatch");
  WeightedBatch b;
  b.energies = energies;
  b.weights = softmax_weights(energies, beta);
  b.times.resize(B);
  for (Eigen::Index i = 0; i < B; ++i) b.times[i] = rng.uniform(kTimeEps, 1.0 - kTimeEps);
  b.eps = rng.normal_mat(x0.rows(), B);
  b.xt.resize(x0.rows(), B);
  for (Eigen::Index i = 0; i < B; ++i) b.xt.col(i) = perturb_with(sched, x0.col(i), TimePoint(b.times[i]), b.eps.col(i));
  b.x0 = std::move(x0);
  return b;
}

WeightedBatch build_weighted_batch(const PointSet& data, const Energy& energy, double beta,
                                   const PathSchedule& sched, Rng& rng, std::size_t B) {
  if (data.cols() == 0) throw std::invalid_argument("build_weighted_batch: empty dataset");
  PointSet x0(data.rows(), static_cast<Eigen::Index>(B));
  Vec e(static_cast<Eigen::Index>(B));
  for (std::size_t i = 0; i < B; ++i) {
    x0.col(i) = data.col(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(data.cols()))));
    e[i] = energy(x0.col(i));
  }
  return make_weighted_batch(std::move(x0), e, beta, sched, rng);
}

LossResult weighted_regression_loss(const Mlp& net, const ConditionInput& in, const Vec& scale, const Mat& targets,
                                    const Vec& weights) {
  Mlp::Tape tape;
  const Mat raw = net.forward(in, tape);
  if (raw.rows() != targets.rows() || raw.cols() != targets.cols())
    throw std::invalid_argument("weighted_regression_loss: target shape mismatch");
  const Mat pred = raw * scale.asDiagonal();
  const Mat res = pred - targets;
  LossResult r;
  r.loss = (res.colwise().squaredNorm().transpose().array() * weights.array()).sum();
  const Mat upstream = res * (2.0 * weights.array() * scale.array()).matrix().asDiagonal();
  r.grad.assign(net.param_count(), 0.0);
  net.backward(tape, upstream, r.grad);
  return r;
}

Mat cefm_targets(const WeightedBatch& b, const PathSchedule& sched) {
  Mat u(b.xt.rows(), b.xt.cols());
  for (Eigen::Index i = 0; i < b.xt.cols(); ++i)
    u.col(i) = cond_velocity(sched, b.xt.col(i), b.x0.col(i), TimePoint(b.times[i]));
  return u;
}

Mat ced_targets(const WeightedBatch& b, const PathSchedule& sched) {
  Mat s(b.xt.rows(), b.xt.cols());
  for (Eigen::Index i = 0; i < b.xt.cols(); ++i)
    s.col(i) = cond_score(sched, b.xt.col(i), b.x0.col(i), TimePoint(b.times[i]));
  return s;
}

namespace {

ConditionInput batch_input(const WeightedBatch& b, const BatchCondition& cond) {
  ConditionInput in;
  in.x = b.xt;
  in.t = b.times;
  in.context = cond.context;
  in.beta_norm = cond.beta_norm;
  return in;
}

Vec loss_weights(const WeightedBatch& b, const PathSchedule& sched, TimeWeight tw) {
  Vec w = b.weights;
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] *= time_weight(tw, sched, b.times[i]);
  return w;
}

Vec score_scales(const WeightedBatch& b, const PathSchedule& sched, ScoreParam param) {
  Vec s = Vec::Ones(b.times.size());
  if (param == ScoreParam::Noise)
    for (Eigen::Index i = 0; i < s.size(); ++i) s[i] = -1.0 / sched.sigma(clamp_time(b.times[i]));
  return s;
}

void add_into(std::vector<double>& acc, const std::vector<double>& g) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

}  // namespace

LossResult loss_cefm(const Mlp& model, const WeightedBatch& b, const PathSchedule& sched, TimeWeight tw,
                     const BatchCondition& cond) {
  return weighted_regression_loss(model, batch_input(b, cond), Vec::Ones(b.times.size()), cefm_targets(b, sched),
                                  loss_weights(b, sched, tw));
}

LossResult loss_ced(const Mlp& model, ScoreParam param, const WeightedBatch& b, const PathSchedule& sched,
                    TimeWeight tw, const BatchCondition& cond) {
  return weighted_regression_loss(model, batch_input(b, cond), score_scales(b, sched, param), ced_targets(b, sched),
                                  loss_weights(b, sched, tw));
}

std::vector<int> generate_labels(const PointSet& x0, const Energy& energy, Rng& rng) {
  std::vector<int> labels(static_cast<std::size_t>(x0.cols()));
  for (Eigen::Index i = 0; i < x0.cols(); ++i) {
    const double e = energy(x0.col(i));
    if (!(e >= 0.0) || !std::isfinite(e))
      throw std::domain_error("generate_labels: energy must be finite and nonnegative (shift it first)");
    labels[i] = rng.uniform() < std::exp(-e) ? 1 : 0;
  }
  return labels;
}

Mat cfg_context(int label, Eigen::Index count) {
  if (label < -1 || label > 1) throw std::invalid_argument("cfg_context: label must be -1, 0 or 1");
  Mat c = Mat::Zero(kCfgContextDim, count);
  c.row(label + 1).setOnes();
  return c;
}

Mat cfg_context(const std::vector<int>& labels) {
  Mat c = Mat::Zero(kCfgContextDim, static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < -1 || labels[i] > 1) throw std::invalid_argument("cfg_context: label must be -1, 0 or 1");
    c(labels[i] + 1, static_cast<Eigen::Index>(i)) = 1.0;
  }
  return c;
}

CfgLosses loss_cfg_pair(const Mlp& model, ScoreParam param, const WeightedBatch& b, const std::vector<int>& labels,
                        const PathSchedule& sched, TimeWeight tw) {
  if (static_cast<Eigen::Index>(labels.size()) != b.xt.cols())
    throw std::invalid_argument("loss_cfg_pair: label count mismatch");
  if (model.spec().context_dim != kCfgContextDim)
    throw std::invalid_argument("loss_cfg_pair: model context must be the 3-way CFG token");
  const Eigen::Index B = b.xt.cols();
  WeightedBatch uniform = b;
  uniform.weights = Vec::Constant(B, 1.0 / static_cast<double>(B));
  CfgLosses out;
  out.uncond = loss_ced(model, param, uniform, sched, tw, {cfg_context(-1, B), {}});
  out.cond = loss_ced(model, param, uniform, sched, tw, {cfg_context(labels), {}});
  return out;
}

MlpSpec resolve_model_spec(const TrainConfig& cfg, int data_dim) {
  MlpSpec s = cfg.model;
  s.x_dim = data_dim;
  s.out_dim = data_dim;
  s.context_dim = 0;
  if (cfg.loss == LossKind::CFG_UNCOND || cfg.loss == LossKind::CFG_COND) s.context_dim = kCfgContextDim;
  if (cfg.loss == LossKind::CED_BETA_INPUT) {
    if (s.beta_embed_dim == 0) s.beta_embed_dim = s.time_embed_dim > 0 ? s.time_embed_dim : 16;
  } else {
    s.beta_embed_dim = 0;
  }
  return s;
}

Energy cfg_label_energy(const GaussianMixture& p0, const Energy& energy) {
  if (energy.is_classifier()) return energy;
  const EnergySpec spec{energy, 1.0};
  return Energy::classifier(energy.shift_to_min(GuidedOracle::default_axes(p0, spec, 256)));
}

TrainResult train_density_model(const TrainConfig& cfg) {
  if (cfg.steps < 1) throw std::invalid_argument("steps must be positive");
  if (cfg.batch < 2) throw std::invalid_argument("batch must be at least 2");
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (!(cfg.beta >= 0.0)) throw std::invalid_argument("energy.beta must be nonnegative");
  if (cfg.loss == LossKind::CED_BETA_INPUT && !(cfg.beta_max > 0.0))
    throw std::invalid_argument("beta_max must be positive");

  const GaussianMixture p0 = make_dataset(cfg.dataset);
  if (cfg.energy.dim() != p0.dim())
    throw std::invalid_argument("energy dimension does not match dataset '" + cfg.dataset + "'");
  const PathSchedule sched(cfg.path);
  const ModelRole role = role_for_loss(cfg.loss);

  TrainResult result;
  result.role = role;
  result.model = Mlp(resolve_model_spec(cfg, p0.dim()));
  Rng rng(cfg.seed);
  {
    Rng init_rng = rng.split(0x1417);
    result.model.init(init_rng);
  }
  AdamState adam(result.model.param_count(), cfg.lr);
  if (!(cfg.ema_decay >= 0.0 && cfg.ema_decay < 1.0)) throw std::invalid_argument("ema_decay must lie in [0, 1)");
  std::vector<double> ema = result.model.params();

  const bool cfg_pair = cfg.loss == LossKind::CFG_UNCOND || cfg.loss == LossKind::CFG_COND;
  const Energy label_energy = cfg_pair ? cfg_label_energy(p0, cfg.energy) : cfg.energy;

  std::optional<GuidedOracle> oracle;
  std::optional<ExactQuadrature> quad;
  if (cfg.loss == LossKind::EFM_EXACT || cfg.loss == LossKind::ED_EXACT) {
    if (p0.dim() > 2) throw std::invalid_argument("exact losses need a grid oracle (dimension <= 2)");
    const EnergySpec spec{cfg.energy, cfg.beta};
    oracle.emplace(p0, spec, sched, GuidedOracle::default_axes(p0, spec, cfg.exact_resolution));
    quad = make_exact_quadrature(*oracle, cfg.exact_time_nodes);
  }

  const auto start = std::chrono::steady_clock::now();
  for (long step = 1; step <= cfg.steps; ++step) {
    if (cfg.cosine_lr) adam.lr = 0.5 * cfg.lr * (1.0 + std::cos(M_PI * static_cast<double>(step - 1) / cfg.steps));
    LossResult lr;
    if (oracle) {
      lr = cfg.loss == LossKind::EFM_EXACT ? loss_efm_exact(result.model, *oracle, *quad)
                                           : loss_ed_exact(result.model, cfg.score_param, *oracle, *quad);
    } else {
      PointSet x0 = p0.sample(rng, static_cast<std::size_t>(cfg.batch));
      Vec energies(x0.cols());
      double beta = cfg.beta;
      if (cfg.loss == LossKind::CFM) beta = 0.0;
      std::vector<int> labels;
      if (cfg_pair) {
        labels = generate_labels(x0, label_energy, rng);
        energies.setZero();
      } else {
        for (Eigen::Index i = 0; i < x0.cols(); ++i) energies[i] = cfg.energy(x0.col(i));
      }
      WeightedBatch batch = make_weighted_batch(std::move(x0), energies, beta, sched, rng);
      switch (cfg.loss) {
        case LossKind::CFM:
        case LossKind::CEFM: lr = loss_cefm(result.model, batch, sched, cfg.time_weight); break;
        case LossKind::CED: lr = loss_ced(result.model, cfg.score_param, batch, sched, cfg.time_weight); break;
        case LossKind::CED_BETA_INPUT: {
          const Eigen::Index B = batch.times.size();
          const Eigen::Index groups = std::clamp<Eigen::Index>(cfg.beta_groups, 1, B / 2);
          BatchCondition cond;
          cond.beta_norm.resize(B);
          for (Eigen::Index g = 0; g < groups; ++g) {
            const Eigen::Index lo = g * B / groups;
            const Eigen::Index n = (g + 1) * B / groups - lo;
            const double bg = rng.uniform(0.0, cfg.beta_max);
            batch.weights.segment(lo, n) = softmax_weights(batch.energies.segment(lo, n), bg) / static_cast<double>(groups);
            cond.beta_norm.segment(lo, n).setConstant(bg / cfg.beta_max);
          }
          lr = loss_ced(result.model, cfg.score_param, batch, sched, cfg.time_weight, cond);
          break;
        }
        default: {
          CfgLosses pair = loss_cfg_pair(result.model, cfg.score_param, batch, labels, sched, cfg.time_weight);
          lr.loss = pair.uncond.loss + pair.cond.loss;
          lr.grad = std::move(pair.uncond.grad);
          add_into(lr.grad, pair.cond.grad);
        }
      }
    }
    if (!std::isfinite(lr.loss)) throw std::runtime_error("training diverged: non-finite loss at step " + std::to_string(step));
    adam_step(adam, result.model.params(), lr.grad);
    if (cfg.ema_decay > 0.0) soft_update(ema, result.model.params(), 1.0 - cfg.ema_decay);
    if (step % cfg.log_every == 0 || step == cfg.steps) {
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      result.log.push_back({step, lr.loss, ms});
    }
  }
  if (cfg.ema_decay > 0.0) result.model.params() = std::move(ema);
  return result;
}

void write_train_log(std::ostream& os, const std::vector<TrainLogRow>& rows) {
  os << "step,loss,wallclock_ms\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%ld,%.9g,%.1f\n", r.step, r.loss, r.wallclock_ms);
    os << buf;
  }
}

ModelMeta make_model_meta(const TrainConfig& cfg, const TrainResult& result) {
  ModelMeta m;
  m.role = result.role;
  m.param = cfg.score_param;
  m.path = cfg.path;
  m.loss = cfg.loss;
  m.beta = cfg.beta;
  m.beta_max = cfg.beta_max;
  m.dataset = cfg.dataset;
  m.energy = cfg.energy.describe();
  return m;
}

std::string model_meta_to_json(const ModelMeta& m) {
  nlohmann::json j;
  j["role"] = to_string(m.role);
  j["score_param"] = to_string(m.param);
  j["path"] = {{"kind", to_string(m.path.kind)},
               {"sigma_min", m.path.sigma_min},
               {"beta_min", m.path.beta_min},
               {"beta_max", m.path.beta_max}};
  j["loss"] = to_string(m.loss);
  j["beta"] = m.beta;
  j["train_beta_max"] = m.beta_max;
  j["dataset"] = m.dataset;
  j["energy"] = m.energy;
  return j.dump();
}

ModelMeta model_meta_from_json(const std::string& text) {
  ModelMeta m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.role = model_role_from_string(j.at("role").get<std::string>());
    m.param = score_param_from_string(j.at("score_param").get<std::string>());
    const auto& p = j.at("path");
    m.path.kind = path_kind_from_string(p.at("kind").get<std::string>());
    m.path.sigma_min = p.at("sigma_min").get<double>();
    m.path.beta_min = p.at("beta_min").get<double>();
    m.path.beta_max = p.at("beta_max").get<double>();
    m.loss = loss_kind_from_string(j.at("loss").get<std::string>());
    m.beta = j.at("beta").get<double>();
    m.beta_max = j.at("train_beta_max").get<double>();
    m.dataset = j.value("dataset", "");
    m.energy = j.value("energy", "");
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint metadata is not a trained-model description: ") + e.what());
  }
  return m;
}

PointSet sample_trained(const Mlp& net, const ModelMeta& meta, const SamplerConfig& cfg, std::optional<double> beta) {
  FieldModel f;
  f.net = &net;
  f.role = meta.role;
  f.param = meta.param;
  f.sched = PathSchedule(meta.path);
  const double b = beta.value_or(meta.beta);
  if (meta.loss == LossKind::CFG_UNCOND || meta.loss == LossKind::CFG_COND) {
    FieldModel cond = f;
    f.context = cfg_context(-1, 1);
    cond.context = cfg_context(1, 1);
    return sample_composed(f, cond, b, cfg);
  }
  if (net.spec().accepts_beta()) {
    if (!(b >= 0.0 && b <= meta.beta_max))
      throw std::invalid_argument("beta outside the trained range [0, beta_max] of this checkpoint");
    f.beta_norm = b / meta.beta_max;
  }
  return sample_model(f, cfg);
}

}  // namespace ewflow
