#include "ewflow/qipo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "ewflow/metrics.hpp"

namespace ewflow {

std::string to_string(PolicyLoss l) { return l == PolicyLoss::QD ? "qd" : "qf"; }

PolicyLoss policy_loss_from_string(const std::string& s) {
  if (s == "qd" || s == "QD") return PolicyLoss::QD;
  if (s == "qf" || s == "QF") return PolicyLoss::QF;
  throw std::invalid_argument("unknown policy loss '" + s + "' (expected qd or qf)");
}

FieldModel Policy::field(const Mat& context) const {
  FieldModel f;
  f.net = &net;
  f.role = role;
  f.param = param;
  f.sched = sched;
  f.context = context;
  return f;
}

PointSet Policy::sample(const Vec& state, std::size_t n, std::uint64_t seed) const {
  SamplerConfig cfg;
  cfg.kind = sampler;
  cfg.steps = sampler_steps;
  cfg.n = n;
  cfg.seed = seed;
  return sample_model(field(state), cfg);
}

Policy make_policy(const PolicySpec& spec, int state_dim, int action_dim, Rng& rng) {
  if (state_dim < 1 || action_dim < 1) throw std::invalid_argument("make_policy: dimensions must be positive");
  Policy p;
  p.net = Mlp(MlpSpec{action_dim, state_dim, spec.time_embed_dim, 0, spec.hidden, action_dim, spec.max_frequency});
  p.net.init(rng);
  p.sampler = spec.sampler;
  p.sampler_steps = spec.sampler_steps;
  if (spec.loss == PolicyLoss::QF) {
    if (spec.sampler == SamplerKind::Ancestral) throw std::invalid_argument("make_policy: QF policies use an ODE sampler");
    p.role = ModelRole::Velocity;
    p.sched = PathSchedule::ot();
    p.time_weight = TimeWeight::Uniform;
  } else {
    p.role = ModelRole::Score;
    p.param = ScoreParam::Direct;
    p.sched = PathSchedule::vp();
    p.time_weight = TimeWeight::Sigma2;
  }
  return p;
}

LossResult policy_loss(const Policy& policy, const Mat& states, const PointSet& actions, const Vec& weights, Rng& rng) {
  WeightedBatch b = make_weighted_batch(actions, Vec::Zero(actions.cols()), 0.0, policy.sched, rng);
  b.weights = weights;
  BatchCondition cond;
  cond.context = states;
  if (policy.role == ModelRole::Velocity) return loss_cefm(policy.net, b, policy.sched, policy.time_weight, cond);
  return loss_ced(policy.net, policy.param, b, policy.sched, policy.time_weight, cond);
}

double behavior_pretrain(Policy& policy, const TransitionBatch& data, const PretrainConfig& cfg) {
  data.validate();
  if (data.size() < 1) throw std::invalid_argument("behavior_pretrain: empty dataset");
  if (data.actions.rows() != policy.action_dim() || data.states.rows() != policy.state_dim())
    throw std::invalid_argument("behavior_pretrain: dataset dimensions do not match the policy");
  if (cfg.batch < 2 || cfg.steps < 1) throw std::invalid_argument("behavior_pretrain: bad batch or step count");
  Rng rng(cfg.seed);
  AdamState adam(policy.net.param_count(), cfg.lr);
  const auto N = static_cast<std::uint64_t>(data.size());
  const Vec w = Vec::Constant(cfg.batch, 1.0 / cfg.batch);
  Mat s(data.states.rows(), cfg.batch);
  PointSet a(data.actions.rows(), cfg.batch);
  double last = 0.0;
  for (long step = 0; step < cfg.steps; ++step) {
    for (int k = 0; k < cfg.batch; ++k) {
      const auto i = static_cast<Eigen::Index>(rng.below(N));
      s.col(k) = data.states.col(i);
      a.col(k) = data.actions.col(i);
    }
    LossResult lr = policy_loss(policy, s, a, w, rng);
    if (!std::isfinite(lr.loss)) throw std::runtime_error("behavior_pretrain: non-finite loss");
    adam_step(adam, policy.net.params(), lr.grad);
    last = lr.loss;
  }
  return last;
}

QFunction QFunction::oracle(Oracle fn) {
  if (!fn) throw std::invalid_argument("QFunction::oracle: empty function");
  QFunction q;
  q.fn_ = std::move(fn);
  return q;
}

QFunction QFunction::learned(Mlp net) {
  if (net.spec().out_dim != 1 || net.spec().time_embed_dim != 0)
    throw std::invalid_argument("QFunction::learned: expected a scalar network without time input");
  QFunction q;
  q.net_ = std::move(net);
  return q;
}

MlpSpec QFunction::learned_spec(int state_dim, int action_dim, std::vector<int> hidden) {
  return MlpSpec{action_dim, state_dim, 0, 0, std::move(hidden), 1, 1.0};
}

Vec evaluate_q_net(const Mlp& net, const Mat& states, const Mat& actions) {
  ConditionInput in;
  in.x = actions;
  in.context = states;
  return net.forward(in).row(0).transpose();
}

Vec QFunction::operator()(const Mat& states, const Mat& actions) const {
  if (states.cols() != actions.cols()) throw std::invalid_argument("QFunction: state/action count mismatch");
  if (!fn_) return evaluate_q_net(net_, states, actions);
  Vec out(actions.cols());
  for (Eigen::Index i = 0; i < actions.cols(); ++i) out[i] = fn_(states.col(i), actions.col(i));
  return out;
}

void SupportSet::validate() const {
  if (m < 0 || actions.cols() != states.cols() * width() || q.size() != actions.cols() || weights.size() != q.size())
    throw std::invalid_argument("SupportSet: inconsistent sizes");
  for (Eigen::Index i = 0; i < num_states(); ++i) {
    if (std::abs(weights.segment(i * width(), width()).sum() - 1.0) > 1e-9)
      throw std::invalid_argument("SupportSet: guidance weights do not sum to one");
  }
}

Vec grouped_softmax(const Vec& q, int width, double beta) {
  if (width < 1 || q.size() % width != 0) throw std::invalid_argument("grouped_softmax: bad group width");
  Vec out(q.size());
  for (Eigen::Index start = 0; start < q.size(); start += width) {
    const Vec logits = beta * q.segment(start, width);
    const Vec e = (logits.array() - logits.maxCoeff()).exp().matrix();
    out.segment(start, width) = e / e.sum();
  }
  return out;
}

namespace {

Mat repeat_columns(const Mat& m, int times) {
  Mat out(m.rows(), m.cols() * times);
  for (Eigen::Index i = 0; i < m.cols(); ++i)
    for (int j = 0; j < times; ++j) out.col(i * times + j) = m.col(i);
  return out;
}

std::uint64_t state_seed(std::uint64_t seed, Eigen::Index i) {
  return Rng(seed).split(static_cast<std::uint64_t>(i)).next_u64();
}

// Policy samples for every state; ODE samplers integrate all states together.
PointSet sample_for_states(const Policy& policy, const Mat& states, int m, std::uint64_t seed) {
  const Eigen::Index N = states.cols();
  const int dim = policy.action_dim();
  PointSet out(dim, N * m);
  if (policy.sampler == SamplerKind::Ancestral) {
    for (Eigen::Index i = 0; i < N; ++i)
      out.middleCols(i * m, m) = policy.sample(states.col(i), static_cast<std::size_t>(m), state_seed(seed, i));
    return out;
  }
  SamplerConfig cfg;
  cfg.kind = policy.sampler;
  cfg.steps = policy.sampler_steps;
  cfg.n = static_cast<std::size_t>(m);
  constexpr Eigen::Index kChunkStates = 256;
  for (Eigen::Index first = 0; first < N; first += kChunkStates) {
    const Eigen::Index count = std::min(kChunkStates, N - first);
    PointSet x(dim, count * m);
    for (Eigen::Index k = 0; k < count; ++k) {
      cfg.seed = state_seed(seed, first + k);
      x.middleCols(k * m, m) = initial_noise(policy.sched, cfg, dim);
    }
    const FieldModel f = policy.field(repeat_columns(states.middleCols(first, count), m));
    out.middleCols(first * m, count * m) =
        integrate_ode([&](const PointSet& p, double t) { return f.velocity(p, t); }, std::move(x), cfg);
  }
  return out;
}

}  // namespace

SupportSet build_support_set(const Policy& policy, const Mat& states, const Mat& dataset_actions, int m,
                             std::uint64_t seed, const QFunction& q, double beta) {
  if (m < 1) throw std::invalid_argument("build_support_set: M must be at least 1");
  if (states.cols() != dataset_actions.cols()) throw std::invalid_argument("build_support_set: state/action count mismatch");
  if (dataset_actions.rows() != policy.action_dim()) throw std::invalid_argument("build_support_set: action dimension mismatch");
  SupportSet s;
  s.m = m;
  s.states = states;
  const int w = m + 1;
  const PointSet sampled = sample_for_states(policy, states, m, seed);
  s.actions.resize(dataset_actions.rows(), states.cols() * w);
  for (Eigen::Index i = 0; i < states.cols(); ++i) {
    s.actions.col(i * w) = dataset_actions.col(i);
    s.actions.middleCols(i * w + 1, m) = sampled.middleCols(i * m, m);
  }
  s.q = q(repeat_columns(states, w), s.actions);
  if (!s.q.allFinite()) throw std::runtime_error("build_support_set: non-finite Q value");
  s.weights = grouped_softmax(s.q, w, beta);
  return s;
}

QLearner::QLearner(Mlp net, double lr, double tau_) : online(net), target(std::move(net)), tau(tau_) {
  adam = AdamState(online.param_count(), lr);
}

Vec soft_td_targets(const Mlp& q_target, const TransitionBatch& batch, const Mat& next_actions, int width, double beta,
                    double gamma) {
  const Eigen::Index B = batch.size();
  Vec y = batch.rewards;
  const bool all_done = std::all_of(batch.done.begin(), batch.done.end(), [](int d) { return d != 0; });
  if (width == 0) {
    if (!all_done) throw std::invalid_argument("soft_td_targets: support actions for next states are required");
    return y;
  }
  if (next_actions.cols() != B * width) throw std::invalid_argument("soft_td_targets: next support has wrong size");
  const Vec qn = evaluate_q_net(q_target, repeat_columns(batch.next_states, width), next_actions);
  const Vec g = grouped_softmax(qn, width, beta);
  for (Eigen::Index i = 0; i < B; ++i) {
    if (batch.done[static_cast<std::size_t>(i)]) continue;
    y[i] += gamma * g.segment(i * width, width).dot(qn.segment(i * width, width));
  }
  return y;
}

double q_learning_step(QLearner& learner, const TransitionBatch& batch, const Mat& next_actions, int width, double beta,
                       double gamma) {
  const Eigen::Index B = batch.size();
  const Vec y = soft_td_targets(learner.target, batch, next_actions, width, beta, gamma);
  ConditionInput in;
  in.x = batch.actions;
  in.context = batch.states;
  const LossResult lr =
      weighted_regression_loss(learner.online, in, Vec::Ones(B), y.transpose(), Vec::Constant(B, 1.0 / B));
  if (!std::isfinite(lr.loss)) throw std::runtime_error("q_learning_step: non-finite loss");
  adam_step(learner.adam, learner.online.params(), lr.grad);
  soft_update(learner.target.params(), learner.online.params(), learner.tau);
  return lr.loss;
}

Mat tile_support(const Mat& actions, Eigen::Index count) { return actions.replicate(1, count); }

ChainQResult train_chain_q(const ChainMdp& mdp, const TransitionBatch& data, double beta, long steps, int batch,
                           double lr, double tau, std::uint64_t seed, std::vector<int> hidden, int log_every) {
  data.validate();
  Rng rng(seed);
  Mlp net(QFunction::learned_spec(mdp.n_states, mdp.n_actions, std::move(hidden)));
  {
    Rng init = rng.split(1);
    net.init(init);
  }
  QLearner learner(std::move(net), lr, tau);
  const Mat support = tile_support(mdp.all_actions(), batch);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(batch));
  ChainQResult r;
  for (long step = 0; step < steps; ++step) {
    for (auto& i : idx) i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(data.size())));
    r.final_loss = q_learning_step(learner, data.select(idx), support, mdp.n_actions, beta, mdp.gamma);
    if (log_every > 0 && ((step + 1) % log_every == 0 || step + 1 == steps)) r.log.emplace_back(step + 1, r.final_loss);
  }
  r.q.resize(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      r.q(s, a) = evaluate_q_net(learner.online, mdp.encode_state(s), mdp.encode_action(a))[0];
  r.oracle = soft_value_iteration(mdp, beta);
  r.sup_error = (r.q - r.oracle).cwiseAbs().maxCoeff();
  r.net = std::move(learner.online);
  return r;
}

QipoResult qipo_iterate(const Policy& behavior, const QFunction& q, const TransitionBatch& data, const QipoConfig& cfg,
                        const Vec& eval_state, const LinearGaussianBandit* reference) {
  data.validate();
  if (cfg.m < 1 || cfg.k_renew < 1 || cfg.k3 < 1 || cfg.states_per_batch < 1 || cfg.eval_every < 1)
    throw std::invalid_argument("qipo: M, K_renew, K3, states_per_batch and eval_every must be positive");
  if (!(cfg.beta >= 0.0)) throw std::invalid_argument("qipo: beta must be nonnegative");
  if (!(cfg.lambda_soft >= 0.0 && cfg.lambda_soft <= 1.0)) throw std::invalid_argument("qipo: lambda_soft must lie in [0, 1]");
  if (data.actions.rows() != behavior.action_dim() || data.states.rows() != behavior.state_dim())
    throw std::invalid_argument("qipo: dataset dimensions do not match the policy");
  if (eval_state.size() != behavior.state_dim()) throw std::invalid_argument("qipo: eval_state has the wrong dimension");
  if (reference && reference->action_dim() != behavior.action_dim())
    throw std::invalid_argument("qipo: reference bandit action dimension mismatch");

  const Eigen::Index N = data.size();
  double scale = data.actions.colwise().norm().maxCoeff();
  if (!(scale > 0.0)) scale = 1.0;
  const int steps_per_epoch =
      cfg.steps_per_epoch > 0 ? cfg.steps_per_epoch : std::max<int>(1, static_cast<int>(N / cfg.states_per_batch));

  Policy online = behavior;
  QipoResult result{behavior, {}, -1};
  Policy& ema = result.policy;
  AdamState adam(online.net.param_count(), cfg.lr);
  Rng rng(cfg.seed);
  const Rng seeds = Rng(cfg.seed).split(0x5eed);

  const int w = cfg.m + 1;
  const Eigen::Index rows = static_cast<Eigen::Index>(cfg.states_per_batch) * w;
  Mat bs(data.states.rows(), rows);
  PointSet ba(data.actions.rows(), rows);
  Vec bw(rows);

  SupportSet support;
  int renewals = 0;
  double best_sw = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < cfg.k3; ++epoch) {
    if (epoch % cfg.k_renew == 0) {
      support = build_support_set(ema, data.states, data.actions, cfg.m, seeds.split(static_cast<std::uint64_t>(renewals)).next_u64(),
                                  q, cfg.beta);
      for (Eigen::Index i = 0; i < N; ++i) {
        for (int j = 1; j < w; ++j) {
          const double norm = support.actions.col(support.column(i, j)).norm();
          if (!std::isfinite(norm) || norm > cfg.divergence_factor * scale) {
            char buf[256];
            std::snprintf(buf, sizeof buf,
                          "qipo diverged at renewal %d (epoch %d): sampled action norm %.4g exceeds %.4g x dataset "
                          "action scale %.4g",
                          renewals + 1, epoch, norm, cfg.divergence_factor, scale);
            throw QipoDivergence(buf);
          }
        }
      }
      ++renewals;
    }
    for (int step = 0; step < steps_per_epoch; ++step) {
      for (int k = 0; k < cfg.states_per_batch; ++k) {
        const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(N)));
        for (int j = 0; j < w; ++j) {
          const Eigen::Index c = support.column(i, j);
          bs.col(k * w + j) = data.states.col(i);
          ba.col(k * w + j) = support.actions.col(c);
          bw[k * w + j] = support.weights[c] / cfg.states_per_batch;
        }
      }
      const LossResult lr = policy_loss(online, bs, ba, bw, rng);
      if (!std::isfinite(lr.loss)) throw QipoDivergence("qipo diverged: non-finite policy loss at epoch " + std::to_string(epoch));
      adam_step(adam, online.net.params(), lr.grad);
      soft_update(ema.net.params(), online.net.params(), cfg.lambda_soft);
    }
    const int done = epoch + 1;
    if (done % cfg.eval_every != 0 && done != cfg.k3) continue;
    QipoEvalRow row{done, renewals, Vec(), Vec(), std::numeric_limits<double>::quiet_NaN()};
    const std::uint64_t eval_seed = Rng(cfg.seed).split(0xe7a1).split(static_cast<std::uint64_t>(done)).next_u64();
    const PointSet samples = ema.sample(eval_state, cfg.eval_samples, eval_seed);
    row.policy_mean = samples.rowwise().mean();
    if (reference) {
      row.analytic_target = reference->tilted_mean(cfg.beta, renewals);
      Rng ref_rng(eval_seed ^ 0x9e3779b97f4a7c15ULL);
      PointSet ref = ref_rng.normal_mat(samples.rows(), samples.cols());
      ref.colwise() += row.analytic_target;
      Rng proj(eval_seed);
      row.sw_distance = sliced_wasserstein(samples, ref, 64, proj);
      if (row.sw_distance < best_sw) {
        best_sw = row.sw_distance;
        result.best_epoch = done;
      }
    } else {
      result.best_epoch = done;
    }
    result.log.push_back(std::move(row));
  }
  return result;
}

void write_qipo_log(std::ostream& os, const std::vector<QipoEvalRow>& rows) {
  const Eigen::Index dim = rows.empty() ? 0 : rows.front().policy_mean.size();
  os << "epoch";
  for (Eigen::Index k = 0; k < dim; ++k) os << ",policy_mean" << k;
  for (Eigen::Index k = 0; k < dim; ++k) os << ",analytic_target" << k;
  os << ",sw_distance\n";
  char buf[64];
  for (const auto& r : rows) {
    os << r.epoch;
    for (Eigen::Index k = 0; k < dim; ++k) {
      std::snprintf(buf, sizeof buf, ",%.9g", r.policy_mean[k]);
      os << buf;
    }
    for (Eigen::Index k = 0; k < dim; ++k) {
      if (r.analytic_target.size() == dim)
        std::snprintf(buf, sizeof buf, ",%.9g", r.analytic_target[k]);
      else
        std::snprintf(buf, sizeof buf, ",");
      os << buf;
    }
    if (std::isfinite(r.sw_distance))
      std::snprintf(buf, sizeof buf, ",%.9g\n", r.sw_distance);
    else
      std::snprintf(buf, sizeof buf, ",\n");
    os << buf;
  }
}

}  // namespace ewflow
