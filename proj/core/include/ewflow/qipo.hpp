#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ewflow/field.hpp"
#include "ewflow/mlp.hpp"
#include "ewflow/optim.hpp"
#include "ewflow/paths.hpp"
#include "ewflow/rl_env.hpp"
#include "ewflow/rng.hpp"
#include "ewflow/sampling.hpp"
#include "ewflow/training.hpp"

namespace ewflow {

// QD: Q-weighted diffusion loss on the VP path (score network, ancestral
// sampler). QF: Q-weighted flow loss on the OT path (velocity network, ODE).
enum class PolicyLoss { QD, QF };
std::string to_string(PolicyLoss l);
PolicyLoss policy_loss_from_string(const std::string& s);

struct PolicySpec {
  PolicyLoss loss = PolicyLoss::QF;
  std::vector<int> hidden = {64, 64, 64};
  int time_embed_dim = 32;
  double max_frequency = 1e3;
  SamplerKind sampler = SamplerKind::HeunOde;  // QD policies need Ancestral or an ODE sampler
  int sampler_steps = 15;
};

// Conditional action generator pi(a | state).
struct Policy {
  Mlp net;
  ModelRole role = ModelRole::Velocity;
  ScoreParam param = ScoreParam::Direct;
  PathSchedule sched{PathParams{}};
  TimeWeight time_weight = TimeWeight::Uniform;
  SamplerKind sampler = SamplerKind::HeunOde;
  int sampler_steps = 15;

  int action_dim() const { return net.spec().x_dim; }
  int state_dim() const { return net.spec().context_dim; }
  FieldModel field(const Mat& context) const;
  // n actions for one state; particle streams derive from seed.
  PointSet sample(const Vec& state, std::size_t n, std::uint64_t seed) const;
};

Policy make_policy(const PolicySpec& spec, int state_dim, int action_dim, Rng& rng);

// One weighted regression step of the policy on (state, action) columns.
LossResult policy_loss(const Policy& policy, const Mat& states, const PointSet& actions, const Vec& weights, Rng& rng);

struct PretrainConfig {
  long steps = 10000;
  int batch = 256;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

// Unweighted conditional flow/score matching on the dataset's (state, action)
// pairs. Returns the final-step loss.
double behavior_pretrain(Policy& policy, const TransitionBatch& data, const PretrainConfig& cfg);

// Q(state, action). Either a known function or an MLP with x = action,
// context = state and no time input.
class QFunction {
 public:
  using Oracle = std::function<double(const Vec& state, const Vec& action)>;

  static QFunction oracle(Oracle fn);
  static QFunction learned(Mlp net);
  static MlpSpec learned_spec(int state_dim, int action_dim, std::vector<int> hidden = {64, 64});

  bool is_learned() const { return !fn_; }
  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }
  // One value per column pair.
  Vec operator()(const Mat& states, const Mat& actions) const;

 private:
  Oracle fn_;
  Mlp net_;
};

Vec evaluate_q_net(const Mlp& net, const Mat& states, const Mat& actions);

// Per state i: actions a_{i0..iM} (a_{i0} the dataset action), Q values and
// guidance weights g_ij = softmax_j(beta Q). Columns are grouped by state:
// column i * (M + 1) + j.
struct SupportSet {
  Mat states;    // state_dim x N
  Mat actions;   // action_dim x N (M + 1)
  Vec q;
  Vec weights;
  int m = 0;

  Eigen::Index num_states() const { return states.cols(); }
  int width() const { return m + 1; }
  Eigen::Index column(Eigen::Index i, int j) const { return i * width() + j; }
  void validate() const;
};

// softmax over each consecutive block of `width` entries of beta * q.
Vec grouped_softmax(const Vec& q, int width, double beta);

// Samples M actions per state from the policy with one derived seed per state,
// prepends the dataset action and weights the set by softmax(beta Q).
SupportSet build_support_set(const Policy& policy, const Mat& states, const Mat& dataset_actions, int m,
                             std::uint64_t seed, const QFunction& q, double beta);

// Online and target Q networks with their optimizer.
struct QLearner {
  Mlp online;
  Mlp target;
  AdamState adam;
  double tau = 0.005;

  QLearner(Mlp net, double lr, double tau);
};

// r + gamma (1 - done) sum_j softmax_j(beta Q_target(s', a'_j)) Q_target(s', a'_j)
// with next_actions grouped `width` per next state. width may be 0 only when
// every transition is terminal.
Vec soft_td_targets(const Mlp& q_target, const TransitionBatch& batch, const Mat& next_actions, int width, double beta,
                    double gamma);

// One Adam step on the mean squared TD error followed by a soft target update.
double q_learning_step(QLearner& learner, const TransitionBatch& batch, const Mat& next_actions, int width, double beta,
                       double gamma);

// Repeats next_actions (action_dim x width) once per column of the batch.
Mat tile_support(const Mat& actions, Eigen::Index count);

struct ChainQResult {
  Mlp net;
  std::vector<std::pair<long, double>> log;  // (step, loss)
  Mat q;  // n_states x n_actions from the online network
  Mat oracle;
  double sup_error = 0.0;
  double final_loss = 0.0;
};

// In-support softmax Q-learning on a chain dataset with every action as the
// support of each next state, compared against soft value iteration.
ChainQResult train_chain_q(const ChainMdp& mdp, const TransitionBatch& data, double beta, long steps, int batch,
                           double lr, double tau, std::uint64_t seed, std::vector<int> hidden = {64, 64},
                           int log_every = 100);

struct QipoConfig {
  int m = 16;
  int k_renew = 10;
  int k3 = 100;
  double beta = 1.0;
  double lr = 1e-3;
  double lambda_soft = 0.005;
  int states_per_batch = 16;
  int steps_per_epoch = 0;  // 0: dataset size / states_per_batch
  int eval_every = 5;
  std::size_t eval_samples = 2000;
  double divergence_factor = 10.0;
  std::uint64_t seed = 0;
};

struct QipoEvalRow {
  int epoch;
  int renewals;
  Vec policy_mean;
  Vec analytic_target;  // empty without an analytic reference
  double sw_distance;   // NaN without an analytic reference
};

struct QipoResult {
  Policy policy;  // the averaged policy used for renewals and evaluation
  std::vector<QipoEvalRow> log;
  int best_epoch = -1;
};

struct QipoDivergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Q-weighted fine-tuning with support renewal every k_renew epochs starting at
// epoch 0. An exponential average of the trained parameters is the policy
// that samples renewed supports and is evaluated at eval_state every
// eval_every epochs. With `reference`, evaluation compares against the
// analytic tilt N(renewals * beta * w, I).
QipoResult qipo_iterate(const Policy& behavior, const QFunction& q, const TransitionBatch& data, const QipoConfig& cfg,
                        const Vec& eval_state, const LinearGaussianBandit* reference = nullptr);

void write_qipo_log(std::ostream& os, const std::vector<QipoEvalRow>& rows);

}  // namespace ewflow
