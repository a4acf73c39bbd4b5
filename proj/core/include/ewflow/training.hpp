#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ewflow/energy.hpp"
#include "ewflow/field.hpp"
#include "ewflow/gmm.hpp"
#include "ewflow/mlp.hpp"
#include "ewflow/paths.hpp"
#include "ewflow/rng.hpp"
#include "ewflow/sampling.hpp"

namespace ewflow {

class GuidedOracle;

enum class LossKind { CFM, CEFM, EFM_EXACT, CED, ED_EXACT, CFG_UNCOND, CFG_COND, CED_BETA_INPUT };

std::string to_string(LossKind k);
// Accepts the enumerator names case-insensitively; "cfg" selects the CFG pair.
LossKind loss_kind_from_string(const std::string& s);
ModelRole role_for_loss(LossKind k);

// lambda(t) in the regression losses.
enum class TimeWeight { Uniform, Sigma2 };
std::string to_string(TimeWeight w);
TimeWeight time_weight_from_string(const std::string& s);
double time_weight(TimeWeight w, const PathSchedule& sched, double t);

struct WeightedBatch {
  PointSet x0;
  Vec energies;
  Vec weights;  // softmax(-beta E) over the batch
  Vec times;
  PointSet eps;
  PointSet xt;
};

// softmax_i(-beta * energies_i), computed with the max shifted out.
Vec softmax_weights(const Vec& energies, double beta);

// Draws B rows of `data` uniformly with replacement, then weights and perturbs them.
WeightedBatch build_weighted_batch(const PointSet& data, const Energy& energy, double beta,
                                   const PathSchedule& sched, Rng& rng, std::size_t B);
// Uses every column of x0 as given.
WeightedBatch make_weighted_batch(PointSet x0, const Vec& energies, double beta, const PathSchedule& sched, Rng& rng);

struct LossResult {
  double loss = 0.0;
  std::vector<double> grad;
};

// sum_i w_i || scale_i * net(in_i) - target_i ||^2 and its parameter gradient.
LossResult weighted_regression_loss(const Mlp& net, const ConditionInput& in, const Vec& scale, const Mat& targets,
                                    const Vec& weights);

// Per-sample regression targets: u_{t0}(x_t | x0) and -eps / sigma_t.
Mat cefm_targets(const WeightedBatch& b, const PathSchedule& sched);
Mat ced_targets(const WeightedBatch& b, const PathSchedule& sched);

// The conditioning extras shared by the batch losses.
struct BatchCondition {
  Mat context;    // empty or context_dim x B
  Vec beta_norm;  // empty or B
};

LossResult loss_cefm(const Mlp& model, const WeightedBatch& b, const PathSchedule& sched,
                     TimeWeight tw = TimeWeight::Uniform, const BatchCondition& cond = {});
LossResult loss_ced(const Mlp& model, ScoreParam param, const WeightedBatch& b, const PathSchedule& sched,
                    TimeWeight tw = TimeWeight::Uniform, const BatchCondition& cond = {});

// Binary labels with p(c = 1 | x0) = exp(-E(x0)); requires E >= 0 on the data.
std::vector<int> generate_labels(const PointSet& x0, const Energy& energy, Rng& rng);

// One-hot CFG context over {null, c = 0, c = 1}; label -1 is the null token.
inline constexpr int kCfgContextDim = 3;
Mat cfg_context(int label, Eigen::Index count);
Mat cfg_context(const std::vector<int>& labels);

struct CfgLosses {
  LossResult uncond;
  LossResult cond;
};
// Unconditional denoising loss on every sample (null context) and the
// conditional loss with each sample's own label, both with weight 1/B.
CfgLosses loss_cfg_pair(const Mlp& model, ScoreParam param, const WeightedBatch& b, const std::vector<int>& labels,
                        const PathSchedule& sched, TimeWeight tw = TimeWeight::Uniform);

struct TrainConfig {
  std::string dataset = "gaussian";
  Energy energy = Energy::linear(Vec::Ones(1));
  double beta = 1.0;
  PathParams path{};
  LossKind loss = LossKind::CED;
  ScoreParam score_param = ScoreParam::Noise;
  TimeWeight time_weight = TimeWeight::Uniform;
  MlpSpec model{1, 0, 64, 0, {256, 256, 256}, 1, 1e4};
  long steps = 20000;
  int batch = 256;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  double beta_max = 10.0;
  // CED_BETA_INPUT: the batch is split into this many groups, each with its
  // own beta ~ U(0, beta_max) and its own softmax.
  int beta_groups = 8;
  int log_every = 100;
  // When positive, the returned model is the exponential moving average of
  // the iterates with this decay per step.
  double ema_decay = 0.0;
  // Cosine decay of the learning rate from lr to 0 over the run.
  bool cosine_lr = true;
  // Exact-quadrature losses only.
  int exact_resolution = 32;
  int exact_time_nodes = 8;
};

struct TrainLogRow {
  long step;
  double loss;
  double wallclock_ms;
};

struct TrainResult {
  Mlp model;
  ModelRole role = ModelRole::Score;
  std::vector<TrainLogRow> log;
};

// Adjusts model input/output sizes to the dataset and loss kind.
MlpSpec resolve_model_spec(const TrainConfig& cfg, int data_dim);
// The energy actually used for labels in CFG training: classifier-derived,
// shifted so that its minimum over the default grid is zero.
Energy cfg_label_energy(const GaussianMixture& p0, const Energy& energy);

TrainResult train_density_model(const TrainConfig& cfg);

void write_train_log(std::ostream& os, const std::vector<TrainLogRow>& rows);

// What a checkpoint's network means, stored as the checkpoint metadata.
struct ModelMeta {
  ModelRole role = ModelRole::Score;
  ScoreParam param = ScoreParam::Noise;
  PathParams path{};
  LossKind loss = LossKind::CED;
  double beta = 1.0;      // training beta (or default guidance scale for CFG)
  double beta_max = 10.0;  // beta-input models
  std::string dataset;
  std::string energy;
};

ModelMeta make_model_meta(const TrainConfig& cfg, const TrainResult& result);
std::string model_meta_to_json(const ModelMeta& m);
ModelMeta model_meta_from_json(const std::string& text);

// Samples a trained network according to its metadata. beta selects the
// guidance scale for CFG pairs (composed from the null and c = 1 contexts)
// and the input beta for beta-conditioned models; other models ignore it.
PointSet sample_trained(const Mlp& net, const ModelMeta& meta, const SamplerConfig& cfg,
                        std::optional<double> beta = std::nullopt);

}  // namespace ewflow
