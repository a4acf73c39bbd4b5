#include "ewflow/guidance.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "ewflow/datasets.hpp"
#include "ewflow/metrics.hpp"
#include "ewflow/oracle.hpp"

namespace ewflow {

std::string to_string(EwdMode m) { return m == EwdMode::BetaInput ? "beta-input" : "per-beta"; }

EwdMode ewd_mode_from_string(const std::string& s) {
  if (s == "beta-input") return EwdMode::BetaInput;
  if (s == "per-beta") return EwdMode::PerBeta;
  throw std::invalid_argument("unknown EWD mode '" + s + "' (expected beta-input or per-beta)");
}

DensityGrid oracle_q0_bins(const GaussianMixture& p0, const Energy& energy, double beta, const Vec& lo, const Vec& hi,
                           int bins, int refine) {
  if (bins < 1 || refine < 1) throw std::invalid_argument("oracle_q0_bins: bins and refine must be positive");
  const GuidedOracle oracle(p0, EnergySpec{energy, beta}, PathSchedule::ot(), make_axes(lo, hi, bins * refine));
  DensityGrid g = oracle.guided_q0_grid().coarsen(refine);
  g.normalize();
  return g;
}

namespace {

double max_beta(const std::vector<double>& betas) { return *std::max_element(betas.begin(), betas.end()); }

}  // namespace

CompareGuidanceResult compare_guidance(const CompareGuidanceConfig& cfg) {
  if (cfg.betas.empty()) throw std::invalid_argument("compare-guidance: beta list is empty");
  for (double b : cfg.betas)
    if (!(b >= 0.0)) throw std::invalid_argument("compare-guidance: betas must be nonnegative");
  if (cfg.energy.kind() != EnergyKind::Classifier)
    throw std::invalid_argument("compare-guidance needs a classifier-derived energy");
  const GaussianMixture p0 = make_dataset(cfg.dataset);
  if (p0.dim() > 2) throw std::invalid_argument("compare-guidance: oracle grids support dimension <= 2");

  Vec lo = cfg.box_lo;
  Vec hi = cfg.box_hi;
  if (lo.size() == 0 || hi.size() == 0) {
    const auto axes = GuidedOracle::default_axes(p0, EnergySpec{cfg.energy, max_beta(cfg.betas)}, cfg.tv_bins);
    lo.resize(p0.dim());
    hi.resize(p0.dim());
    for (int d = 0; d < p0.dim(); ++d) {
      lo[d] = axes[static_cast<std::size_t>(d)].lo;
      hi[d] = axes[static_cast<std::size_t>(d)].hi;
    }
  }
  if (lo.size() != p0.dim() || hi.size() != p0.dim()) throw std::invalid_argument("compare-guidance: box dimension mismatch");

  TrainConfig base = cfg.train;
  base.dataset = cfg.dataset;
  base.energy = cfg.energy;

  CompareGuidanceResult out;
  TrainConfig cfg_train = base;
  cfg_train.loss = LossKind::CFG_UNCOND;
  cfg_train.beta = 1.0;
  out.cfg_model = train_density_model(cfg_train);
  out.cfg_meta = make_model_meta(cfg_train, out.cfg_model);
  const TrainResult& cfg_model = out.cfg_model;
  const ModelMeta& cfg_meta = out.cfg_meta;

  std::vector<TrainResult>& ewd_models = out.ewd_models;
  std::vector<ModelMeta>& ewd_meta = out.ewd_meta;
  auto train_ewd = [&](TrainConfig t) {
    ewd_models.push_back(train_density_model(t));
    ewd_meta.push_back(make_model_meta(t, ewd_models.back()));
  };
  if (cfg.ewd_mode == EwdMode::BetaInput) {
    TrainConfig t = base;
    t.loss = LossKind::CED_BETA_INPUT;
    t.beta_max = std::max(base.beta_max, max_beta(cfg.betas));
    t.seed = base.seed + 1;
    train_ewd(t);
  } else {
    for (std::size_t k = 0; k < cfg.betas.size(); ++k) {
      TrainConfig t = base;
      t.loss = LossKind::CED;
      t.beta = cfg.betas[k];
      t.seed = base.seed + 1 + k;
      train_ewd(t);
    }
  }
  for (std::size_t k = 0; k < cfg.betas.size(); ++k) {
    const double beta = cfg.betas[k];
    const std::size_t e = cfg.ewd_mode == EwdMode::BetaInput ? 0 : k;
    SamplerConfig sc = cfg.sampler;
    sc.seed = cfg.sampler.seed + k;
    PointSet ewd = sample_trained(ewd_models[e].model, ewd_meta[e], sc, beta);
    PointSet cfgs = sample_trained(cfg_model.model, cfg_meta, sc, beta);

    const DensityGrid bins = oracle_q0_bins(p0, cfg.energy, beta, lo, hi, cfg.tv_bins, cfg.oracle_refine);
    const GuidedOracle fine(p0, EnergySpec{cfg.energy, beta}, PathSchedule::ot(),
                            make_axes(lo, hi, cfg.tv_bins * cfg.oracle_refine));
    Rng rng = Rng(cfg.sampler.seed).split(0x0a11 + k);
    const PointSet ref = fine.guided_q0_grid().sample(rng, cfg.oracle_samples);

    CompareGuidanceRow row{beta, grid_tv_distance(ewd, bins).tv, grid_tv_distance(cfgs, bins).tv, 0.0, 0.0};
    Rng p1 = rng.split(1);
    Rng p2 = rng.split(1);
    row.ewd_sw = sliced_wasserstein(ewd, ref, cfg.sw_projections, p1);
    row.cfg_sw = sliced_wasserstein(cfgs, ref, cfg.sw_projections, p2);
    out.rows.push_back(row);
    out.ewd_samples.push_back(std::move(ewd));
    out.cfg_samples.push_back(std::move(cfgs));
  }
  return out;
}

void write_compare_table(std::ostream& os, const std::vector<CompareGuidanceRow>& rows) {
  os << "beta,EWD_tv,CFG_tv,EWD_sw,CFG_sw\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g,%.9g,%.9g\n", r.beta, r.ewd_tv, r.cfg_tv, r.ewd_sw, r.cfg_sw);
    os << buf;
  }
}

}  // namespace ewflow
