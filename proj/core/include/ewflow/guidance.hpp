#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ewflow/energy.hpp"
#include "ewflow/grid.hpp"
#include "ewflow/gmm.hpp"
#include "ewflow/sampling.hpp"
#include "ewflow/training.hpp"

namespace ewflow {

// How the energy-weighted (EWD) side is trained: one beta-conditioned model
// for every beta, or a separate CED model per beta.
enum class EwdMode { BetaInput, PerBeta };
std::string to_string(EwdMode m);
EwdMode ewd_mode_from_string(const std::string& s);

struct CompareGuidanceConfig {
  std::string dataset = "bimodal";
  Energy energy = Energy::classifier(Energy::quadratic(Mat::Constant(1, 1, 0.25), Vec::Constant(1, 2.0)));
  std::vector<double> betas = {0.0, 1.0, 2.0, 4.0};
  EwdMode ewd_mode = EwdMode::BetaInput;
  // Shared training settings; loss and beta are set per model.
  TrainConfig train{};
  SamplerConfig sampler{};
  int tv_bins = 64;
  // TV histogram box; empty means the default oracle box of the dataset.
  Vec box_lo;
  Vec box_hi;
  int oracle_refine = 8;       // oracle cells per TV bin along each axis
  std::size_t oracle_samples = 2000;
  int sw_projections = 64;
};

struct CompareGuidanceRow {
  double beta;
  double ewd_tv;
  double cfg_tv;
  double ewd_sw;
  double cfg_sw;
};

struct CompareGuidanceResult {
  std::vector<CompareGuidanceRow> rows;
  std::vector<PointSet> ewd_samples;  // one per beta
  std::vector<PointSet> cfg_samples;
  TrainResult cfg_model;
  ModelMeta cfg_meta;
  std::vector<TrainResult> ewd_models;  // one, or one per beta
  std::vector<ModelMeta> ewd_meta;
};

// The oracle q0 ∝ p0 exp(-beta E) as TV-bin masses: a fine grid with
// `refine` cells per bin, summed into bins.
DensityGrid oracle_q0_bins(const GaussianMixture& p0, const Energy& energy, double beta, const Vec& lo, const Vec& hi,
                           int bins, int refine);

CompareGuidanceResult compare_guidance(const CompareGuidanceConfig& cfg);

void write_compare_table(std::ostream& os, const std::vector<CompareGuidanceRow>& rows);

}  // namespace ewflow
