#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "app.hpp"
#include "ewflow/checkpoint.hpp"
#include "ewflow/datasets.hpp"
#include "ewflow/exact_losses.hpp"
#include "ewflow/oracle.hpp"
#include "ewflow/paths.hpp"

namespace ewflow::app {

namespace {

struct Check {
  std::string name;
  double tolerance;
  bool upper;  // pass when value < tolerance, else when value >= tolerance
  std::function<double()> run;
};

double mlp_gradient_error() {
  Mlp net(MlpSpec{2, 0, 4, 0, {8}, 2, 10.0});
  Rng rng(1);
  net.init(rng);
  ConditionInput in;
  in.x = rng.normal_mat(2, 5);
  in.t = Vec::LinSpaced(5, 0.1, 0.9);
  const Mat target = rng.normal_mat(2, 5);
  const Vec w = Vec::Constant(5, 0.2);
  const Vec scale = Vec::Ones(5);
  const LossResult base = weighted_regression_loss(net, in, scale, target, w);
  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t k = 0; k < net.param_count(); ++k) {
    const double keep = net.params()[k];
    net.params()[k] = keep + h;
    const double up = weighted_regression_loss(net, in, scale, target, w).loss;
    net.params()[k] = keep - h;
    const double down = weighted_regression_loss(net, in, scale, target, w).loss;
    net.params()[k] = keep;
    const double fd = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(fd - base.grad[k]) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

double roundtrip_error() {
  Rng rng(2);
  double worst = 0.0;
  for (const PathSchedule& s : {PathSchedule::ot(), PathSchedule::vp()}) {
    for (int i = 0; i < 100; ++i) {
      const double t = rng.uniform(kTimeEps, 1.0 - kTimeEps);
      const Vec x = rng.normal_vec(2);
      const Vec score = rng.normal_vec(2);
      const Vec back = score_from_velocity(s, x, velocity_from_score(s, x, score, TimePoint(t)), TimePoint(t));
      worst = std::max(worst, (back - score).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

double cond_velocity_error() {
  Rng rng(3);
  double worst = 0.0;
  const Vec x0 = rng.normal_vec(2);
  const Vec eps = rng.normal_vec(2);
  const double h = 1e-5;
  for (const PathSchedule& s : {PathSchedule::ot(), PathSchedule::vp()}) {
    for (int i = 1; i <= 101; ++i) {
      const double t = i / 102.0;
      const Vec fd = (perturb_with(s, x0, TimePoint(t + h), eps) - perturb_with(s, x0, TimePoint(t - h), eps)) / (2 * h);
      const Vec u = cond_velocity(s, perturb_with(s, x0, TimePoint(t), eps), x0, TimePoint(t));
      worst = std::max(worst, (fd - u).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

GuidedOracle eight_gaussians(PathSchedule sched, int res) {
  const GaussianMixture p0 = make_dataset("8gaussians");
  const EnergySpec spec{Energy::linear((Vec(2) << 0.5, 0.0).finished()), 1.0};
  return GuidedOracle(p0, spec, sched, GuidedOracle::default_axes(p0, spec, res));
}

double continuity(PathSchedule sched) {
  const GuidedOracle o = eight_gaussians(sched, 128);
  const auto target = make_axes(Vec::Constant(2, o.axes()[0].lo), Vec::Constant(2, o.axes()[0].hi), 256);
  return o.continuity_residual(0.5, &target);
}

double gradient_equality(bool score) {
  const GuidedOracle o = eight_gaussians(score ? PathSchedule::vp() : PathSchedule::ot(), 16);
  const ExactQuadrature quad = make_exact_quadrature(o, 4);
  Mlp net(MlpSpec{2, 0, 0, 0, {16}, 2, 1.0});
  Rng rng(4);
  net.init(rng);
  if (score)
    return relative_difference(loss_ed_exact(net, ScoreParam::Direct, o, quad).grad,
                               loss_ced_exact(net, ScoreParam::Direct, o, quad).grad);
  return relative_difference(loss_efm_exact(net, o, quad).grad, loss_cefm_exact(net, o, quad).grad);
}

GuidedOracle bimodal(double beta) {
  const GaussianMixture p0 = make_dataset("bimodal");
  const EnergySpec spec{Energy::classifier(Energy::quadratic(Mat::Constant(1, 1, 0.25), Vec::Constant(1, 2.0))), beta};
  return GuidedOracle(p0, spec, PathSchedule::vp(), GuidedOracle::default_axes(p0, spec, 512));
}

double cfg_cep_beta1() {
  const GuidedOracle o = bimodal(1.0);
  Rng rng(5);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Vec x = Vec::Constant(1, rng.uniform(-4.0, 4.0));
    const double t = rng.uniform(0.05, 0.95);
    worst = std::max(worst, (o.cfg_score_exact(x, t, 1.0) - o.cep_score_exact(x, t, 1.0)).cwiseAbs().maxCoeff());
  }
  return worst;
}

double cfg_cep_beta2() {
  const GuidedOracle o = bimodal(2.0);
  double worst = 0.0;
  for (double x = -4.0; x <= 4.0; x += 0.25)
    for (double t : {0.1, 0.3, 0.5})
      worst = std::max(worst, std::abs(o.cfg_score_exact(Vec::Constant(1, x), t, 2.0)[0] -
                                       o.cep_score_exact(Vec::Constant(1, x), t, 2.0)[0]));
  return worst;
}

double normalization_error() {
  const GaussianMixture p0 = make_dataset("gaussian");
  const Energy e = Energy::linear(Vec::Ones(1));
  const GuidedOracle o(p0, EnergySpec{e, 1.0}, PathSchedule::ot(), GuidedOracle::default_axes(p0, EnergySpec{e, 1.0}, 2048, 10.0));
  return std::abs(o.normalization_constant() - std::exp(0.5));
}

double checkpoint_roundtrip() {
  Mlp net(MlpSpec{2, 3, 8, 0, {16, 16}, 2, 100.0});
  Rng rng(6);
  net.init(rng);
  const std::string path = "ewflow-selftest-checkpoint.bin";
  save_checkpoint(path, net, "{}");
  const Checkpoint ck = load_checkpoint(path, net.spec());
  std::remove(path.c_str());
  double worst = 0.0;
  for (std::size_t k = 0; k < net.param_count(); ++k)
    worst = std::max(worst, std::abs(ck.model.params()[k] - static_cast<double>(static_cast<float>(net.params()[k]))));
  return worst;
}

}  // namespace

int cmd_selftest(bool inject_sign_flip, const std::string& json_out) {
  fault::set_cond_score_sign_flip(inject_sign_flip);
  const std::vector<Check> checks = {
      {"mlp-gradient-fd", 1e-6, true, mlp_gradient_error},
      {"velocity-score-roundtrip", 1e-10, true, roundtrip_error},
      {"cond-velocity-vs-path-derivative", 1e-6, true, cond_velocity_error},
      {"continuity-ot-t0.5", 2e-2, true, [] { return continuity(PathSchedule::ot()); }},
      {"continuity-vp-t0.5", 2e-2, true, [] { return continuity(PathSchedule::vp()); }},
      {"efm-cefm-gradient-equality", 1e-5, true, [] { return gradient_equality(false); }},
      {"ed-ced-gradient-equality", 1e-5, true, [] { return gradient_equality(true); }},
      {"cfg-equals-cep-at-beta1", 1e-6, true, cfg_cep_beta1},
      {"cfg-differs-from-cep-at-beta2", 0.1, false, cfg_cep_beta2},
      {"normalization-gaussian-linear", 1e-6, true, normalization_error},
      {"checkpoint-roundtrip", 1e-12, true, checkpoint_roundtrip},
  };
  std::printf("%-34s %-6s %14s %12s %10s\n", "check", "result", "value", "tolerance", "ms");
  json rows = json::array();
  int failures = 0;
  for (const auto& ch : checks) {
    const auto t0 = std::chrono::steady_clock::now();
    double v = std::numeric_limits<double>::quiet_NaN();
    std::string error;
    try {
      v = ch.run();
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = error.empty() && std::isfinite(v) && (ch.upper ? v < ch.tolerance : v >= ch.tolerance);
    failures += pass ? 0 : 1;
    std::printf("%-34s %-6s %14.4e %s%11.1e %10.1f\n", ch.name.c_str(), pass ? "PASS" : "FAIL", v, ch.upper ? "<" : ">=",
                ch.tolerance, ms);
    if (!error.empty()) std::printf("  error: %s\n", error.c_str());
    rows.push_back({{"name", ch.name}, {"pass", pass}, {"value", std::isfinite(v) ? json(v) : json(nullptr)},
                    {"tolerance", ch.tolerance}, {"ms", ms}, {"error", error}});
  }
  fault::set_cond_score_sign_flip(false);
  std::printf("%d/%zu checks passed%s\n", static_cast<int>(checks.size()) - failures, checks.size(),
              inject_sign_flip ? " (cond_score sign flip injected)" : "");
  if (!json_out.empty()) {
    std::ofstream f(json_out);
    f << json{{"checks", rows}, {"failures", failures}, {"sign_flip_injected", inject_sign_flip}}.dump(2) << "\n";
  }
  return failures == 0 ? kOk : kRuntimeFailure;
}

}  // namespace ewflow::app
