#include <cmath>

#include "doctest.h"
#include "ewflow/datasets.hpp"
#include "ewflow/energy.hpp"
#include "ewflow/exact_losses.hpp"
#include "ewflow/oracle.hpp"
#include "ewflow/paths.hpp"
#include "ewflow/training.hpp"

using namespace ewflow;

namespace {

Vec scalar(double v) { return Vec::Constant(1, v); }

Mlp frozen_net(int dim, int embed, std::uint64_t seed, int context = 0) {
  MlpSpec s;
  s.x_dim = dim;
  s.out_dim = dim;
  s.context_dim = context;
  s.time_embed_dim = embed;
  s.hidden = {16, 16};
  s.max_frequency = 100.0;
  Mlp net(s);
  Rng rng(seed);
  net.init(rng);
  return net;
}

WeightedBatch random_batch(int dim, int B, double beta, const PathSchedule& sched, std::uint64_t seed) {
  Rng rng(seed);
  const PointSet x0 = rng.normal_mat(dim, B);
  const Vec e = rng.normal_vec(B);
  return make_weighted_batch(x0, e, beta, sched, rng);
}

// Output of the network for one sample.
Vec net_at(const Mlp& net, const Vec& x, double t) {
  ConditionInput in;
  in.x = x;
  in.t = scalar(t);
  return net.forward(in).col(0);
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("batch softmax weights") {
    const Vec w4 = softmax_weights(Vec::Constant(4, 2.5), 3.0);
    for (int i = 0; i < 4; ++i) CHECK(w4[i] == doctest::Approx(0.25).epsilon(1e-12));

    const Vec w2 = softmax_weights((Vec(2) << 0.0, std::log(2.0)).finished(), 1.0);
    CHECK(w2[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(w2[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    Rng rng(1);
    const Vec e = 5.0 * rng.normal_vec(64);
    const Vec w0 = softmax_weights(e, 0.0);
    CHECK((w0.array() - 1.0 / 64).abs().maxCoeff() < 1e-15);
    for (double beta : {0.5, 1.0, 10.0, 50.0}) {
      const Vec w = softmax_weights(e, beta);
      CHECK(std::abs(w.sum() - 1.0) < 1e-9);
      CHECK((softmax_weights((e.array() + 123.0).matrix(), beta) - w).cwiseAbs().maxCoeff() < 1e-12);
      CHECK(w.allFinite());
    }
    CHECK_THROWS(softmax_weights(Vec(), 1.0));
    CHECK_THROWS(softmax_weights((Vec(2) << 0.0, NAN).finished(), 1.0));
  }

  TEST_CASE("weighted batches") {
    const auto sched = PathSchedule::vp();
    Rng rng(2);
    const PointSet data = rng.normal_mat(2, 50);
    const Energy e = Energy::linear((Vec(2) << 1.0, -0.5).finished());
    const WeightedBatch b = build_weighted_batch(data, e, 2.0, sched, rng, 32);
    CHECK(b.x0.cols() == 32);
    CHECK(std::abs(b.weights.sum() - 1.0) < 1e-9);
    for (int i = 0; i < 32; ++i) {
      CHECK(b.energies[i] == doctest::Approx(e(b.x0.col(i))));
      CHECK(b.times[i] >= kTimeEps);
      CHECK(b.times[i] <= 1.0 - kTimeEps);
      CHECK((b.xt.col(i) - perturb_with(sched, b.x0.col(i), TimePoint(b.times[i]), b.eps.col(i))).norm() < 1e-15);
    }
    CHECK_THROWS_AS(build_weighted_batch(data, e, 1.0, sched, rng, 1), std::invalid_argument);
    CHECK_THROWS(build_weighted_batch(PointSet(2, 0), e, 1.0, sched, rng, 4));
    CHECK_THROWS(make_weighted_batch(rng.normal_mat(1, 3), (Vec(3) << 0.0, INFINITY, 1.0).finished(), 1.0, sched, rng));
  }

  TEST_CASE("conditional energy-weighted flow matching loss") {
    const auto sched = PathSchedule::ot();
    const Mlp net = frozen_net(2, 8, 3);

    SUBCASE("matches a direct per-sample recomputation") {
      const WeightedBatch b = random_batch(2, 24, 1.3, sched, 4);
      double expected = 0.0;
      for (int i = 0; i < 24; ++i) {
        const double t = b.times[i];
        const Vec u = ((1.0 - 0.0054) * b.xt.col(i) - b.x0.col(i)) / (0.0054 + (1.0 - 0.0054) * t);
        expected += b.weights[i] * (net_at(net, b.xt.col(i), t) - u).squaredNorm();
      }
      CHECK(std::abs(loss_cefm(net, b, sched).loss - expected) < 1e-10 * std::max(1.0, expected));
    }
    SUBCASE("without guidance it is the plain flow matching loss over B") {
      const WeightedBatch b = random_batch(2, 16, 0.0, sched, 5);
      const Mat u = cefm_targets(b, sched);
      ConditionInput in;
      in.x = b.xt;
      in.t = b.times;
      const double cfm = (net.forward(in) - u).colwise().squaredNorm().sum();
      CHECK(loss_cefm(net, b, sched).loss == doctest::Approx(cfm / 16).epsilon(1e-12));
    }
    SUBCASE("vanishes when the network reproduces every target") {
      WeightedBatch b = random_batch(1, 12, 1.0, sched, 6);
      // Choose x0 so that the conditional velocity equals the network output.
      for (int i = 0; i < 12; ++i) {
        const auto c = sched.cond_velocity_coeffs(TimePoint(b.times[i]));
        b.x0(0, i) = (net_at(frozen_net(1, 8, 3), b.xt.col(i), b.times[i])[0] - c.a * b.xt(0, i)) / c.b;
      }
      const LossResult r = loss_cefm(frozen_net(1, 8, 3), b, sched);
      CHECK(r.loss < 1e-24);
      for (double g : r.grad) CHECK(std::abs(g) < 1e-12);
    }
    SUBCASE("sigma2 weighting multiplies each term by sigma_t^2") {
      const WeightedBatch b = random_batch(2, 8, 0.7, sched, 8);
      WeightedBatch scaled = b;
      for (int i = 0; i < 8; ++i) scaled.weights[i] *= std::pow(sched.sigma(TimePoint(b.times[i])), 2);
      CHECK(loss_cefm(net, b, sched, TimeWeight::Sigma2).loss ==
            doctest::Approx(loss_cefm(net, scaled, sched).loss).epsilon(1e-12));
    }
  }

  TEST_CASE("conditional energy-weighted diffusion loss") {
    const auto sched = PathSchedule::vp();
    const Mlp net = frozen_net(1, 8, 9);

    SUBCASE("vanishes when the predicted score equals the conditional score") {
      for (ScoreParam p : {ScoreParam::Direct, ScoreParam::Noise}) {
        WeightedBatch b = random_batch(1, 10, 1.0, sched, 10);
        // Choose x0 so that the conditional score equals the network prediction.
        for (int i = 0; i < 10; ++i) {
          const TimePoint t(b.times[i]);
          const double s = sched.sigma(t);
          const double out = net_at(net, b.xt.col(i), b.times[i])[0];
          const double score = p == ScoreParam::Direct ? out : -out / s;
          b.x0(0, i) = (b.xt(0, i) + s * s * score) / sched.mu(t);
        }
        CHECK(loss_ced(net, p, b, sched).loss < 1e-20);
      }
    }
    SUBCASE("without guidance it is denoising score matching over B") {
      const WeightedBatch b = random_batch(1, 20, 0.0, sched, 11);
      double dsm = 0.0;
      for (int i = 0; i < 20; ++i) {
        const double s = sched.sigma(TimePoint(b.times[i]));
        dsm += std::pow(net_at(net, b.xt.col(i), b.times[i])[0] + b.eps(0, i) / s, 2);
        CHECK(ced_targets(b, sched)(0, i) == doctest::Approx(-b.eps(0, i) / s).epsilon(1e-12));
      }
      CHECK(loss_ced(net, ScoreParam::Direct, b, sched).loss == doctest::Approx(dsm / 20).epsilon(1e-12));
    }
    SUBCASE("score targets convert to the velocity targets") {
      for (const auto& sc : {PathSchedule::ot(), PathSchedule::vp()}) {
        const WeightedBatch b = random_batch(2, 30, 1.0, sc, 12);
        const Mat s = ced_targets(b, sc);
        const Mat u = cefm_targets(b, sc);
        for (int i = 0; i < 30; ++i) {
          const Vec conv = velocity_from_score(sc, Vec(b.xt.col(i)), Vec(s.col(i)), TimePoint(b.times[i]));
          CHECK((conv - u.col(i)).norm() < 1e-10 * (1.0 + u.col(i).norm()));
        }
      }
    }
  }

  TEST_CASE("gradients of the exact losses agree in 1-D") {
    const GaussianMixture p0({{0.3, scalar(-1.5), scalar(0.2)}, {0.7, scalar(1.0), scalar(0.3)}});
    const EnergySpec spec{Energy::quadratic(Mat::Constant(1, 1, 1.0), scalar(0.5)), 1.5};
    Mlp net(MlpSpec{1, 0, 0, 0, {16}, 1, 1.0});
    Rng rng(13);
    net.init(rng);
    for (const auto& sched : {PathSchedule::ot(), PathSchedule::vp()}) {
      const GuidedOracle oracle(p0, spec, sched, GuidedOracle::default_axes(p0, spec, 48));
      const ExactQuadrature q = make_exact_quadrature(oracle, 6);
      CHECK(relative_difference(loss_efm_exact(net, oracle, q).grad, loss_cefm_exact(net, oracle, q).grad) < 1e-5);
      for (ScoreParam p : {ScoreParam::Direct, ScoreParam::Noise})
        CHECK(relative_difference(loss_ed_exact(net, p, oracle, q).grad, loss_ced_exact(net, p, oracle, q).grad) <
              1e-5);
    }
  }

  TEST_CASE("classifier labels") {
    SUBCASE("label frequency matches the normalization constant") {
      const auto p0 = GaussianMixture::standard_normal(1);
      const Energy e = Energy::quadratic(Mat::Constant(1, 1, 0.5), scalar(0.0));
      Rng rng(14);
      const std::size_t n = 100000;
      const PointSet x0 = p0.sample(rng, n);
      const auto labels = generate_labels(x0, e, rng);
      double ones = 0.0;
      for (int c : labels) ones += c;
      const double p = 1.0 / std::sqrt(1.5);
      CHECK(std::abs(ones / n - p) < 3.0 * std::sqrt(p * (1 - p) / n));
    }
    SUBCASE("zero energy labels everything as class 1") {
      Rng rng(15);
      const auto labels = generate_labels(rng.normal_mat(2, 500), Energy::linear(Vec::Zero(2)), rng);
      for (int c : labels) CHECK(c == 1);
    }
    SUBCASE("negative energies must be shifted first") {
      Rng rng(16);
      CHECK_THROWS_AS(generate_labels(scalar(-2.0), Energy::linear(scalar(1.0)), rng), std::domain_error);
    }
    SUBCASE("context tokens") {
      const Mat c = cfg_context(std::vector<int>{-1, 0, 1});
      CHECK(c == Mat::Identity(3, 3));
      CHECK(cfg_context(1, 2).row(2).sum() == 2.0);
      CHECK_THROWS(cfg_context(2, 1));
    }
  }

  TEST_CASE("conditional and unconditional CFG losses coincide when the context is ignored") {
    Mlp net = frozen_net(1, 8, 17, kCfgContextDim);
    // First layer columns for the context come after x and the time embedding.
    const int rows = net.spec().hidden[0];
    for (int col = 1 + 8; col < 1 + 8 + kCfgContextDim; ++col)
      for (int r = 0; r < rows; ++r) net.params()[static_cast<std::size_t>(col) * rows + r] = 0.0;
    const auto sched = PathSchedule::vp();
    const WeightedBatch b = random_batch(1, 16, 0.0, sched, 18);
    Rng rng(19);
    const auto labels = generate_labels(b.x0, Energy::linear(scalar(0.0)), rng);
    const CfgLosses l = loss_cfg_pair(net, ScoreParam::Noise, b, labels, sched);
    CHECK(l.uncond.loss == doctest::Approx(l.cond.loss).epsilon(1e-14));
    CHECK(l.cond.loss == doctest::Approx(loss_ced(net, ScoreParam::Noise, b, sched, TimeWeight::Uniform,
                                                  {cfg_context(1, 16), {}})
                                             .loss)
                             .epsilon(1e-12));
    CHECK_THROWS(loss_cfg_pair(frozen_net(1, 8, 17), ScoreParam::Noise, b, labels, sched));
    CHECK_THROWS(loss_cfg_pair(net, ScoreParam::Noise, b, std::vector<int>(3, 1), sched));
  }

  TEST_CASE("weighted diffusion at beta = 1 targets the class-1 posterior on a two-point support") {
    // x0 in {a, b} with prior weights pa, pb and p(c = 1 | x0) = exp(-E(x0)).
    const double a = -1.0, bpt = 2.0, pa = 0.6, pb = 0.4;
    const Energy classifier = Energy::classifier(Energy::quadratic(Mat::Constant(1, 1, 0.5), scalar(1.5)));
    const double ea = classifier(scalar(a)), eb = classifier(scalar(bpt));
    const auto sched = PathSchedule::vp();
    for (double t : {0.2, 0.5, 0.8}) {
      const double m = sched.mu(t), s = sched.sigma(t);
      for (double x : {-2.0, 0.0, 1.0, 3.0}) {
        const double ka = pa * std::exp(-0.5 * std::pow((x - m * a) / s, 2));
        const double kb = pb * std::exp(-0.5 * std::pow((x - m * bpt) / s, 2));
        const double ta = -(x - m * a) / (s * s), tb = -(x - m * bpt) / (s * s);
        // Energy-weighted objective: prior x kernel x softmax weight of the energies.
        const Vec g = softmax_weights((Vec(2) << ea, eb).finished(), 1.0);
        const double ced = (ka * g[0] * ta + kb * g[1] * tb) / (ka * g[0] + kb * g[1]);
        // Class-conditioned objective: prior x kernel x label probability.
        const double pca = classifier.class_probability(scalar(a)), pcb = classifier.class_probability(scalar(bpt));
        const double cond = (ka * pca * ta + kb * pcb * tb) / (ka * pca + kb * pcb);
        CHECK(std::abs(ced - cond) < 1e-10 * (1.0 + std::abs(cond)));
      }
    }
  }

  TEST_CASE("names and metadata") {
    CHECK(loss_kind_from_string("cefm") == LossKind::CEFM);
    CHECK(loss_kind_from_string("ced_beta_input") == LossKind::CED_BETA_INPUT);
    CHECK(loss_kind_from_string("cfg") == LossKind::CFG_UNCOND);
    CHECK_THROWS_AS(loss_kind_from_string("dsm"), std::invalid_argument);
    CHECK(role_for_loss(LossKind::CEFM) == ModelRole::Velocity);
    CHECK(role_for_loss(LossKind::CED) == ModelRole::Score);
    CHECK(time_weight_from_string("sigma2") == TimeWeight::Sigma2);
    CHECK_THROWS(time_weight_from_string("sigma"));

    ModelMeta m;
    m.role = ModelRole::Velocity;
    m.param = ScoreParam::Direct;
    m.path = PathParams{PathKind::VP, 0.01, 0.2, 15.0};
    m.loss = LossKind::CEFM;
    m.beta = 2.5;
    m.beta_max = 7.0;
    m.dataset = "8gaussians";
    m.energy = "linear";
    const ModelMeta r = model_meta_from_json(model_meta_to_json(m));
    CHECK(r.role == m.role);
    CHECK(r.param == m.param);
    CHECK(r.path.kind == PathKind::VP);
    CHECK(r.path.beta_max == 15.0);
    CHECK(r.loss == m.loss);
    CHECK(r.beta == 2.5);
    CHECK(r.beta_max == 7.0);
    CHECK(r.dataset == m.dataset);
    CHECK(r.energy == m.energy);
  }

  TEST_CASE("model spec resolution") {
    TrainConfig cfg;
    cfg.loss = LossKind::CFG_COND;
    CHECK(resolve_model_spec(cfg, 2).context_dim == kCfgContextDim);
    cfg.loss = LossKind::CED_BETA_INPUT;
    const MlpSpec s = resolve_model_spec(cfg, 2);
    CHECK(s.x_dim == 2);
    CHECK(s.out_dim == 2);
    CHECK(s.accepts_beta());
  }
}
