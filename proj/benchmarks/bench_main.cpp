#include <benchmark/benchmark.h>

#include "ewflow/datasets.hpp"
#include "ewflow/energy.hpp"
#include "ewflow/mlp.hpp"
#include "ewflow/oracle.hpp"
#include "ewflow/paths.hpp"
#include "ewflow/sampling.hpp"

using namespace ewflow;

namespace {

Mlp make_net(int width, std::uint64_t seed) {
  MlpSpec spec;
  spec.x_dim = 2;
  spec.out_dim = 2;
  spec.time_embed_dim = 64;
  spec.hidden = {width, width, width};
  Mlp net(spec);
  Rng rng(seed);
  net.init(rng);
  return net;
}

ConditionInput batch_input(int batch, std::uint64_t seed) {
  Rng rng(seed);
  ConditionInput in;
  in.x = rng.normal_mat(2, batch);
  in.t = Vec::LinSpaced(batch, 0.01, 0.99);
  return in;
}

void BM_MlpForward(benchmark::State& state) {
  const Mlp net = make_net(static_cast<int>(state.range(0)), 1);
  const ConditionInput in = batch_input(256, 2);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(in));
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_MlpForward)->Arg(64)->Arg(256);

void BM_MlpForwardBackward(benchmark::State& state) {
  const Mlp net = make_net(static_cast<int>(state.range(0)), 3);
  const ConditionInput in = batch_input(256, 4);
  std::vector<double> grad(net.param_count(), 0.0);
  for (auto _ : state) {
    Mlp::Tape tape;
    const Mat out = net.forward(in, tape);
    net.backward(tape, out, grad);
    benchmark::DoNotOptimize(grad.data());
  }
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_MlpForwardBackward)->Arg(64)->Arg(256);

void BM_HeunSampler(benchmark::State& state) {
  const auto sched = PathSchedule::ot();
  const Mlp net = make_net(128, 5);
  const FieldFn field = [&](const PointSet& x, double t) {
    ConditionInput in;
    in.x = x;
    in.t = Vec::Constant(x.cols(), t);
    return net.forward(in);
  };
  SamplerConfig cfg;
  cfg.steps = static_cast<int>(state.range(0));
  cfg.n = 2000;
  for (auto _ : state) benchmark::DoNotOptimize(sample_ode(field, sched, cfg, 2));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(cfg.n));
}
BENCHMARK(BM_HeunSampler)->Arg(15)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_KernelTransform(benchmark::State& state) {
  const int res = static_cast<int>(state.range(0));
  const auto axes = make_axes(Vec::Constant(2, -4.0), Vec::Constant(2, 4.0), res);
  Rng rng(6);
  const Vec log_w = rng.normal_vec(static_cast<Eigen::Index>(res) * res);
  const auto sched = PathSchedule::vp();
  const TimePoint t(0.3);
  for (auto _ : state)
    benchmark::DoNotOptimize(kernel_transform(axes, log_w, sched.mu(t), sched.sigma(t), axes));
}
BENCHMARK(BM_KernelTransform)->Arg(64)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_GuidedField(benchmark::State& state) {
  const GaussianMixture p0 = make_dataset("8gaussians");
  const EnergySpec spec{Energy::linear((Vec(2) << 1.0, 0.0).finished()), 1.0};
  const GuidedOracle oracle(p0, spec, PathSchedule::vp(),
                            GuidedOracle::default_axes(p0, spec, static_cast<int>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(oracle.guided_field(0.3));
}
BENCHMARK(BM_GuidedField)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
