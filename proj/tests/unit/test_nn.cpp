#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>

#include "doctest.h"
#include "ewflow/checkpoint.hpp"
#include "ewflow/mlp.hpp"
#include "ewflow/optim.hpp"
#include "ewflow/rng.hpp"

using namespace ewflow;

namespace {

MlpSpec small_spec() {
  MlpSpec s;
  s.x_dim = 2;
  s.time_embed_dim = 0;
  s.hidden = {16, 16};
  s.out_dim = 2;
  return s;
}

ConditionInput batch(const MlpSpec& spec, int b, Rng& rng) {
  ConditionInput in;
  in.x = rng.normal_mat(spec.x_dim, b);
  in.t = Vec::NullaryExpr(b, [&](Eigen::Index) { return rng.uniform(0.0, 1.0); });
  if (spec.context_dim > 0) in.context = rng.normal_mat(spec.context_dim, b);
  if (spec.accepts_beta()) in.beta_norm = Vec::NullaryExpr(b, [&](Eigen::Index) { return rng.uniform(0.0, 1.0); });
  return in;
}

double objective(const Mlp& net, const ConditionInput& in, const Mat& up) {
  return (net.forward(in).array() * up.array()).sum();
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("ewflow_nn_" + name)).string();
}

}  // namespace

TEST_SUITE("nn") {
  TEST_CASE("parameter count follows the layer sizes") {
    MlpSpec s;
    s.x_dim = 2;
    s.context_dim = 3;
    s.time_embed_dim = 8;
    s.beta_embed_dim = 4;
    s.hidden = {10, 7};
    s.out_dim = 2;
    const std::size_t in = 2 + 8 + 3 + 4;
    const std::size_t expected = (in * 10 + 10) + (10 * 7 + 7) + (7 * 2 + 2);
    CHECK(Mlp::param_count(s) == expected);
    CHECK(Mlp(s).param_count() == expected);
    CHECK(s.input_dim() == 17);
  }

  TEST_CASE("spec serialization round trips") {
    MlpSpec s;
    s.context_dim = 1;
    s.beta_embed_dim = 8;
    s.hidden = {5, 6, 7};
    s.max_frequency = 123.0;
    CHECK(MlpSpec::from_json(s.to_json()) == s);
  }

  TEST_CASE("zero parameters give a zero output") {
    MlpSpec s;
    s.x_dim = 2;
    s.time_embed_dim = 16;
    s.hidden = {8, 8};
    Mlp net(s);
    std::fill(net.params().begin(), net.params().end(), 0.0);
    Rng rng(1);
    CHECK(net.forward(batch(s, 5, rng)).norm() == 0.0);
  }

  TEST_CASE("output is finite and depends on time") {
    MlpSpec s;
    s.x_dim = 2;
    s.time_embed_dim = 32;
    s.hidden = {32, 32};
    Mlp net(s);
    Rng rng(4);
    net.init(rng);
    ConditionInput in;
    in.x = rng.normal_mat(2, 4);
    in.t = Vec::Constant(4, 0.2);
    const Mat a = net.forward(in);
    in.t.setConstant(0.8);
    const Mat b = net.forward(in);
    CHECK(a.allFinite());
    CHECK((a - b).norm() > 0.0);
  }

  TEST_CASE("sinusoidal embedding layout") {
    const Vec s = (Vec(2) << 0.0, 0.5).finished();
    const Mat e = sinusoidal_embedding(s, 6, 100.0);
    CHECK(e.rows() == 6);
    CHECK(e.cols() == 2);
    CHECK(e.allFinite());
    CHECK(e.array().abs().maxCoeff() <= 1.0);
    int sin_zero = 0;
    for (int r = 0; r < 6; ++r) sin_zero += std::abs(e(r, 0)) < 1e-15;
    CHECK(sin_zero == 3);
  }

  TEST_CASE("a single linear layer computes Wx + b") {
    MlpSpec s;
    s.x_dim = 3;
    s.time_embed_dim = 0;
    s.hidden = {};
    s.out_dim = 2;
    Mlp net(s);
    Rng rng(9);
    net.init(rng);
    const Mat W = Eigen::Map<const Mat>(net.params().data(), 2, 3);
    const Vec b = Eigen::Map<const Vec>(net.params().data() + 6, 2);
    ConditionInput in;
    in.x = rng.normal_mat(3, 5);
    in.t = Vec::Zero(5);
    const Mat expected = (W * in.x).colwise() + b;
    CHECK((net.forward(in) - expected).norm() < 1e-14);

    SUBCASE("its weight gradient is the outer product of upstream and input") {
      const Mat up = rng.normal_mat(2, 5);
      Mlp::Tape tape;
      net.forward(in, tape);
      std::vector<double> grad(net.param_count(), 0.0);
      net.backward(tape, up, grad);
      const Mat gW = Eigen::Map<const Mat>(grad.data(), 2, 3);
      const Vec gb = Eigen::Map<const Vec>(grad.data() + 6, 2);
      CHECK((gW - up * in.x.transpose()).norm() < 1e-12);
      CHECK((gb - up.rowwise().sum()).norm() < 1e-12);
    }
  }

  TEST_CASE("mismatched inputs are rejected") {
    MlpSpec s = small_spec();
    s.context_dim = 2;
    Mlp net(s);
    Rng rng(2);
    ConditionInput in;
    in.x = rng.normal_mat(3, 4);
    in.t = Vec::Zero(4);
    in.context = rng.normal_mat(2, 4);
    CHECK_THROWS_AS(net.forward(in), std::invalid_argument);
    in.x = rng.normal_mat(2, 4);
    in.context = Mat();
    CHECK_THROWS_AS(net.forward(in), std::invalid_argument);
  }

  TEST_CASE("reverse pass matches central finite differences") {
    for (int variant = 0; variant < 2; ++variant) {
      MlpSpec s = small_spec();
      if (variant == 1) {
        s.time_embed_dim = 8;
        s.context_dim = 1;
        s.beta_embed_dim = 4;
        s.max_frequency = 10.0;
      }
      CAPTURE(variant);
      Mlp net(s);
      Rng rng(100 + variant);
      net.init(rng);
      const ConditionInput in = batch(s, 20, rng);
      const Mat up = rng.normal_mat(s.out_dim, 20);
      Mlp::Tape tape;
      net.forward(in, tape);
      std::vector<double> grad(net.param_count(), 0.0);
      net.backward(tape, up, grad);

      const double h = 1e-4;
      for (std::size_t i = 0; i < net.param_count(); ++i) {
        Mlp probe = net;
        probe.params()[i] += h;
        const double fp = objective(probe, in, up);
        probe.params()[i] -= 2 * h;
        const double fm = objective(probe, in, up);
        const double fd = (fp - fm) / (2 * h);
        CHECK(std::abs(grad[i] - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
      }
    }
  }

  TEST_CASE("zero upstream gives zero gradients and backward accumulates") {
    Mlp net(small_spec());
    Rng rng(3);
    net.init(rng);
    const ConditionInput in = batch(small_spec(), 6, rng);
    Mlp::Tape tape;
    net.forward(in, tape);
    std::vector<double> grad(net.param_count(), 0.0);
    net.backward(tape, Mat::Zero(2, 6), grad);
    for (double g : grad) CHECK(g == 0.0);

    const Mat up = rng.normal_mat(2, 6);
    std::vector<double> once(net.param_count(), 0.0), twice(net.param_count(), 0.0);
    net.backward(tape, up, once);
    net.backward(tape, up, twice);
    net.backward(tape, up, twice);
    for (std::size_t i = 0; i < once.size(); ++i) CHECK(twice[i] == doctest::Approx(2 * once[i]).epsilon(1e-12));
  }

  TEST_CASE("results do not depend on where the parameters live in memory") {
    Mlp net(small_spec());
    Rng rng(77);
    net.init(rng);
    const ConditionInput in = batch(small_spec(), 37, rng);
    const Mat up = rng.normal_mat(2, 37);
    Mlp::Tape tape;
    const Mat ref = net.forward(in, tape);
    std::vector<double> ref_grad(net.param_count(), 0.0);
    net.backward(tape, up, ref_grad);

    std::vector<std::unique_ptr<char[]>> padding;
    for (int k = 0; k < 16; ++k) {
      padding.emplace_back(new char[8 * k + 8]);
      const Mlp copy = net;
      Mlp::Tape t2;
      const Mat out = copy.forward(in, t2);
      std::vector<double> g(copy.param_count(), 0.0);
      copy.backward(t2, up, g);
      CHECK((out.array() == ref.array()).all());
      CHECK(g == ref_grad);
    }
  }

  TEST_CASE("adam") {
    SUBCASE("zero gradient leaves parameters unchanged") {
      std::vector<double> p{0.5, -1.0, 2.0};
      const auto before = p;
      AdamState st(3, 1e-3);
      for (int i = 0; i < 10; ++i) adam_step(st, p, {0.0, 0.0, 0.0});
      CHECK(p == before);
    }
    SUBCASE("first step from zero moments moves by lr") {
      std::vector<double> p{0.0};
      AdamState st(1, 1e-3);
      adam_step(st, p, {1.0});
      // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps).
      CHECK(p[0] == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-12));
      CHECK(st.step == 1);
    }
    SUBCASE("constant gradients settle at lr sign(g)") {
      std::vector<double> p{0.0, 0.0};
      AdamState st(2, 1e-2);
      std::vector<double> prev = p;
      for (int i = 0; i < 2000; ++i) {
        prev = p;
        adam_step(st, p, {3.0, -0.2});
      }
      CHECK((p[0] - prev[0]) == doctest::Approx(-1e-2).epsilon(1e-6));
      CHECK((p[1] - prev[1]) == doctest::Approx(1e-2).epsilon(1e-6));
    }
    SUBCASE("moment shapes follow the parameters") {
      AdamState st(4, 1e-3);
      CHECK(st.m.size() == 4);
      CHECK(st.v.size() == 4);
    }
  }

  TEST_CASE("soft update") {
    const std::vector<double> online{1.0, 1.0, -2.0};
    std::vector<double> target{0.0, 0.0, 0.0};
    soft_update(target, online, 0.0);
    CHECK(target == std::vector<double>{0.0, 0.0, 0.0});
    soft_update(target, online, 0.005);
    CHECK(target[0] == doctest::Approx(0.005));
    CHECK(target[2] == doctest::Approx(-0.01));
    soft_update(target, online, 1.0);
    CHECK(target == online);
  }

  TEST_CASE("training runs are bit-identical for equal seeds") {
    const auto run = [] {
      Mlp net(small_spec());
      Rng rng(5);
      net.init(rng);
      AdamState st(net.param_count(), 1e-3);
      for (int step = 0; step < 50; ++step) {
        const ConditionInput in = batch(small_spec(), 32, rng);
        Mlp::Tape tape;
        const Mat out = net.forward(in, tape);
        std::vector<double> grad(net.param_count(), 0.0);
        net.backward(tape, Mat(out - in.x), grad);
        adam_step(st, net.params(), grad);
      }
      return net.params();
    };
    CHECK(run() == run());
  }

  TEST_CASE("checkpoints") {
    MlpSpec s = small_spec();
    s.time_embed_dim = 8;
    Mlp net(s);
    Rng rng(13);
    net.init(rng);
    const std::string path = temp_path("ckpt.bin");
    save_checkpoint(path, net, R"({"role":"test"})");

    SUBCASE("round trip keeps float32 parameters and metadata") {
      const Checkpoint c = load_checkpoint(path, s);
      CHECK(c.model.spec() == s);
      REQUIRE(c.model.param_count() == net.param_count());
      for (std::size_t i = 0; i < net.param_count(); ++i)
        CHECK(c.model.params()[i] == static_cast<double>(static_cast<float>(net.params()[i])));
      CHECK(c.meta_json.find("test") != std::string::npos);
    }
    SUBCASE("architecture mismatch is rejected") {
      MlpSpec other = s;
      other.hidden = {16, 17};
      CHECK_THROWS_AS(load_checkpoint(path, other), std::runtime_error);
    }
    SUBCASE("truncated files are rejected") {
      const auto size = std::filesystem::file_size(path);
      std::filesystem::resize_file(path, size - 5);
      CHECK_THROWS(load_checkpoint(path));
    }
    SUBCASE("missing files are rejected") { CHECK_THROWS(load_checkpoint(temp_path("does_not_exist.bin"))); }
    std::filesystem::remove(path);
  }

  TEST_CASE("fnv1a64 reference values") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(hex64(0xabcULL) == "0000000000000abc");
  }
}
