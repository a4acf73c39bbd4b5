#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "ewflow/datasets.hpp"
#include "ewflow/gmm.hpp"
#include "ewflow/grid.hpp"
#include "ewflow/metrics.hpp"
#include "ewflow/paths.hpp"
#include "ewflow/rng.hpp"

using namespace ewflow;

namespace {

GaussianMixture one_d(std::vector<std::pair<double, double>> mean_var, std::vector<double> w) {
  std::vector<GaussianComponent> c;
  for (std::size_t i = 0; i < w.size(); ++i)
    c.push_back({w[i], Vec::Constant(1, mean_var[i].first), Vec::Constant(1, mean_var[i].second)});
  return GaussianMixture(std::move(c));
}

DensityGrid uniform_grid(int res) {
  return DensityGrid::from_function(make_axes(Vec::Zero(2), Vec::Ones(2), res), [](const Vec&) { return 1.0; });
}

}  // namespace

TEST_SUITE("numerics") {
  TEST_CASE("rng streams repeat for equal seeds and split without advancing") {
    Rng a(42), b(42), c(43);
    bool differs = false;
    for (int i = 0; i < 1000; ++i) {
      const auto x = a.next_u64();
      CHECK(x == b.next_u64());
      differs = differs || x != c.next_u64();
    }
    CHECK(differs);

    Rng p(7);
    const Rng child = p.split(3);
    Rng fresh(7);
    CHECK(p.next_u64() == fresh.next_u64());
    Rng c1 = child, c2 = Rng(7).split(3), c3 = Rng(7).split(4);
    const auto v = c1.next_u64();
    CHECK(v == c2.next_u64());
    CHECK(v != c3.next_u64());
  }

  TEST_CASE("rng gaussian mean and variance over 1e6 draws") {
    Rng r(1);
    double s = 0, s2 = 0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) {
      const double z = r.normal();
      s += z;
      s2 += z * z;
    }
    const double mean = s / n;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(s2 / n - mean * mean - 1.0) < 0.02);
  }

  TEST_CASE("rng uniform and below stay in range") {
    Rng r(5);
    for (int i = 0; i < 10000; ++i) {
      const double u = r.uniform();
      CHECK((u >= 0.0 && u < 1.0));
      CHECK(r.below(7) < 7u);
    }
  }

  TEST_CASE("gmm density at known points") {
    CHECK(GaussianMixture::standard_normal(1).density(Vec::Zero(1)) == doctest::Approx(0.39894228).epsilon(1e-7));
    const auto two = one_d({{-1, 1}, {1, 1}}, {0.5, 0.5});
    CHECK(two.density(Vec::Zero(1)) == doctest::Approx(std::exp(-0.5) / std::sqrt(2 * std::numbers::pi)).epsilon(1e-12));
    CHECK(two.density(Vec::Zero(1)) == doctest::Approx(0.24197).epsilon(1e-4));
    CHECK_THROWS_AS(two.density(Vec::Zero(2)), std::invalid_argument);
  }

  TEST_CASE("8-gaussians mode densities are equal by symmetry") {
    const GaussianMixture g = make_dataset("8gaussians");
    const double d0 = g.density(g.components()[0].mean);
    for (const auto& c : g.components()) CHECK(std::abs(g.density(c.mean) - d0) < 1e-12);
  }

  TEST_CASE("gmm construction validates weights and variances") {
    CHECK_THROWS(one_d({{0, 1}, {1, 1}}, {0.5, 0.6}));
    CHECK_THROWS(one_d({{0, 0}}, {1.0}));
    CHECK_THROWS(one_d({{0, -1}}, {1.0}));
    double sum = 0;
    const GaussianMixture grid25 = make_dataset("25gaussians");
    for (const auto& c : grid25.components()) sum += c.weight;
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }

  TEST_CASE("every catalog density integrates to one on a wide grid") {
    for (const auto& name : dataset_names()) {
      CAPTURE(name);
      const GaussianMixture g = make_dataset(name);
      Vec lo = Vec::Constant(g.dim(), 1e9), hi = Vec::Constant(g.dim(), -1e9);
      double sd = 0;
      for (const auto& c : g.components()) {
        lo = lo.cwiseMin(c.mean);
        hi = hi.cwiseMax(c.mean);
        sd = std::max(sd, std::sqrt(c.var.maxCoeff()));
      }
      const int res = g.dim() == 1 ? 4000 : 400;
      const DensityGrid grid = DensityGrid::from_function(
          make_axes(lo.array() - 8 * sd, hi.array() + 8 * sd, res), [&](const Vec& x) { return g.density(x); });
      CHECK(std::abs(grid.total_mass() - 1.0) < 1e-3);
      CHECK(*std::min_element(grid.values().begin(), grid.values().end()) >= 0.0);
    }
  }

  TEST_CASE("gmm score matches finite differences of log density") {
    const GaussianMixture g = make_dataset("8gaussians");
    Rng r(3);
    for (int i = 0; i < 20; ++i) {
      const Vec x = 2.0 * r.normal_vec(2);
      const Vec s = g.score(x);
      for (int d = 0; d < 2; ++d) {
        Vec e = Vec::Zero(2);
        e[d] = 1e-5;
        const double fd = (g.log_density(x + e) - g.log_density(x - e)) / 2e-5;
        CHECK(std::abs(fd - s[d]) < 1e-5 * std::max(1.0, std::abs(fd)));
      }
    }
  }

  TEST_CASE("gmm sampling") {
    Rng r(4);
    SUBCASE("single component sample mean") {
      const auto g = one_d({{3.0, 2.0}}, {1.0});
      const Moments m = sample_moments(g.sample(r, 100000));
      CHECK(std::abs(m.mean[0] - 3.0) < 0.02);
      CHECK(std::abs(m.var[0] - 2.0) < 0.05);
    }
    SUBCASE("zero-weight component is never drawn") {
      const auto g = one_d({{-5.0, 1.0}, {5.0, 1.0}}, {1.0, 0.0});
      std::vector<int> labels;
      g.sample(r, 100, labels);
      CHECK(std::all_of(labels.begin(), labels.end(), [](int l) { return l == 0; }));
    }
    SUBCASE("8-gaussians mode counts within 3 sigma of n/8") {
      const GaussianMixture g = make_dataset("8gaussians");
      const int n = 100000;
      std::vector<int> labels;
      g.sample(r, n, labels);
      std::vector<int> counts(8, 0);
      for (int l : labels) ++counts[static_cast<std::size_t>(l)];
      const double sigma = std::sqrt(n * (1.0 / 8) * (7.0 / 8));
      for (int c : counts) CHECK(std::abs(c - n / 8.0) < 3 * sigma);
    }
  }

  TEST_CASE("gmm marginal and posterior mean under a Gaussian path") {
    const auto g = one_d({{1.0, 0.25}, {-2.0, 0.5}}, {0.3, 0.7});
    const PathSchedule s = PathSchedule::vp();
    const double t = 0.4, mu = s.mu(t), sg = s.sigma(t);
    const GaussianMixture m = g.marginal(s, t);
    for (std::size_t k = 0; k < 2; ++k) {
      CHECK(m.components()[k].mean[0] == doctest::Approx(mu * g.components()[k].mean[0]).epsilon(1e-12));
      CHECK(m.components()[k].var[0] == doctest::Approx(mu * mu * g.components()[k].var[0] + sg * sg).epsilon(1e-12));
    }
    // E[x0 | x] by brute-force quadrature over x0
    const double x = 0.3;
    double num = 0, den = 0;
    for (int i = 0; i < 20000; ++i) {
      const double x0 = -8.0 + 16.0 * (i + 0.5) / 20000;
      const double w = g.density(Vec::Constant(1, x0)) * std::exp(-0.5 * std::pow((x - mu * x0) / sg, 2));
      num += w * x0;
      den += w;
    }
    CHECK(g.posterior_mean(s, t, Vec::Constant(1, x))[0] == doctest::Approx(num / den).epsilon(1e-8));
  }

  TEST_CASE("gmm json round trip") {
    const GaussianMixture g = make_dataset("moons");
    const GaussianMixture h = GaussianMixture::from_json(g.to_json());
    REQUIRE(h.components().size() == g.components().size());
    Rng r(9);
    for (int i = 0; i < 10; ++i) {
      const Vec x = r.normal_vec(2);
      CHECK(h.density(x) == doctest::Approx(g.density(x)).epsilon(1e-12));
    }
  }

  TEST_CASE("grid sampling") {
    Rng r(10);
    SUBCASE("uniform grid gives a flat histogram") {
      const DensityGrid g = uniform_grid(8);
      const int n = 64000;
      const PointSet x = g.sample(r, n);
      std::vector<int> counts(g.size(), 0);
      for (Eigen::Index i = 0; i < x.cols(); ++i) ++counts[static_cast<std::size_t>(g.locate(x.col(i)))];
      const double p = 1.0 / 64, sigma = std::sqrt(n * p * (1 - p));
      for (int c : counts) CHECK(std::abs(c - n * p) < 3 * sigma);
    }
    SUBCASE("point mass cell") {
      std::vector<double> v(16, 0.0);
      v[5] = 16.0;
      const DensityGrid g(make_axes(Vec::Zero(2), Vec::Ones(2), 4), v);
      const PointSet x = g.sample(r, 500);
      for (Eigen::Index i = 0; i < x.cols(); ++i) CHECK(g.locate(x.col(i)) == 5);
    }
    SUBCASE("standard normal grid recovers unit variance") {
      const auto n01 = GaussianMixture::standard_normal(1);
      DensityGrid g = DensityGrid::from_function(make_axes(Vec::Constant(1, -8), Vec::Constant(1, 8), 512),
                                                 [&](const Vec& x) { return n01.density(x); });
      g.normalize();
      const Moments m = sample_moments(g.sample(r, 100000));
      CHECK(std::abs(m.var[0] - 1.0) < 0.03);
    }
    SUBCASE("unnormalized grid is rejected") {
      const DensityGrid g = DensityGrid::from_function(make_axes(Vec::Zero(1), Vec::Ones(1), 4), [](const Vec&) { return 3.0; });
      CHECK_THROWS_AS(g.sample(r, 10), std::domain_error);
    }
  }

  TEST_CASE("grid normalization, coarsening and serialization") {
    const auto g8 = make_dataset("8gaussians");
    DensityGrid g = DensityGrid::from_function(make_axes(Vec::Constant(2, -5), Vec::Constant(2, 5), 64),
                                               [&](const Vec& x) { return 2.0 * g8.density(x); });
    g.normalize();
    CHECK(g.is_normalized(1e-12));
    CHECK(g.coarsen(4).total_mass() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS(g.coarsen(5));
    std::stringstream ss;
    g.write(ss);
    const DensityGrid h = DensityGrid::read(ss);
    REQUIRE(h.size() == g.size());
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(h.value(i) == doctest::Approx(g.value(i)).epsilon(1e-12));
    CHECK_THROWS(DensityGrid(make_axes(Vec::Zero(1), Vec::Ones(1), 2), {1.0, -1.0}));
    CHECK_THROWS(DensityGrid(make_axes(Vec::Zero(1), Vec::Ones(1), 2), {1.0, std::nan("")}));
  }

  TEST_CASE("sliced wasserstein") {
    Rng r(11);
    SUBCASE("identical sets") {
      const PointSet a = r.normal_mat(2, 500);
      Rng p(1);
      CHECK(sliced_wasserstein(a, a, 32, p) == doctest::Approx(0.0));
    }
    SUBCASE("1-D translation") {
      const PointSet a = r.normal_mat(1, 20000);
      const PointSet b = (r.normal_mat(1, 20000).array() + 0.7).matrix();
      Rng p(2);
      CHECK(std::abs(sliced_wasserstein(a, b, 4, p) - 0.7) < 0.03);
    }
    SUBCASE("2-D unit shift averages |cos|") {
      const PointSet a = r.normal_mat(2, 10000);
      PointSet b = r.normal_mat(2, 10000);
      b.row(0).array() += 1.0;
      Rng p(3);
      CHECK(std::abs(sliced_wasserstein(a, b, 128, p) - 2.0 / std::numbers::pi) < 0.05);
    }
    SUBCASE("symmetric in its arguments") {
      const PointSet a = r.normal_mat(2, 800);
      const PointSet b = (r.normal_mat(2, 800).array() * 2.0).matrix();
      Rng p1(4), p2(4);
      CHECK(sliced_wasserstein(a, b, 64, p1) == doctest::Approx(sliced_wasserstein(b, a, 64, p2)).epsilon(1e-12));
    }
    SUBCASE("errors") {
      Rng p(5);
      CHECK_THROWS(sliced_wasserstein(PointSet(2, 0), r.normal_mat(2, 3), 8, p));
      CHECK_THROWS(sliced_wasserstein(r.normal_mat(1, 3), r.normal_mat(2, 3), 8, p));
    }
    CHECK(wasserstein2_1d({0, 1, 2}, {1, 2, 3}) == doctest::Approx(1.0));
  }

  TEST_CASE("grid tv distance") {
    Rng r(12);
    SUBCASE("self distance baseline") {
      const auto g8 = make_dataset("8gaussians");
      DensityGrid g = DensityGrid::from_function(make_axes(Vec::Constant(2, -5), Vec::Constant(2, 5), 64),
                                                 [&](const Vec& x) { return g8.density(x); });
      g.normalize();
      const TvResult tv = grid_tv_distance(g.sample(r, 100000), g);
      CHECK(tv.tv < 0.05);
      CHECK(tv.clipped_fraction == 0.0);
    }
    SUBCASE("one occupied cell against a uniform grid") {
      const DensityGrid g = uniform_grid(64);
      const PointSet x = PointSet::Constant(2, 1000, 0.001);
      CHECK(grid_tv_distance(x, g).tv == doctest::Approx(1.0 - 1.0 / 4096).epsilon(1e-12));
    }
    SUBCASE("disjoint supports") {
      std::vector<double> v(16, 0.0);
      v[0] = 16.0;
      const DensityGrid g(make_axes(Vec::Zero(2), Vec::Ones(2), 4), v);
      const PointSet x = PointSet::Constant(2, 100, 0.9);
      CHECK(grid_tv_distance(x, g).tv == doctest::Approx(1.0));
    }
    SUBCASE("outliers are clipped and reported") {
      const DensityGrid g = uniform_grid(4);
      PointSet x = PointSet::Constant(2, 10, 0.5);
      x.col(0) << 5.0, 5.0;
      CHECK(grid_tv_distance(x, g).clipped_fraction == doctest::Approx(0.1));
    }
  }

  TEST_CASE("density is nonnegative at random points") {
    Rng r(13);
    for (const auto& name : dataset_names()) {
      const GaussianMixture g = make_dataset(name);
      for (int i = 0; i < 200; ++i) CHECK(g.density(10.0 * r.normal_vec(g.dim())) >= 0.0);
    }
    CHECK_THROWS(make_dataset("nope"));
  }
}
