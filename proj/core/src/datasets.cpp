#include "ewflow/datasets.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ewflow {

namespace {

GaussianMixture equal_weights(const std::vector<Vec>& means, double sd) {
  std::vector<GaussianComponent> comps;
  const double w = 1.0 / static_cast<double>(means.size());
  for (const auto& m : means) comps.push_back({w, m, Vec::Constant(m.size(), sd * sd)});
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < comps.size(); ++i) acc += comps[i].weight;
  comps.back().weight = 1.0 - acc;
  return GaussianMixture(std::move(comps));
}

Vec v2(double x, double y) {
  Vec v(2);
  v << x, y;
  return v;
}

}  // namespace

std::vector<std::string> dataset_names() {
  return {"gaussian", "bimodal", "8gaussians", "25gaussians", "ring", "2spirals", "moons", "checkerboard"};
}

GaussianMixture make_dataset(const std::string& name) {
  constexpr double pi = std::numbers::pi;
  if (name == "gaussian") return GaussianMixture::standard_normal(1);
  if (name == "bimodal") return equal_weights({Vec::Constant(1, -2.0), Vec::Constant(1, 2.0)}, 0.5);
  if (name == "8gaussians") {
    std::vector<Vec> means;
    const double r = 2.0 * std::sqrt(2.0);
    for (int k = 0; k < 8; ++k) means.push_back(v2(r * std::cos(k * pi / 4), r * std::sin(k * pi / 4)));
    return equal_weights(means, 0.5 / std::sqrt(2.0));
  }
  if (name == "25gaussians") {
    std::vector<Vec> means;
    for (int i = -2; i <= 2; ++i)
      for (int j = -2; j <= 2; ++j) means.push_back(v2(1.5 * i, 1.5 * j));
    return equal_weights(means, 0.2);
  }
  if (name == "ring") {
    std::vector<Vec> means;
    for (int k = 0; k < 24; ++k) means.push_back(v2(3.0 * std::cos(2 * pi * k / 24), 3.0 * std::sin(2 * pi * k / 24)));
    return equal_weights(means, 0.25);
  }
  if (name == "2spirals") {
    std::vector<Vec> means;
    for (int k = 0; k < 24; ++k) {
      const double s = 0.5 + 3.5 * k / 23.0;
      const double a = s * 1.35;
      means.push_back(v2(s * std::cos(a), s * std::sin(a)));
      means.push_back(v2(-s * std::cos(a), -s * std::sin(a)));
    }
    return equal_weights(means, 0.2);
  }
  if (name == "moons") {
    std::vector<Vec> means;
    for (int k = 0; k < 16; ++k) {
      const double a = pi * k / 15.0;
      means.push_back(v2(2.0 * std::cos(a) - 1.0, 2.0 * std::sin(a) - 0.5));
      means.push_back(v2(1.0 - 2.0 * std::cos(a), 0.5 - 2.0 * std::sin(a)));
    }
    return equal_weights(means, 0.2);
  }
  if (name == "checkerboard") {
    // Each filled square of a 4x4 board is approximated by a 3x3 block of
    // components.
    std::vector<Vec> means;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        if ((i + j) % 2 != 0) continue;
        const double x0 = -4.0 + 2.0 * i;
        const double y0 = -4.0 + 2.0 * j;
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) means.push_back(v2(x0 + (a + 0.5) * 2.0 / 3.0, y0 + (b + 0.5) * 2.0 / 3.0));
      }
    return equal_weights(means, 0.3);
  }
  std::string list;
  for (const auto& n : dataset_names()) list += (list.empty() ? "" : ", ") + n;
  throw std::invalid_argument("unknown dataset '" + name + "' (known: " + list + ")");
}

}  // namespace ewflow
