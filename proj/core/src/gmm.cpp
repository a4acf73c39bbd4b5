#include "ewflow/gmm.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "ewflow/paths.hpp"
#include "json.hpp"

namespace ewflow {

namespace {

double log_normal_diag(const Vec& x, const Vec& mean, const Vec& var) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double d = x[i] - mean[i];
    acc += -0.5 * d * d / var[i] - 0.5 * std::log(2.0 * std::numbers::pi * var[i]);
  }
  return acc;
}

}  // namespace

GaussianMixture::GaussianMixture(std::vector<GaussianComponent> components)
    : components_(std::move(components)) {
  if (components_.empty()) throw std::invalid_argument("GaussianMixture: no components");
  dim_ = static_cast<int>(components_.front().mean.size());
  validate();
}

GaussianMixture GaussianMixture::standard_normal(int dim) {
  return GaussianMixture({{1.0, Vec::Zero(dim), Vec::Ones(dim)}});
}

void GaussianMixture::validate() const {
  if (dim_ <= 0) throw std::invalid_argument("GaussianMixture: dim must be positive");
  double total = 0.0;
  for (const auto& c : components_) {
    if (c.mean.size() != dim_ || c.var.size() != dim_)
      throw std::invalid_argument("GaussianMixture: component dimension mismatch");
    if (!(c.weight >= 0.0)) throw std::invalid_argument("GaussianMixture: negative weight");
    if ((c.var.array() <= 0.0).any())
      throw std::invalid_argument("GaussianMixture: variances must be strictly positive");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw std::invalid_argument("GaussianMixture: weights must sum to 1");
}

double GaussianMixture::log_density(const Vec& x) const {
  if (x.size() != dim_) throw std::invalid_argument("gmm_density: dimension mismatch");
  double mx = -std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  terms.reserve(components_.size());
  for (const auto& c : components_) {
    const double v = c.weight > 0.0 ? std::log(c.weight) + log_normal_diag(x, c.mean, c.var)
                                    : -std::numeric_limits<double>::infinity();
    terms.push_back(v);
    mx = std::max(mx, v);
  }
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double v : terms) s += std::exp(v - mx);
  return mx + std::log(s);
}

double GaussianMixture::density(const Vec& x) const { return std::exp(log_density(x)); }

Vec GaussianMixture::responsibilities(const Vec& x) const {
  if (x.size() != dim_) throw std::invalid_argument("gmm: dimension mismatch");
  Vec r(components_.size());
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    r[k] = c.weight > 0.0 ? std::log(c.weight) + log_normal_diag(x, c.mean, c.var)
                          : -std::numeric_limits<double>::infinity();
  }
  const double mx = r.maxCoeff();
  r = (r.array() - mx).exp();
  return r / r.sum();
}

Vec GaussianMixture::score(const Vec& x) const {
  const Vec r = responsibilities(x);
  Vec s = Vec::Zero(dim_);
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    s.array() += r[k] * (-(x - c.mean).array() / c.var.array());
  }
  return s;
}

PointSet GaussianMixture::sample(Rng& rng, std::size_t n) const {
  std::vector<int> labels;
  return sample(rng, n, labels);
}

PointSet GaussianMixture::sample(Rng& rng, std::size_t n, std::vector<int>& labels) const {
  PointSet out(dim_, static_cast<Eigen::Index>(n));
  labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t k = 0;
    for (; k + 1 < components_.size(); ++k) {
      acc += components_[k].weight;
      if (u < acc) break;
    }
    // Skip zero-weight tails reached through rounding.
    while (components_[k].weight == 0.0 && k > 0) --k;
    labels[i] = static_cast<int>(k);
    const auto& c = components_[k];
    for (int d = 0; d < dim_; ++d)
      out(d, static_cast<Eigen::Index>(i)) = c.mean[d] + std::sqrt(c.var[d]) * rng.normal();
  }
  return out;
}

GaussianMixture GaussianMixture::marginal(const PathSchedule& sched, double t) const {
  const double m = sched.mu(t);
  const double s = sched.sigma(t);
  std::vector<GaussianComponent> comps;
  comps.reserve(components_.size());
  for (const auto& c : components_) {
    comps.push_back({c.weight, m * c.mean, (m * m) * c.var.array() + s * s});
  }
  GaussianMixture out;
  out.dim_ = dim_;
  out.components_ = std::move(comps);
  return out;
}

Vec GaussianMixture::posterior_mean(const PathSchedule& sched, double t, const Vec& x) const {
  const double m = sched.mu(t);
  const double s2 = sched.sigma(t) * sched.sigma(t);
  const GaussianMixture pt = marginal(sched, t);
  const Vec r = pt.responsibilities(x);
  Vec out = Vec::Zero(dim_);
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    // x0 | x, k ~ N(., v s2 / (m^2 v + s2)) with mean c.mean + v m (x - m c.mean) / (m^2 v + s2)
    const Eigen::ArrayXd denom = (m * m) * c.var.array() + s2;
    const Eigen::ArrayXd mk = c.mean.array() + c.var.array() * m * (x - m * c.mean).array() / denom;
    out.array() += r[k] * mk;
  }
  return out;
}

Vec GaussianMixture::mean() const {
  Vec m = Vec::Zero(dim_);
  for (const auto& c : components_) m += c.weight * c.mean;
  return m;
}

Vec GaussianMixture::variance() const {
  const Vec m = mean();
  Vec v = Vec::Zero(dim_);
  for (const auto& c : components_)
    v.array() += c.weight * (c.var.array() + (c.mean - m).array().square());
  return v;
}

std::string GaussianMixture::to_json() const {
  nlohmann::json j;
  j["dim"] = dim_;
  j["components"] = nlohmann::json::array();
  for (const auto& c : components_) {
    j["components"].push_back({{"weight", c.weight},
                               {"mean", std::vector<double>(c.mean.begin(), c.mean.end())},
                               {"var", std::vector<double>(c.var.begin(), c.var.end())}});
  }
  return j.dump(2);
}

GaussianMixture GaussianMixture::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  const int dim = j.at("dim").get<int>();
  std::vector<GaussianComponent> comps;
  for (const auto& cj : j.at("components")) {
    const auto mean = cj.at("mean").get<std::vector<double>>();
    const auto var = cj.at("var").get<std::vector<double>>();
    comps.push_back({cj.at("weight").get<double>(), Eigen::Map<const Vec>(mean.data(), mean.size()),
                     Eigen::Map<const Vec>(var.data(), var.size())});
  }
  GaussianMixture g(std::move(comps));
  if (g.dim() != dim) throw std::invalid_argument("GaussianMixture JSON: dim field disagrees with components");
  return g;
}

}  // namespace ewflow
