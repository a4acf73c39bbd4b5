#include "ewflow/energy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace ewflow {

std::string to_string(EnergyKind kind) {
  switch (kind) {
    case EnergyKind::Linear: return "linear";
    case EnergyKind::Quadratic: return "quadratic";
    case EnergyKind::Tabulated: return "tabulated";
    case EnergyKind::Classifier: return "classifier";
  }
  return "unknown";
}

Energy Energy::linear(Vec a, double offset) {
  Energy e;
  e.kind_ = EnergyKind::Linear;
  e.a_ = std::move(a);
  e.offset_ = offset;
  return e;
}

Energy Energy::quadratic(Mat A, Vec center, double offset) {
  if (A.rows() != A.cols() || A.rows() != center.size())
    throw std::invalid_argument("quadratic energy: shape mismatch");
  Energy e;
  e.kind_ = EnergyKind::Quadratic;
  e.A_ = 0.5 * (A + A.transpose());
  e.center_ = std::move(center);
  e.offset_ = offset;
  return e;
}

Energy Energy::tabulated(DensityGrid values, double offset) {
  Energy e;
  e.kind_ = EnergyKind::Tabulated;
  e.table_ = std::make_shared<const DensityGrid>(std::move(values));
  e.offset_ = offset;
  return e;
}

Energy Energy::classifier(const Energy& base) {
  if (base.is_classifier()) return base;
  Energy e;
  e.kind_ = EnergyKind::Classifier;
  e.base_ = std::make_shared<const Energy>(base);
  return e;
}

int Energy::dim() const {
  switch (kind_) {
    case EnergyKind::Linear: return static_cast<int>(a_.size());
    case EnergyKind::Quadratic: return static_cast<int>(center_.size());
    case EnergyKind::Tabulated: return table_->dim();
    case EnergyKind::Classifier: return base_->dim();
  }
  return 0;
}

double Energy::operator()(const Vec& x) const {
  switch (kind_) {
    case EnergyKind::Linear: return a_.dot(x) + offset_;
    case EnergyKind::Quadratic: {
      const Vec d = x - center_;
      return 0.5 * d.dot(A_ * d) + offset_;
    }
    case EnergyKind::Tabulated: {
      const auto& axes = table_->axes();
      int idx[2] = {0, 0};
      for (int d = 0; d < table_->dim(); ++d) {
        const auto& ax = axes[d];
        const int i = static_cast<int>(std::floor((x[d] - ax.lo) / ax.step()));
        idx[d] = std::clamp(i, 0, ax.n - 1);
      }
      return table_->value(table_->flat_index(idx[0], idx[1])) + offset_;
    }
    case EnergyKind::Classifier: return -std::log(class_probability(x));
  }
  return 0.0;
}

double Energy::class_probability(const Vec& x) const {
  if (!is_classifier()) throw std::logic_error("class_probability: energy is not classifier-derived");
  const double p = std::exp(-(*base_)(x));
  return std::clamp(p, kMinClassProbability, 1.0);
}

Energy Energy::shifted(double c) const {
  Energy e = *this;
  if (e.kind_ == EnergyKind::Classifier) {
    e.base_ = std::make_shared<const Energy>(base_->shifted(c));
  } else {
    e.offset_ += c;
  }
  return e;
}

Energy Energy::shift_to_min(const std::vector<GridAxis>& axes) const {
  const DensityGrid probe = DensityGrid::zeros(axes);
  const Energy& target = is_classifier() ? *base_ : *this;
  double mn = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < probe.size(); ++k) mn = std::min(mn, target(probe.center(k)));
  return shifted(-mn);
}

std::string Energy::describe() const {
  std::ostringstream os;
  os << to_string(kind_);
  if (kind_ == EnergyKind::Classifier) os << "(" << base_->describe() << ")";
  return os.str();
}

namespace {

// log of int N(x; m, diag v) exp(-beta/2 (x-c)^T A (x-c)) dx.
double log_gauss_quadratic(const Vec& m, const Vec& v, const Mat& A, const Vec& c, double beta) {
  const auto d = m.size();
  const Mat vinv = v.cwiseInverse().asDiagonal();
  const Mat P = vinv + beta * A;
  Eigen::LLT<Mat> llt(P);
  if (llt.info() != Eigen::Success)
    throw std::domain_error("normalization_constant: divergent integral (precision not positive definite)");
  const Vec b = vinv * m + beta * (A * c);
  double logdetP = 0.0;
  const Mat L = llt.matrixL();
  for (Eigen::Index i = 0; i < d; ++i) logdetP += 2.0 * std::log(L(i, i));
  const double logdetV = v.array().log().sum();
  const double quad = m.dot(vinv * m) + beta * c.dot(A * c) - b.dot(llt.solve(b));
  return -0.5 * logdetV - 0.5 * logdetP - 0.5 * quad;
}

}  // namespace

std::optional<double> normalization_constant_closed_form(const GaussianMixture& p0, const Energy& energy,
                                                         double beta) {
  if (energy.dim() != p0.dim()) throw std::invalid_argument("normalization_constant: dimension mismatch");
  switch (energy.kind()) {
    case EnergyKind::Linear: {
      const Vec& a = energy.linear_coeffs();
      double z = 0.0;
      for (const auto& c : p0.components())
        z += c.weight * std::exp(-beta * a.dot(c.mean) + 0.5 * beta * beta * (c.var.array() * a.array().square()).sum());
      return z * std::exp(-beta * energy.offset());
    }
    case EnergyKind::Quadratic: {
      double z = 0.0;
      for (const auto& c : p0.components())
        z += c.weight * std::exp(log_gauss_quadratic(c.mean, c.var, energy.quadratic_matrix(), energy.center(), beta));
      return z * std::exp(-beta * energy.offset());
    }
    default: return std::nullopt;
  }
}

std::optional<GaussianMixture> tilted_mixture(const GaussianMixture& p0, const Energy& energy, double beta) {
  std::vector<GaussianComponent> comps;
  std::vector<double> logw;
  if (energy.kind() == EnergyKind::Linear) {
    const Vec& a = energy.linear_coeffs();
    for (const auto& c : p0.components()) {
      const Vec mean = c.mean.array() - beta * c.var.array() * a.array();
      logw.push_back(std::log(c.weight) - beta * a.dot(c.mean) + 0.5 * beta * beta * (c.var.array() * a.array().square()).sum());
      comps.push_back({0.0, mean, c.var});
    }
  } else if (energy.kind() == EnergyKind::Quadratic) {
    const Mat& A = energy.quadratic_matrix();
    if (!A.isDiagonal()) return std::nullopt;
    const Vec ad = A.diagonal();
    for (const auto& c : p0.components()) {
      const Eigen::ArrayXd prec = c.var.array().inverse() + beta * ad.array();
      if ((prec <= 0.0).any()) throw std::domain_error("tilted_mixture: divergent integral");
      const Eigen::ArrayXd var = prec.inverse();
      const Vec mean = (var * (c.mean.array() / c.var.array() + beta * ad.array() * energy.center().array())).matrix();
      logw.push_back(std::log(c.weight) + log_gauss_quadratic(c.mean, c.var, A, energy.center(), beta));
      comps.push_back({0.0, mean, var.matrix()});
    }
  } else {
    return std::nullopt;
  }
  const double mx = *std::max_element(logw.begin(), logw.end());
  double total = 0.0;
  for (double& w : logw) total += (w = std::exp(w - mx));
  // Renormalise so the weights sum to one exactly enough for validation.
  double acc = 0.0;
  for (std::size_t k = 0; k < comps.size(); ++k) {
    comps[k].weight = logw[k] / total;
    acc += comps[k].weight;
  }
  comps.back().weight += 1.0 - acc;
  return GaussianMixture(std::move(comps));
}

}  // namespace ewflow
