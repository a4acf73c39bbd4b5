#include "ewflow/field.hpp"

#include <stdexcept>

namespace ewflow {

std::string to_string(ModelRole r) { return r == ModelRole::Velocity ? "velocity" : "score"; }
std::string to_string(ScoreParam p) { return p == ScoreParam::Direct ? "direct" : "noise"; }

ModelRole model_role_from_string(const std::string& s) {
  if (s == "velocity") return ModelRole::Velocity;
  if (s == "score") return ModelRole::Score;
  throw std::invalid_argument("unknown model role '" + s + "' (expected velocity or score)");
}

ScoreParam score_param_from_string(const std::string& s) {
  if (s == "direct") return ScoreParam::Direct;
  if (s == "noise") return ScoreParam::Noise;
  throw std::invalid_argument("unknown score parameterization '" + s + "' (expected direct or noise)");
}

double FieldModel::output_scale(double t) const {
  if (role == ModelRole::Score && param == ScoreParam::Noise) return -1.0 / sched.sigma(clamp_time(t));
  return 1.0;
}

ConditionInput FieldModel::make_input(const PointSet& x, double t) const {
  if (!net) throw std::logic_error("FieldModel: no network attached");
  const Eigen::Index B = x.cols();
  ConditionInput in;
  in.x = x;
  in.t = Vec::Constant(B, clamp_time(t));
  if (net->spec().context_dim > 0) {
    if (context.cols() == 1)
      in.context = context.replicate(1, B);
    else if (context.cols() == B)
      in.context = context;
    else
      throw std::invalid_argument("FieldModel: context must have one column or one per particle");
  }
  if (net->spec().accepts_beta()) {
    if (!beta_norm) throw std::invalid_argument("FieldModel: beta-conditioned network needs beta_norm");
    in.beta_norm = Vec::Constant(B, *beta_norm);
  }
  return in;
}

Mat FieldModel::raw(const PointSet& x, double t) const { return net->forward(make_input(x, t)); }

Mat FieldModel::output(const PointSet& x, double t) const { return output_scale(t) * raw(x, t); }

Mat FieldModel::velocity(const PointSet& x, double t) const {
  if (role == ModelRole::Velocity) return output(x, t);
  return velocity_from_score(sched, x, output(x, t), t);
}

Mat FieldModel::score(const PointSet& x, double t) const {
  if (role == ModelRole::Score) return output(x, t);
  return score_from_velocity(sched, x, output(x, t), t);
}

}  // namespace ewflow
