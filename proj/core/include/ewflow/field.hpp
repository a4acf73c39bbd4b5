#pragma once

#include <optional>
#include <string>

#include "ewflow/mlp.hpp"
#include "ewflow/paths.hpp"
#include "ewflow/types.hpp"

namespace ewflow {

enum class ModelRole { Velocity, Score };
// Score networks either output the score directly or a noise estimate n with
// score = -n / sigma_t.
enum class ScoreParam { Direct, Noise };

std::string to_string(ModelRole r);
std::string to_string(ScoreParam p);
ModelRole model_role_from_string(const std::string& s);
ScoreParam score_param_from_string(const std::string& s);

// A network viewed as a time-dependent vector field on the path.
struct FieldModel {
  const Mlp* net = nullptr;
  ModelRole role = ModelRole::Velocity;
  ScoreParam param = ScoreParam::Noise;
  PathSchedule sched;
  Mat context;                       // context_dim x 1 (broadcast) or x B
  std::optional<double> beta_norm;  // for beta-conditioned networks

  // Factor mapping raw network output to the role output at time t.
  double output_scale(double t) const;
  ConditionInput make_input(const PointSet& x, double t) const;
  Mat raw(const PointSet& x, double t) const;
  // The role output (velocity or score) and its conversion to the other.
  Mat output(const PointSet& x, double t) const;
  Mat velocity(const PointSet& x, double t) const;
  Mat score(const PointSet& x, double t) const;
};

}  // namespace ewflow
