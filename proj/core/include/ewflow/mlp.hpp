#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ewflow/rng.hpp"
#include "ewflow/types.hpp"

namespace ewflow {

struct MlpSpec {
  int x_dim = 2;
  int context_dim = 0;
  int time_embed_dim = 64;  // even; 0 drops the time input entirely
  int beta_embed_dim = 0;   // even; 0 means the model does not take beta
  std::vector<int> hidden = {256, 256, 256};
  int out_dim = 2;
  double max_frequency = 1e4;
  double beta_max_frequency = 10.0;  // ladder top for the beta embedding

  bool accepts_beta() const { return beta_embed_dim > 0; }
  int input_dim() const { return x_dim + time_embed_dim + context_dim + beta_embed_dim; }
  std::string to_json() const;
  static MlpSpec from_json(const std::string& text);
  bool operator==(const MlpSpec&) const = default;
};

// Batched network input; every member is column-per-sample.
struct ConditionInput {
  PointSet x;
  Vec t;
  Mat context;    // context_dim x B, empty when context_dim = 0
  Vec beta_norm;  // beta / beta_max, present iff the model accepts beta
};

// sin/cos features at frequencies forming a geometric ladder 1 .. max_frequency.
Mat sinusoidal_embedding(const Vec& s, int dim, double max_frequency);

// Fully connected network with SiLU hidden activations and a linear output.
// Parameters live in one flat vector: for each layer, W (column-major,
// out x in) followed by b.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(MlpSpec spec);

  static std::size_t param_count(const MlpSpec& spec);
  std::size_t param_count() const { return params_.size(); }
  const MlpSpec& spec() const { return spec_; }

  // Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  void init(Rng& rng);

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  // Activations recorded by forward() for the reverse pass.
  struct Tape {
    std::vector<Mat> inputs;  // input to each layer
    std::vector<Mat> pre;     // pre-activation of each hidden layer
  };

  Mat assemble_input(const ConditionInput& in) const;
  Mat forward(const ConditionInput& in) const;
  Mat forward(const ConditionInput& in, Tape& tape) const;
  Mat forward_raw(const Mat& input, Tape* tape) const;

  // Adds d(sum_b upstream_b . output_b)/d(params) into grad.
  void backward(const Tape& tape, const Mat& upstream, std::vector<double>& grad) const;

 private:
  struct Layer {
    int in;
    int out;
    std::size_t offset;  // of W; b follows at offset + in * out
  };

  MlpSpec spec_;
  std::vector<Layer> layers_;
  std::vector<double> params_;
};

}  // namespace ewflow
