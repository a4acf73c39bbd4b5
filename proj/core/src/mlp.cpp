#include "ewflow/mlp.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace ewflow {

std::string MlpSpec::to_json() const {
  nlohmann::json j;
  j["x_dim"] = x_dim;
  j["context_dim"] = context_dim;
  j["time_embed_dim"] = time_embed_dim;
  j["beta_embed_dim"] = beta_embed_dim;
  j["hidden"] = hidden;
  j["out_dim"] = out_dim;
  j["max_frequency"] = max_frequency;
  j["beta_max_frequency"] = beta_max_frequency;
  j["activation"] = "silu";
  return j.dump();
}

MlpSpec MlpSpec::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  MlpSpec s;
  s.x_dim = j.at("x_dim").get<int>();
  s.context_dim = j.at("context_dim").get<int>();
  s.time_embed_dim = j.at("time_embed_dim").get<int>();
  s.beta_embed_dim = j.at("beta_embed_dim").get<int>();
  s.hidden = j.at("hidden").get<std::vector<int>>();
  s.out_dim = j.at("out_dim").get<int>();
  s.max_frequency = j.at("max_frequency").get<double>();
  s.beta_max_frequency = j.value("beta_max_frequency", 10.0);
  return s;
}

Mat sinusoidal_embedding(const Vec& s, int dim, double max_frequency) {
  const int half = dim / 2;
  Mat out(dim, s.size());
  for (int k = 0; k < half; ++k) {
    const double w = half == 1 ? 1.0 : std::pow(max_frequency, static_cast<double>(k) / (half - 1));
    out.row(k) = (w * s.array()).sin().matrix().transpose();
    out.row(half + k) = (w * s.array()).cos().matrix().transpose();
  }
  return out;
}

namespace {
Eigen::ArrayXXd sigmoid(const Eigen::ArrayXXd& z) { return 1.0 / (1.0 + (-z).exp()); }
}  // namespace

Mlp::Mlp(MlpSpec spec) : spec_(std::move(spec)) {
  if (spec_.x_dim < 1 || spec_.out_dim < 1 || spec_.context_dim < 0)
    throw std::invalid_argument("MlpSpec: x_dim and out_dim must be positive");
  if (spec_.time_embed_dim < 0 || spec_.time_embed_dim % 2 != 0 || spec_.beta_embed_dim < 0 ||
      spec_.beta_embed_dim % 2 != 0)
    throw std::invalid_argument("MlpSpec: embedding sizes must be even and nonnegative");
  for (int h : spec_.hidden)
    if (h < 1) throw std::invalid_argument("MlpSpec: hidden widths must be positive");
  int in = spec_.input_dim();
  std::size_t offset = 0;
  auto add = [&](int out) {
    layers_.push_back({in, out, offset});
    offset += static_cast<std::size_t>(in + 1) * out;
    in = out;
  };
  for (int h : spec_.hidden) add(h);
  add(spec_.out_dim);
  params_.assign(offset, 0.0);
}

std::size_t Mlp::param_count(const MlpSpec& spec) {
  std::size_t n = 0;
  int in = spec.input_dim();
  for (int h : spec.hidden) {
    n += static_cast<std::size_t>(in + 1) * h;
    in = h;
  }
  return n + static_cast<std::size_t>(in + 1) * spec.out_dim;
}

void Mlp::init(Rng& rng) {
  for (const auto& l : layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
    const std::size_t n = static_cast<std::size_t>(l.in + 1) * l.out;
    for (std::size_t i = 0; i < n; ++i) params_[l.offset + i] = rng.uniform(-bound, bound);
  }
}

Mat Mlp::assemble_input(const ConditionInput& in) const {
  const Eigen::Index B = in.x.cols();
  if (in.x.rows() != spec_.x_dim) throw std::invalid_argument("Mlp: x dimension mismatch");
  if (spec_.time_embed_dim > 0 && in.t.size() != B) throw std::invalid_argument("Mlp: time count mismatch");
  if (spec_.context_dim > 0 && (in.context.rows() != spec_.context_dim || in.context.cols() != B))
    throw std::invalid_argument("Mlp: context shape mismatch");
  if (spec_.context_dim == 0 && in.context.size() != 0) throw std::invalid_argument("Mlp: model takes no context");
  if (spec_.accepts_beta() != (in.beta_norm.size() > 0))
    throw std::invalid_argument("Mlp: beta input must be present exactly when the model accepts beta");
  if (spec_.accepts_beta() && in.beta_norm.size() != B) throw std::invalid_argument("Mlp: beta count mismatch");

  Mat input(spec_.input_dim(), B);
  int row = 0;
  input.topRows(spec_.x_dim) = in.x;
  row += spec_.x_dim;
  if (spec_.time_embed_dim > 0) {
    input.middleRows(row, spec_.time_embed_dim) = sinusoidal_embedding(in.t, spec_.time_embed_dim, spec_.max_frequency);
    row += spec_.time_embed_dim;
  }
  if (spec_.context_dim > 0) {
    input.middleRows(row, spec_.context_dim) = in.context;
    row += spec_.context_dim;
  }
  if (spec_.accepts_beta())
    input.middleRows(row, spec_.beta_embed_dim) =
        sinusoidal_embedding(in.beta_norm, spec_.beta_embed_dim, spec_.beta_max_frequency);
  return input;
}

Mat Mlp::forward(const ConditionInput& in) const { return forward_raw(assemble_input(in), nullptr); }

Mat Mlp::forward(const ConditionInput& in, Tape& tape) const { return forward_raw(assemble_input(in), &tape); }

Mat Mlp::forward_raw(const Mat& input, Tape* tape) const {
  if (input.rows() != spec_.input_dim()) throw std::invalid_argument("Mlp: input dimension mismatch");
  if (tape) {
    tape->inputs.clear();
    tape->pre.clear();
  }
  Mat h = input;
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& l = layers_[li];
    // Copied into Eigen-owned storage: products over the vector's own,
    // heap-dependent alignment would round differently from run to run.
    const Mat W = Eigen::Map<const Mat>(params_.data() + l.offset, l.out, l.in);
    const Vec b = Eigen::Map<const Vec>(params_.data() + l.offset + static_cast<std::size_t>(l.in) * l.out, l.out);
    Mat z = W * h;
    z.colwise() += b;
    if (tape) tape->inputs.push_back(std::move(h));
    if (li + 1 == layers_.size()) return z;
    h = (z.array() * sigmoid(z.array())).matrix();
    if (tape) tape->pre.push_back(std::move(z));
  }
  return h;
}

void Mlp::backward(const Tape& tape, const Mat& upstream, std::vector<double>& grad) const {
  if (grad.size() != params_.size()) throw std::invalid_argument("Mlp::backward: gradient size mismatch");
  if (tape.inputs.size() != layers_.size()) throw std::invalid_argument("Mlp::backward: tape does not match model");
  Mat delta = upstream;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const Layer& l = layers_[li];
    Eigen::Map<Mat> gW(grad.data() + l.offset, l.out, l.in);
    Eigen::Map<Vec> gb(grad.data() + l.offset + static_cast<std::size_t>(l.in) * l.out, l.out);
    const Mat dW = delta * tape.inputs[li].transpose();
    gW += dW;
    const Vec db = delta.rowwise().sum();
    gb += db;
    if (li == 0) break;
    const Mat W = Eigen::Map<const Mat>(params_.data() + l.offset, l.out, l.in);
    Mat dh = W.transpose() * delta;
    const Eigen::ArrayXXd& z = tape.pre[li - 1].array();
    const Eigen::ArrayXXd s = sigmoid(z);
    delta = (dh.array() * (s * (1.0 + z * (1.0 - s)))).matrix();
  }
}

}  // namespace ewflow
