#include "ewflow/rl_env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace ewflow {

void TransitionBatch::validate() const {
  const Eigen::Index n = actions.cols();
  if (states.cols() != n || rewards.size() != n || next_states.cols() != n || static_cast<Eigen::Index>(done.size()) != n)
    throw std::invalid_argument("TransitionBatch: column counts disagree");
  if (states.rows() != next_states.rows()) throw std::invalid_argument("TransitionBatch: state dimensions disagree");
  if (!states.allFinite() || !actions.allFinite() || !rewards.allFinite() || !next_states.allFinite())
    throw std::invalid_argument("TransitionBatch: non-finite entry");
}

TransitionBatch TransitionBatch::select(const std::vector<Eigen::Index>& idx) const {
  TransitionBatch b;
  const auto n = static_cast<Eigen::Index>(idx.size());
  b.states.resize(states.rows(), n);
  b.actions.resize(actions.rows(), n);
  b.rewards.resize(n);
  b.next_states.resize(next_states.rows(), n);
  b.done.resize(idx.size());
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index i = idx[static_cast<std::size_t>(k)];
    b.states.col(k) = states.col(i);
    b.actions.col(k) = actions.col(i);
    b.rewards[k] = rewards[i];
    b.next_states.col(k) = next_states.col(i);
    b.done[static_cast<std::size_t>(k)] = done[static_cast<std::size_t>(i)];
  }
  return b;
}

void write_transitions_csv(std::ostream& os, const TransitionBatch& b) {
  b.validate();
  for (Eigen::Index r = 0; r < b.states.rows(); ++r) os << "s" << r << ",";
  for (Eigen::Index r = 0; r < b.actions.rows(); ++r) os << "a" << r << ",";
  os << "reward,";
  for (Eigen::Index r = 0; r < b.next_states.rows(); ++r) os << "ns" << r << ",";
  os << "done\n";
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.9g,", v);
    os << buf;
  };
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    for (Eigen::Index r = 0; r < b.states.rows(); ++r) put(b.states(r, i));
    for (Eigen::Index r = 0; r < b.actions.rows(); ++r) put(b.actions(r, i));
    put(b.rewards[i]);
    for (Eigen::Index r = 0; r < b.next_states.rows(); ++r) put(b.next_states(r, i));
    os << b.done[static_cast<std::size_t>(i)] << '\n';
  }
}

TransitionBatch read_transitions_csv(std::istream& is, int state_dim, int action_dim) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("transitions CSV: missing header");
  const int width = 2 * state_dim + action_dim + 2;
  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::runtime_error("transitions CSV line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    if (static_cast<int>(row.size()) != width)
      throw std::runtime_error("transitions CSV line " + std::to_string(lineno) + ": expected " +
                               std::to_string(width) + " columns");
    rows.push_back(std::move(row));
  }
  TransitionBatch b;
  const auto n = static_cast<Eigen::Index>(rows.size());
  b.states.resize(state_dim, n);
  b.actions.resize(action_dim, n);
  b.rewards.resize(n);
  b.next_states.resize(state_dim, n);
  b.done.resize(rows.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    int c = 0;
    for (int k = 0; k < state_dim; ++k) b.states(k, i) = r[c++];
    for (int k = 0; k < action_dim; ++k) b.actions(k, i) = r[c++];
    b.rewards[i] = r[c++];
    for (int k = 0; k < state_dim; ++k) b.next_states(k, i) = r[c++];
    b.done[static_cast<std::size_t>(i)] = r[c] != 0.0 ? 1 : 0;
  }
  b.validate();
  return b;
}

TransitionBatch LinearGaussianBandit::dataset(std::size_t n, Rng& rng) const {
  TransitionBatch b;
  const auto N = static_cast<Eigen::Index>(n);
  b.states = Mat::Zero(state_dim(), N);
  b.actions = rng.normal_mat(action_dim(), N);
  b.rewards.resize(N);
  for (Eigen::Index i = 0; i < N; ++i) b.rewards[i] = q(b.actions.col(i));
  b.next_states = Mat::Zero(state_dim(), N);
  b.done.assign(n, 1);
  return b;
}

int ChainMdp::next_state(int s, int a) const {
  return a == 1 ? std::min(s + 1, n_states - 1) : std::max(s - 1, 0);
}

double ChainMdp::reward(int s, int a) const { return next_state(s, a) == n_states - 1 ? 1.0 : 0.0; }

Vec ChainMdp::encode_state(int s) const {
  Vec v = Vec::Zero(n_states);
  v[s] = 1.0;
  return v;
}

Vec ChainMdp::encode_action(int a) const {
  Vec v = Vec::Zero(n_actions);
  v[a] = 1.0;
  return v;
}

TransitionBatch ChainMdp::dataset(std::size_t n, Rng& rng) const {
  TransitionBatch b;
  const auto N = static_cast<Eigen::Index>(n);
  b.states.resize(n_states, N);
  b.actions.resize(n_actions, N);
  b.rewards.resize(N);
  b.next_states.resize(n_states, N);
  b.done.assign(n, 0);
  for (Eigen::Index i = 0; i < N; ++i) {
    const int s = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_states)));
    const int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_actions)));
    b.states.col(i) = encode_state(s);
    b.actions.col(i) = encode_action(a);
    b.rewards[i] = reward(s, a);
    b.next_states.col(i) = encode_state(next_state(s, a));
  }
  return b;
}

Mat ChainMdp::all_actions() const { return Mat::Identity(n_actions, n_actions); }

Mat soft_value_iteration(const ChainMdp& mdp, double beta, double tol, int max_iter) {
  Mat Q = Mat::Zero(mdp.n_states, mdp.n_actions);
  for (int it = 0; it < max_iter; ++it) {
    Vec v(mdp.n_states);
    for (int s = 0; s < mdp.n_states; ++s) {
      const Vec logits = beta * Q.row(s).transpose();
      const Vec w = (logits.array() - logits.maxCoeff()).exp().matrix();
      v[s] = w.dot(Q.row(s).transpose()) / w.sum();
    }
    Mat next(mdp.n_states, mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s)
      for (int a = 0; a < mdp.n_actions; ++a) next(s, a) = mdp.reward(s, a) + mdp.gamma * v[mdp.next_state(s, a)];
    const double diff = (next - Q).cwiseAbs().maxCoeff();
    Q = next;
    if (diff < tol) return Q;
  }
  return Q;
}

}  // namespace ewflow
