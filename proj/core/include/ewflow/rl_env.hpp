#pragma once

#include <iosfwd>
#include <vector>

#include "ewflow/rng.hpp"
#include "ewflow/types.hpp"

namespace ewflow {

// Offline transitions, one column per tuple.
struct TransitionBatch {
  Mat states;
  Mat actions;
  Vec rewards;
  Mat next_states;
  std::vector<int> done;

  Eigen::Index size() const { return actions.cols(); }
  void validate() const;
  TransitionBatch select(const std::vector<Eigen::Index>& idx) const;
};

// CSV columns: s0..., a0..., reward, ns0..., done.
void write_transitions_csv(std::ostream& os, const TransitionBatch& b);
TransitionBatch read_transitions_csv(std::istream& is, int state_dim, int action_dim);

// Single-state bandit: behavior mu(a) = N(0, I), Q(a) = w . a, so the tilted
// policy after r rounds of guidance beta is N(r beta w, I).
struct LinearGaussianBandit {
  Vec w = Vec::Ones(1);

  int action_dim() const { return static_cast<int>(w.size()); }
  static constexpr int state_dim() { return 1; }
  double q(const Vec& a) const { return w.dot(a); }
  Vec tilted_mean(double beta, int rounds) const { return (beta * rounds) * w; }
  TransitionBatch dataset(std::size_t n, Rng& rng) const;
};

// Deterministic chain: action 0 steps left, action 1 steps right (clamped to
// the ends); reward 1 for landing on the last state, else 0. States and
// actions are one-hot encoded.
struct ChainMdp {
  int n_states = 5;
  int n_actions = 2;
  double gamma = 0.9;

  int next_state(int s, int a) const;
  double reward(int s, int a) const;
  Vec encode_state(int s) const;
  Vec encode_action(int a) const;
  // Uniform (s, a) pairs, never terminal.
  TransitionBatch dataset(std::size_t n, Rng& rng) const;
  // Every action, one-hot, as a support set for any state.
  Mat all_actions() const;
};

// Fixed point of Q(s,a) = r + gamma sum_a' softmax_a'(beta Q(s',a')) Q(s',a').
Mat soft_value_iteration(const ChainMdp& mdp, double beta, double tol = 1e-12, int max_iter = 100000);

}  // namespace ewflow
