#pragma once

// A small deterministic-dynamics chain world with noisy action outcomes,
// plus the exact quantities a critic experiment needs: the true action-value
// table, the on-policy state distribution, and the one-step policy backup.
//
// States sit on a line 0..num_states-1.  Action 0 attempts a move left,
// action 1 a move right.  The attempt succeeds with probability
// success_prob and otherwise leaves the state unchanged; a successful move
// off either end also leaves the state unchanged (the walls absorb it).
// The only reward is earned by attempting "right" from the second-to-last
// state: its expected value equals success_prob.

#include <Eigen/Dense>
#include <array>
#include <stdexcept>
#include <vector>

#include "lrcl/rng.hpp"

namespace lrcl {

inline constexpr int kLeft = 0;
inline constexpr int kRight = 1;

struct ChainMDP {
  int num_states = 15;
  int num_actions = 2;
  double success_prob = 0.9;
  double discount = 0.97;

  void validate() const {
    if (num_states < 2) throw std::invalid_argument("chain: need at least 2 states");
    if (num_actions != 2) throw std::invalid_argument("chain: exactly 2 actions supported");
    if (!(success_prob >= 0.0 && success_prob <= 1.0))
      throw std::invalid_argument("chain: success_prob outside [0,1]");
    if (!(discount > 0.0 && discount < 1.0))
      throw std::invalid_argument("chain: discount outside (0,1)");
  }

  // Deterministic part of the dynamics: where a successful move lands.
  int successor(int s, int a) const {
    const int next = s + (a == kRight ? 1 : -1);
    if (next < 0 || next >= num_states) return s;
    return next;
  }
};

inline double reward(const ChainMDP& mdp, int s, int a) {
  return (s == mdp.num_states - 2 && a == kRight) ? mdp.success_prob : 0.0;
}

inline Eigen::MatrixXd reward_table(const ChainMDP& mdp) {
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(mdp.num_states, mdp.num_actions);
  for (int s = 0; s < mdp.num_states; ++s)
    for (int a = 0; a < mdp.num_actions; ++a) r(s, a) = reward(mdp, s, a);
  return r;
}

struct Policy {
  // action_probs(s, a) = pi(a | s); rows sum to 1.
  Eigen::MatrixXd action_probs;

  static Policy uniform_random(const ChainMDP& mdp) {
    Policy p;
    p.action_probs = Eigen::MatrixXd::Constant(mdp.num_states, mdp.num_actions,
                                               1.0 / mdp.num_actions);
    return p;
  }

  static Policy always_right(const ChainMDP& mdp) {
    Policy p;
    p.action_probs = Eigen::MatrixXd::Zero(mdp.num_states, mdp.num_actions);
    p.action_probs.col(kRight).setOnes();
    return p;
  }

  int sample_action(int s, Rng& rng) const {
    const double u = rng.uniform();
    double acc = 0.0;
    const int actions = static_cast<int>(action_probs.cols());
    for (int a = 0; a < actions; ++a) {
      acc += action_probs(s, a);
      if (u < acc) return a;
    }
    return actions - 1;
  }
};

// Per-action transition matrices P[a](s, s') built from the chain rules.
class TransitionModel {
 public:
  explicit TransitionModel(const ChainMDP& mdp) : mdp_(mdp) {
    mdp.validate();
    const int n = mdp.num_states;
    for (int a = 0; a < 2; ++a) {
      p_[a] = Eigen::MatrixXd::Zero(n, n);
      for (int s = 0; s < n; ++s) {
        const int hit = mdp.successor(s, a);
        p_[a](s, hit) += mdp.success_prob;
        p_[a](s, s) += 1.0 - mdp.success_prob;
      }
    }
  }

  double prob(int s, int a, int next) const { return p_[a](s, next); }
  const Eigen::MatrixXd& action_matrix(int a) const { return p_[a]; }

  // P^pi(s, s') = sum_a pi(a|s) P[a](s, s')
  Eigen::MatrixXd policy_matrix(const Policy& pi) const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(mdp_.num_states, mdp_.num_states);
    for (int a = 0; a < 2; ++a)
      out += pi.action_probs.col(a).asDiagonal() * p_[a];
    return out;
  }

  const ChainMDP& mdp() const { return mdp_; }

 private:
  ChainMDP mdp_;
  std::array<Eigen::MatrixXd, 2> p_;
};

inline TransitionModel transition_model(const ChainMDP& mdp) {
  return TransitionModel(mdp);
}

// Exact Q^pi via the linear system (I - gamma P^pi) V = R^pi, then one
// Bellman expansion per state-action pair.  Throws if the solve residual is
// not tiny (it always is for these dimensions unless the inputs are broken).
inline Eigen::MatrixXd solve_true_q(const ChainMDP& mdp, const Policy& pi) {
  mdp.validate();
  const TransitionModel model(mdp);
  const int n = mdp.num_states;
  const Eigen::MatrixXd p_pi = model.policy_matrix(pi);
  const Eigen::MatrixXd r = reward_table(mdp);
  const Eigen::VectorXd r_pi =
      (pi.action_probs.array() * r.array()).rowwise().sum();

  const Eigen::MatrixXd lhs =
      Eigen::MatrixXd::Identity(n, n) - mdp.discount * p_pi;
  const Eigen::VectorXd v = lhs.partialPivLu().solve(r_pi);
  if ((lhs * v - r_pi).lpNorm<Eigen::Infinity>() > 1e-10)
    throw std::runtime_error("chain: value solve did not converge");

  Eigen::MatrixXd q(n, mdp.num_actions);
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < mdp.num_actions; ++a)
      q(s, a) = r(s, a) + mdp.discount * model.action_matrix(a).row(s).dot(v);
  return q;
}

// Discounted-visitation-free stationary distribution of P^pi: iterate
// d <- d P^pi from uniform until the L1 change drops below tol.
inline Eigen::VectorXd stationary_distribution(const ChainMDP& mdp, const Policy& pi,
                                               double tol = 1e-13,
                                               int max_iters = 200000) {
  const TransitionModel model(mdp);
  const Eigen::MatrixXd p_pi = model.policy_matrix(pi);
  Eigen::VectorXd d =
      Eigen::VectorXd::Constant(mdp.num_states, 1.0 / mdp.num_states);
  for (int it = 0; it < max_iters; ++it) {
    Eigen::VectorXd next = p_pi.transpose() * d;
    next /= next.sum();
    const double delta = (next - d).lpNorm<1>();
    d = next;
    if (delta < tol) return d;
  }
  throw std::runtime_error("chain: stationary distribution did not converge");
}

struct Transition {
  int state;
  int action;
  double reward;
  int next_state;
};

struct ReplayBuffer {
  std::vector<Transition> transitions;

  int count_state_visits(int s) const {
    int n = 0;
    for (const auto& t : transitions) n += (t.state == s);
    return n;
  }
};

// One behaviour-policy trajectory of fixed length.  Draw order per step is
// fixed (action, then outcome) so the buffer is a pure function of the rng
// stream; the outcome draw happens even when both branches land on the same
// state, keeping stream consumption uniform.
inline ReplayBuffer collect_buffer(const ChainMDP& mdp, const Policy& mu,
                                   int num_transitions, Rng& rng) {
  mdp.validate();
  if (num_transitions < 1) throw std::invalid_argument("chain: empty buffer requested");
  ReplayBuffer buf;
  buf.transitions.reserve(num_transitions);
  int s = rng.uniform_int(mdp.num_states);
  for (int i = 0; i < num_transitions; ++i) {
    const int a = mu.sample_action(s, rng);
    const bool success = rng.uniform() < mdp.success_prob;
    const int next = success ? mdp.successor(s, a) : s;
    buf.transitions.push_back({s, a, reward(mdp, s, a), next});
    s = next;
  }
  return buf;
}

inline ReplayBuffer collect_buffer(const ChainMDP& mdp, const Policy& mu,
                                   int num_transitions, std::uint64_t seed) {
  Rng rng(seed, "buffer");
  return collect_buffer(mdp, mu, num_transitions, rng);
}

// One application of the policy backup operator to an arbitrary Q table:
// (T^pi Q)(s, a) = R(s, a) + gamma * sum_{s'} P(s'|s,a) sum_{a'} pi(a'|s') Q(s', a').
inline Eigen::MatrixXd exact_bellman_operator(const Eigen::MatrixXd& q,
                                              const ChainMDP& mdp,
                                              const Policy& pi) {
  if (q.rows() != mdp.num_states || q.cols() != mdp.num_actions)
    throw std::invalid_argument("chain: Q table has wrong shape");
  const TransitionModel model(mdp);
  const Eigen::VectorXd v_pi = (pi.action_probs.array() * q.array()).rowwise().sum();
  Eigen::MatrixXd out(mdp.num_states, mdp.num_actions);
  for (int a = 0; a < mdp.num_actions; ++a)
    out.col(a) = reward_table(mdp).col(a) + mdp.discount * (model.action_matrix(a) * v_pi);
  return out;
}

}  // namespace lrcl
