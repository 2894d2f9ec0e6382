#pragma once

// Fixed random feature embedding for chain state-action pairs.
//
// Each pair is encoded as the concatenation of a one-hot state and a one-hot
// action, pushed through a frozen random linear map and tanh:
//   phi(s, a) = tanh(W [onehot(s); onehot(a)]),  W ~ N(0, (1/sqrt(D))^2)
// The map is drawn once per seed and cached as a D x (S*A) table so training
// code can slice columns instead of recomputing.

#include <Eigen/Dense>
#include <stdexcept>

#include "lrcl/chain_mdp.hpp"
#include "lrcl/rng.hpp"

namespace lrcl {

class FeatureMap {
 public:
  static FeatureMap build(const ChainMDP& mdp, int feature_dim, Rng& rng) {
    mdp.validate();
    if (feature_dim < 1) throw std::invalid_argument("feature map: dim must be positive");
    FeatureMap fm;
    fm.states_ = mdp.num_states;
    fm.actions_ = mdp.num_actions;
    fm.dim_ = feature_dim;
    const int onehot = mdp.num_states + mdp.num_actions;
    fm.w_ = rng.normal_matrix(feature_dim, onehot,
                              1.0 / std::sqrt(static_cast<double>(feature_dim)));
    fm.table_.resize(feature_dim, fm.states_ * fm.actions_);
    for (int s = 0; s < fm.states_; ++s)
      for (int a = 0; a < fm.actions_; ++a)
        fm.table_.col(fm.pair_index(s, a)) =
            (fm.w_.col(s) + fm.w_.col(fm.states_ + a)).array().tanh();
    return fm;
  }

  int pair_index(int s, int a) const {
    if (s < 0 || s >= states_ || a < 0 || a >= actions_)
      throw std::out_of_range("feature map: state-action pair out of range");
    return s * actions_ + a;
  }

  Eigen::VectorXd featurize(int s, int a) const { return table_.col(pair_index(s, a)); }

  // Column p = pair_index(s, a); shape D x (S*A).
  const Eigen::MatrixXd& feature_matrix() const { return table_; }

  // Columns s = 0..S-1 for a fixed action; shape D x S.
  Eigen::MatrixXd features_for_action(int a) const {
    Eigen::MatrixXd out(dim_, states_);
    for (int s = 0; s < states_; ++s) out.col(s) = table_.col(pair_index(s, a));
    return out;
  }

  int dim() const { return dim_; }
  int num_states() const { return states_; }
  int num_actions() const { return actions_; }
  const Eigen::MatrixXd& projection() const { return w_; }

 private:
  int states_ = 0, actions_ = 0, dim_ = 0;
  Eigen::MatrixXd w_;      // D x (S + A)
  Eigen::MatrixXd table_;  // D x (S * A)
};

}  // namespace lrcl
