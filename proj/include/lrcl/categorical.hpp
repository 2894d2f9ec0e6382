#pragma once

// Fixed-support categorical value head utilities: stable softmax,
// expectation over the atom grid, the distributional Bellman projection, and
// log-space cross-entropy.
//
// The projection maps each source atom to y = clip(r + g * z_i) and splits
// its mass linearly between the two neighboring atoms.  The neighbor search
// walks the actual grid values with an exact-hit branch, so a backup that
// lands bitwise on an atom (in particular the identity backup r=0, g=1)
// reproduces the input distribution exactly.

#include <Eigen/Dense>
#include <stdexcept>

namespace lrcl {

struct ValueSupport {
  double v_min = -1.0;
  double v_max = 2.0;
  int num_atoms = 51;

  void validate() const {
    if (num_atoms < 2) throw std::invalid_argument("support: need at least 2 atoms");
    if (!(v_max > v_min)) throw std::invalid_argument("support: v_max must exceed v_min");
  }

  double spacing() const { return (v_max - v_min) / (num_atoms - 1); }

  Eigen::VectorXd atoms() const {
    validate();
    Eigen::VectorXd z(num_atoms);
    for (int i = 0; i < num_atoms; ++i)
      z(i) = v_min + (v_max - v_min) * (static_cast<double>(i) / (num_atoms - 1));
    z(num_atoms - 1) = v_max;  // guard the top endpoint against roundoff
    return z;
  }
};

// Max-subtracted softmax, applied per column.
inline Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& logits) {
  if (!logits.allFinite()) throw std::invalid_argument("softmax: non-finite logits");
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const Eigen::VectorXd shifted =
        (logits.col(c).array() - logits.col(c).maxCoeff()).exp();
    out.col(c) = shifted / shifted.sum();
  }
  return out;
}

inline Eigen::VectorXd logits_to_probs(const Eigen::VectorXd& logits) {
  return softmax_columns(logits);
}

inline double expectation(const Eigen::VectorXd& probs, const ValueSupport& sup) {
  if (probs.size() != sup.num_atoms)
    throw std::invalid_argument("expectation: atom count mismatch");
  return sup.atoms().dot(probs);
}

// Per-column expectations for a batch of distributions.
inline Eigen::VectorXd expectation_columns(const Eigen::MatrixXd& probs,
                                           const ValueSupport& sup) {
  if (probs.rows() != sup.num_atoms)
    throw std::invalid_argument("expectation: atom count mismatch");
  return probs.transpose() * sup.atoms();
}

namespace detail {
// Adds `mass` at value y (already clipped into [v_min, v_max]) onto the grid.
inline void deposit(double y, double mass, const Eigen::VectorXd& z,
                    Eigen::VectorXd& out) {
  const int n = static_cast<int>(z.size());
  if (y <= z(0)) {
    out(0) += mass;
    return;
  }
  if (y >= z(n - 1)) {
    out(n - 1) += mass;
    return;
  }
  // Largest atom index with z(lo) <= y; grid is tiny, walk it directly.
  int lo = 0;
  while (lo + 1 < n && z(lo + 1) <= y) ++lo;
  if (z(lo) == y) {  // exact hit: all mass to that atom
    out(lo) += mass;
    return;
  }
  const double wu = (y - z(lo)) / (z(lo + 1) - z(lo));
  out(lo) += mass * (1.0 - wu);
  out(lo + 1) += mass * wu;
}
}  // namespace detail

// Two-hot encoding of a scalar: the projection of a point mass at y.
inline Eigen::VectorXd two_hot(double y, const ValueSupport& sup) {
  const Eigen::VectorXd z = sup.atoms();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(sup.num_atoms);
  detail::deposit(std::min(std::max(y, sup.v_min), sup.v_max), 1.0, z, out);
  return out;
}

// Distributional Bellman backup: shift the support through r + g*z, clip,
// and project back onto the grid.  g plays the role of the discount times
// the continuation mask (gamma^n * m).
inline Eigen::VectorXd c51_project(const Eigen::VectorXd& probs, double r, double g,
                                   const ValueSupport& sup) {
  if (probs.size() != sup.num_atoms)
    throw std::invalid_argument("c51_project: atom count mismatch");
  const Eigen::VectorXd z = sup.atoms();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(sup.num_atoms);
  for (int i = 0; i < sup.num_atoms; ++i) {
    const double mass = probs(i);
    if (mass == 0.0) continue;
    const double y = std::min(std::max(r + g * z(i), sup.v_min), sup.v_max);
    detail::deposit(y, mass, z, out);
  }
  return out;
}

// Log-space cross-entropy of a target distribution against predicted logits.
// Returns the loss; if grad is non-null it receives softmax(pred) - target.
inline double cross_entropy_loss(const Eigen::VectorXd& pred_logits,
                                 const Eigen::VectorXd& target,
                                 Eigen::VectorXd* grad = nullptr) {
  if (pred_logits.size() != target.size())
    throw std::invalid_argument("cross_entropy: size mismatch");
  if (!pred_logits.allFinite()) throw std::invalid_argument("cross_entropy: non-finite logits");
  const double m = pred_logits.maxCoeff();
  const Eigen::ArrayXd ex = (pred_logits.array() - m).exp();
  const double sum = ex.sum();
  const double lse = std::log(sum) + m;
  const double total = target.sum();  // 1 for a proper distribution
  const double loss = total * lse - target.dot(pred_logits);
  if (grad) *grad = total * (ex / sum).matrix() - target;
  return loss;
}

}  // namespace lrcl
