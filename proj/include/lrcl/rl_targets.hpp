#pragma once

// Scalar bootstrap-target formulas used by soft-actor-critic and TD3-style
// training, kept as standalone tested functions.  m is the continuation
// mask (0 at terminal transitions), n the n-step exponent on the discount.

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace lrcl {

struct TargetInputs {
  double r = 0.0;
  double gamma = 0.99;
  int n = 1;
  double m = 1.0;  // continuation mask in {0, 1}
  double q_agg = 0.0;
  double alpha_ent = 0.0;
  double logp = 0.0;

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("target: gamma outside (0,1]");
    if (m != 0.0 && m != 1.0) throw std::invalid_argument("target: mask must be 0 or 1");
    if (n < 1) throw std::invalid_argument("target: n-step exponent must be >= 1");
  }
};

inline double sac_target(const TargetInputs& t) {
  t.validate();
  return t.r + std::pow(t.gamma, t.n) * t.m * (t.q_agg - t.alpha_ent * t.logp);
}

inline double td3_target(const TargetInputs& t) {
  t.validate();
  return t.r + std::pow(t.gamma, t.n) * t.m * t.q_agg;
}

// clip(mu + clip(sigma * eps, -c, c), a_min, a_max), elementwise; eps is the
// raw noise draw, sigma its scale.
inline Eigen::VectorXd td3_smoothed_action(const Eigen::VectorXd& mu,
                                           const Eigen::VectorXd& eps, double sigma,
                                           double c, double a_min, double a_max) {
  if (mu.size() != eps.size()) throw std::invalid_argument("smoothed action: size mismatch");
  if (!(c > 0.0)) throw std::invalid_argument("smoothed action: clip scale must be positive");
  if (!(a_min < a_max)) throw std::invalid_argument("smoothed action: bounds out of order");
  return (mu.array() + (sigma * eps.array()).min(c).max(-c)).min(a_max).max(a_min).matrix();
}

}  // namespace lrcl
