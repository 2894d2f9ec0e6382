#pragma once

// Adam / AdamW over registry entries, plus Polyak target averaging.
//
// Decoupled weight decay (AdamW) multiplies the tensor by (1 - lr*decay)
// before the Adam delta is applied; coupled mode is deliberately absent.
// Adapter entries get their own hyperparameter group so weight decay can be
// restricted to the low-rank factors.

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "lrcl/registry.hpp"

namespace lrcl {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled; 0 = plain Adam
};

struct AdamState {
  Eigen::MatrixXd m, v;
  long t = 0;
};

inline void adam_step(const AdamConfig& cfg, AdamState& state, Eigen::MatrixXd& theta,
                      const Eigen::MatrixXd& grad) {
  if (theta.rows() != grad.rows() || theta.cols() != grad.cols())
    throw std::invalid_argument("adam: gradient shape mismatch");
  if (state.t == 0) {
    state.m = Eigen::MatrixXd::Zero(theta.rows(), theta.cols());
    state.v = Eigen::MatrixXd::Zero(theta.rows(), theta.cols());
  }
  state.t += 1;
  if (cfg.weight_decay != 0.0) theta *= 1.0 - cfg.lr * cfg.weight_decay;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  theta.array() -= cfg.lr * (state.m.array() / bc1) /
                   ((state.v.array() / bc2).sqrt() + cfg.eps);
}

// Steps every trainable registry entry with its group's hyperparameters.
class RegistryOptimizer {
 public:
  RegistryOptimizer(const ParamRegistry& reg, AdamConfig base, AdamConfig adapter)
      : base_(base), adapter_(adapter), states_(reg.size()) {}

  explicit RegistryOptimizer(const ParamRegistry& reg, AdamConfig base = {})
      : RegistryOptimizer(reg, base, base) {}

  void step(ParamRegistry& reg, const std::vector<Eigen::MatrixXd>& grads) {
    if (static_cast<int>(grads.size()) != reg.size() ||
        static_cast<int>(states_.size()) != reg.size())
      throw std::invalid_argument("optimizer: registry size changed");
    for (int i = 0; i < reg.size(); ++i) {
      switch (reg.kind(i)) {
        case ParamKind::Frozen:
          break;
        case ParamKind::Trainable:
          adam_step(base_, states_[i], reg.value(i), grads[i]);
          break;
        case ParamKind::Adapter:
          adam_step(adapter_, states_[i], reg.value(i), grads[i]);
          break;
      }
    }
  }

  const AdamConfig& base_config() const { return base_; }
  const AdamConfig& adapter_config() const { return adapter_; }

 private:
  AdamConfig base_, adapter_;
  std::vector<AdamState> states_;
};

// target <- (1 - tau) * target + tau * online, trainable entries only.
// Frozen entries (bases, masks) are identical by construction and stay
// bit-identical by never being touched.
inline void polyak_update(ParamRegistry& target, const ParamRegistry& online, double tau) {
  if (!target.same_structure(online))
    throw std::invalid_argument("polyak: registry structure mismatch");
  for (int i = 0; i < target.size(); ++i)
    if (target.trainable(i))
      target.value(i) = (1.0 - tau) * target.value(i) + tau * online.value(i);
}

}  // namespace lrcl
