#pragma once

// Central finite-difference verification of tape gradients.
//
// For each trainable registry entry we probe a deterministic sample of
// coordinates: theta_i +- h, loss re-evaluated from scratch, compared to the
// analytic gradient.  Coordinates whose gradient and FD estimate are both
// below an absolute floor are counted as passes (the FD noise floor is
// ~1e-11 at h=1e-5, so relative error is meaningless there).

#include <functional>
#include <string>
#include <vector>

#include "lrcl/registry.hpp"
#include "lrcl/rng.hpp"

namespace lrcl {

struct GradCheckOptions {
  double h = 1e-5;
  double rel_tol = 1e-5;
  double scale_floor = 1e-4;  // below this magnitude, fall back to absolute
  double abs_floor = 1e-9;
  int max_coords_per_tensor = 36;
  std::uint64_t coord_seed = 20240101;
};

struct GradCheckResult {
  bool ok = true;
  double max_rel = 0.0;  // over coordinates above the scale floor
  int coords_checked = 0;
  std::string worst;  // "entry(i,j): analytic vs fd"

  void merge(const GradCheckResult& other) {
    ok = ok && other.ok;
    coords_checked += other.coords_checked;
    if (other.max_rel > max_rel) {
      max_rel = other.max_rel;
      worst = other.worst;
    }
  }
};

// make_loss must bind fresh leaves on the given tape and return a scalar
// node; it is invoked many times with perturbed registry values.
inline GradCheckResult check_gradients(
    ParamRegistry& reg,
    const std::function<Tape::NodeRef(Tape&, const TapeLeaves&)>& make_loss,
    const GradCheckOptions& opts = {}) {
  Tape tape;
  TapeLeaves leaves = bind_leaves(tape, reg);
  Tape::NodeRef loss = make_loss(tape, leaves);
  tape.backward(loss);
  const std::vector<Eigen::MatrixXd> grads = collect_grads(tape, reg, leaves);

  auto eval_loss = [&]() {
    Tape t;
    TapeLeaves l = bind_leaves(t, reg);
    return t.value(make_loss(t, l))(0, 0);
  };

  Rng coord_rng(opts.coord_seed, "grad-check");
  GradCheckResult result;
  for (int e = 0; e < reg.size(); ++e) {
    if (!reg.trainable(e)) continue;
    Eigen::MatrixXd& theta = reg.value(e);
    const long total = theta.size();
    std::vector<long> coords;
    if (total <= opts.max_coords_per_tensor) {
      for (long i = 0; i < total; ++i) coords.push_back(i);
    } else {
      for (int i = 0; i < opts.max_coords_per_tensor; ++i)
        coords.push_back(coord_rng.uniform_int(static_cast<int>(total)));
    }
    for (long flat : coords) {
      const long r = flat / theta.cols();
      const long c = flat % theta.cols();
      const double saved = theta(r, c);
      theta(r, c) = saved + opts.h;
      const double up = eval_loss();
      theta(r, c) = saved - opts.h;
      const double down = eval_loss();
      theta(r, c) = saved;
      const double fd = (up - down) / (2.0 * opts.h);
      const double analytic = grads[e](r, c);
      const double scale = std::max(std::abs(analytic), std::abs(fd));
      result.coords_checked += 1;
      if (scale < opts.scale_floor) {
        if (std::abs(analytic - fd) > opts.abs_floor) {
          result.ok = false;
          result.worst = reg.name(e) + "(" + std::to_string(r) + "," + std::to_string(c) +
                         "): " + std::to_string(analytic) + " vs fd " + std::to_string(fd);
          result.max_rel = 1.0;
        }
        continue;
      }
      const double rel = std::abs(analytic - fd) / scale;
      if (rel > result.max_rel) {
        result.max_rel = rel;
        result.worst = reg.name(e) + "(" + std::to_string(r) + "," + std::to_string(c) +
                       "): " + std::to_string(analytic) + " vs fd " + std::to_string(fd);
      }
      if (rel > opts.rel_tol) result.ok = false;
    }
  }
  return result;
}

}  // namespace lrcl
