#pragma once

// Row-wise hypersphere machinery.
//
// Plain row normalization rescales each row of a trainable matrix to unit
// L2 norm after an optimizer step.  For a low-rank-adapted map that is not
// allowed: rescaling W0 + delta would overwrite the frozen base.  Instead we
// keep W0 fixed and solve, per output row, for the scalar s that puts
//   || w0_row + s * delta_row ||_2 = 1,
// i.e. the positive root of
//   ||delta||^2 s^2 + 2 <w0, delta> s + (||w0||^2 - 1) = 0,
// then absorb s into the corresponding row of B.  When every base row has
// norm strictly below 1 the constant term is negative, so the two roots have
// opposite signs and the positive one always exists.
//
// demonstrate_incompatibility shows why the naive alternative fails: mapping
// w0 + delta to (w0 + delta) / (||w0 + delta|| + eps) multiplies the base
// contribution by c = 1 / (||w0 + delta|| + eps) != 1, silently unfreezing it.

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

#include "lrcl/linear_maps.hpp"

namespace lrcl {

struct ProjectionConfig {
  double eps = 1e-8;    // denominator clamp in the root formula
  bool enabled = true;  // architectures without weight normalization disable hooks
};

inline Mat row_normalize(const Mat& w) {
  Mat out = w;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    if (n < 1e-300) throw std::invalid_argument("row_normalize: zero row " + std::to_string(i));
    out.row(i) /= n;
  }
  return out;
}

inline void row_normalize_inplace(Mat& w) { w = row_normalize(w); }

// Positive root of ||delta||^2 s^2 + 2<w,delta> s + (||w||^2 - 1) = 0.
inline double solve_row_scale(const Eigen::Ref<const Eigen::RowVectorXd>& w,
                              const Eigen::Ref<const Eigen::RowVectorXd>& delta,
                              const ProjectionConfig& cfg = {}) {
  const double dd = delta.squaredNorm();
  if (std::sqrt(dd) <= 1e-12)
    throw std::invalid_argument("solve_row_scale: degenerate direction (||delta|| ~ 0)");
  const double ww = w.squaredNorm();
  if (ww >= 1.0)
    throw std::invalid_argument("solve_row_scale: infeasible base row (||w|| >= 1)");
  const double wd = w.dot(delta);
  double disc = wd * wd - dd * (ww - 1.0);
  if (disc < 0.0) {
    // Impossible for ||w|| < 1 up to roundoff; anything beyond noise is a bug.
    if (disc < -1e-14) throw std::runtime_error("solve_row_scale: negative discriminant");
    disc = 0.0;
  }
  return (-wd + std::sqrt(disc)) / std::max(dd, cfg.eps);
}

// Core of the LoRA-compatible projection, shared by the map-level API and
// the network hooks.  Mutates b in place; w0 and a are only read.
inline void project_lora_rows(const Mat& w0, const Mat& a, Mat& b, double delta_scale,
                              const ProjectionConfig& cfg = {}) {
  if (b.rows() != w0.rows() || b.cols() != a.rows() || a.cols() != w0.cols())
    throw std::invalid_argument("project_lora: factor shapes inconsistent");
  for (Eigen::Index i = 0; i < w0.rows(); ++i) {
    const Eigen::RowVectorXd delta = delta_scale * (b.row(i) * a);
    double s;
    try {
      s = solve_row_scale(w0.row(i), delta, cfg);
    } catch (const std::exception& e) {
      throw std::runtime_error("project_lora: row " + std::to_string(i) + ": " + e.what());
    }
    b.row(i) *= s;
  }
}

inline void project_lora(LoRALinearMap& m, const ProjectionConfig& cfg = {}) {
  project_lora_rows(m.w0, m.a, m.b, m.delta_scale(), cfg);
}

struct IncompatibilityReport {
  double c = 0.0;                        // naive rescale factor 1/(||w+delta||+eps)
  Eigen::RowVectorXd base_after_naive;   // c * w -- moved whenever c != 1
  Eigen::RowVectorXd base_after_ours;    // w, untouched
  double s = 0.0;                        // our row scale
  double naive_base_shift = 0.0;         // ||c*w - w||
};

inline IncompatibilityReport demonstrate_incompatibility(
    const Eigen::Ref<const Eigen::RowVectorXd>& w,
    const Eigen::Ref<const Eigen::RowVectorXd>& delta, double eps = 1e-8) {
  const double n = (w + delta).norm();
  if (n == 0.0) throw std::invalid_argument("incompatibility demo: w + delta is zero");
  IncompatibilityReport rep;
  rep.c = 1.0 / (n + eps);
  rep.base_after_naive = rep.c * w;
  rep.base_after_ours = w;
  rep.s = solve_row_scale(w, delta);
  rep.naive_base_shift = (rep.base_after_naive - w).norm();
  return rep;
}

}  // namespace lrcl
