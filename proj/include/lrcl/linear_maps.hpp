#pragma once

// Bias-free linear maps in three parameterizations:
//   dense   y = W x
//   low-rank residual ("LoRA")  y = (W0 + (alpha/r) B A) x, W0 frozen
//   pruned  y = (W .* mask) x, mask fixed at init
// plus the initializers each variant needs.  The low-rank delta is always
// applied as B(Ax), never materialized, except where a caller explicitly
// asks for the effective weight.

#include <Eigen/Dense>
#include <Eigen/QR>
#include <stdexcept>
#include <vector>

#include "lrcl/rng.hpp"

namespace lrcl {

using Mat = Eigen::MatrixXd;

struct DenseLinearMap {
  Mat w;
  bool trainable = true;

  Mat apply(const Mat& x) const {
    if (x.rows() != w.cols()) throw std::invalid_argument("dense map: shape mismatch");
    return w * x;
  }
};

// Adapter initialization flavors.  zero-B draws A at the wrapped layer's
// fan-in scale and zeros B, so the effective weight starts exactly at W0.
// normal-both draws both factors small (variances 1/r and 1/d_out), so the
// residual is nonzero from the first step.
struct LoRAInitSpec {
  enum class Mode { ZeroB, NormalBoth };
  Mode mode = Mode::ZeroB;

  static LoRAInitSpec parse(std::string_view s) {
    if (s == "zero-b") return {Mode::ZeroB};
    if (s == "normal-both") return {Mode::NormalBoth};
    throw std::invalid_argument("lora init: unknown mode '" + std::string(s) + "'");
  }
  const char* name() const { return mode == Mode::ZeroB ? "zero-b" : "normal-both"; }

  double a_std(int d_in, int rank) const {
    return mode == Mode::ZeroB ? 1.0 / std::sqrt(static_cast<double>(d_in))
                               : 1.0 / std::sqrt(static_cast<double>(rank));
  }
  double b_std(int d_out) const {
    return mode == Mode::ZeroB ? 0.0 : 1.0 / std::sqrt(static_cast<double>(d_out));
  }
};

struct LoRALinearMap {
  Mat w0;             // d_out x d_in, frozen
  Mat a;              // r x d_in
  Mat b;              // d_out x r
  int rank = 0;
  double alpha = 0.0; // effective delta scale is alpha / rank
  double kappa = 0.0; // base row norm when the frozen base was rebuilt; 0 = inherited

  double delta_scale() const { return alpha / static_cast<double>(rank); }

  Mat effective_weight() const {
    if (a.rows() != rank || b.cols() != rank || a.cols() != w0.cols() || b.rows() != w0.rows())
      throw std::invalid_argument("lora map: factor shapes inconsistent");
    return w0 + delta_scale() * (b * a);
  }

  Mat apply(const Mat& x) const {
    if (x.rows() != w0.cols()) throw std::invalid_argument("lora map: shape mismatch");
    return w0 * x + delta_scale() * (b * (a * x));
  }
};

struct PrunedLinearMap {
  Mat w;
  Mat mask;  // entries in {0, 1}, fixed
  double sparsity = 0.0;

  Mat apply(const Mat& x) const {
    if (x.rows() != w.cols()) throw std::invalid_argument("pruned map: shape mismatch");
    return w.cwiseProduct(mask) * x;
  }
};

inline std::pair<Mat, Mat> init_lora_factors(int d_out, int d_in, int rank,
                                             const LoRAInitSpec& init, Rng& rng) {
  // Ranks above min(d_out, d_in) are allowed: the sweep deliberately runs
  // overparameterized factors; only ranks beyond both dimensions are absurd.
  if (rank < 1 || rank > std::max(d_out, d_in))
    throw std::invalid_argument("lora init: rank out of range");
  Mat a = rng.normal_matrix(rank, d_in, init.a_std(d_in, rank));
  const double bs = init.b_std(d_out);
  Mat b = bs == 0.0 ? Mat::Zero(d_out, rank) : rng.normal_matrix(d_out, rank, bs);
  return {std::move(a), std::move(b)};
}

inline LoRALinearMap make_lora(Mat w0, int rank, double alpha, const LoRAInitSpec& init,
                               Rng& rng) {
  LoRALinearMap m;
  m.rank = rank;
  m.alpha = alpha > 0.0 ? alpha : static_cast<double>(rank);
  const int d_out = static_cast<int>(w0.rows());
  const int d_in = static_cast<int>(w0.cols());
  m.w0 = std::move(w0);
  std::tie(m.a, m.b) = init_lora_factors(d_out, d_in, rank, init, rng);
  return m;
}

// Frozen backbone with every row at L2 norm kappa.  Full rank uses an
// orthogonalized Gaussian (semi-orthogonal before row rescaling); a smaller
// rank k builds the product of two Gaussian factors with inner dimension k.
// Row rescaling by a positive diagonal never changes the rank.
inline Mat build_frozen_base(int d_out, int d_in, int base_rank, double kappa, Rng& rng) {
  const int full = std::min(d_out, d_in);
  if (base_rank < 1 || base_rank > full)
    throw std::invalid_argument("frozen base: rank out of range");
  if (!(kappa > 0.0 && kappa < 1.0))
    throw std::invalid_argument("frozen base: kappa outside (0,1)");

  Mat w;
  if (base_rank == full) {
    Mat g = rng.normal_matrix(d_out, d_in, 1.0);
    if (d_out <= d_in) {
      // Orthonormalize the rows: QR on the transpose, then fix the sign
      // ambiguity so the result is a deterministic function of g.
      Eigen::HouseholderQR<Mat> qr(g.transpose());
      Mat q = qr.householderQ() * Mat::Identity(d_in, d_out);
      Mat r = qr.matrixQR().topRows(d_out).triangularView<Eigen::Upper>();
      for (int j = 0; j < d_out; ++j)
        if (r(j, j) < 0) q.col(j) = -q.col(j);
      w = q.transpose();
    } else {
      Eigen::HouseholderQR<Mat> qr(g);
      Mat q = qr.householderQ() * Mat::Identity(d_out, d_in);
      Mat r = qr.matrixQR().topRows(d_in).triangularView<Eigen::Upper>();
      for (int j = 0; j < d_in; ++j)
        if (r(j, j) < 0) q.col(j) = -q.col(j);
      w = q;
    }
  } else {
    const Mat u = rng.normal_matrix(d_out, base_rank, 1.0);
    const Mat v = rng.normal_matrix(base_rank, d_in, 1.0);
    w = u * v;
  }

  for (int i = 0; i < d_out; ++i) {
    const double n = w.row(i).norm();
    if (n < 1e-12) throw std::runtime_error("frozen base: degenerate row");
    w.row(i) *= kappa / n;
  }
  return w;
}

inline Mat build_frozen_base(int d_out, int d_in, int base_rank, double kappa,
                             std::uint64_t seed) {
  Rng rng(seed, "weights");
  return build_frozen_base(d_out, d_in, base_rank, kappa, rng);
}

// Fixed binary mask with exactly floor(sparsity * size) zeros, placed by a
// partial Fisher-Yates shuffle over flat (row-major) indices.
inline Mat build_prune_mask(int d_out, int d_in, double sparsity, Rng& rng) {
  if (!(sparsity >= 0.0 && sparsity < 1.0))
    throw std::invalid_argument("prune mask: sparsity outside [0,1)");
  const long total = static_cast<long>(d_out) * d_in;
  const long zeros = static_cast<long>(sparsity * static_cast<double>(total));
  std::vector<long> idx(total);
  for (long i = 0; i < total; ++i) idx[i] = i;
  Mat mask = Mat::Ones(d_out, d_in);
  for (long k = 0; k < zeros; ++k) {
    const long pick = k + rng.uniform_int(static_cast<int>(total - k));
    std::swap(idx[k], idx[pick]);
    mask(idx[k] / d_in, idx[k] % d_in) = 0.0;
  }
  return mask;
}

inline Mat build_prune_mask(int d_out, int d_in, double sparsity, std::uint64_t seed) {
  Rng rng(seed, "weights");
  return build_prune_mask(d_out, d_in, sparsity, rng);
}

}  // namespace lrcl
