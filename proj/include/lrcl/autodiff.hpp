#pragma once

// Minimal reverse-mode tape over Eigen double matrices.
//
// Values are computed eagerly as nodes are recorded; backward() walks the
// tape in reverse creation order, so every node's output gradient is fully
// accumulated before its own rule fires.  Leaves can either copy their value
// or point at external storage (a parameter registry) to avoid per-step
// copies; external storage must stay put for the lifetime of the tape pass.
//
// The op set is exactly what the critic networks and losses need -- this is
// not a general autodiff framework and does not try to be one.

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace lrcl {

class Tape {
 public:
  struct NodeRef {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  void clear() { nodes_.clear(); }
  int size() const { return static_cast<int>(nodes_.size()); }

  // ---- leaves -------------------------------------------------------------

  NodeRef constant(Eigen::MatrixXd v) { return push(std::move(v), false); }

  NodeRef leaf(Eigen::MatrixXd v, bool needs_grad = true) {
    return push(std::move(v), needs_grad);
  }

  // Zero-copy leaf over caller-owned storage.
  NodeRef leaf_external(const Eigen::MatrixXd* v, bool needs_grad = true) {
    Node n;
    n.external = v;
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return {size() - 1};
  }

  const Eigen::MatrixXd& value(NodeRef r) const { return val(r.id); }

  // Gradient of the last backward() target w.r.t. this node; zeros if the
  // node never influenced the target.
  Eigen::MatrixXd grad(NodeRef r) const {
    const Node& n = nodes_.at(r.id);
    if (n.grad.size() == 0) return Eigen::MatrixXd::Zero(val(r.id).rows(), val(r.id).cols());
    return n.grad;
  }

  // ---- ops ----------------------------------------------------------------

  NodeRef matmul(NodeRef a, NodeRef b) {
    if (val(a.id).cols() != val(b.id).rows())
      throw std::invalid_argument("tape matmul: inner dimensions disagree");
    NodeRef out = push(val(a.id) * val(b.id), needs(a.id) || needs(b.id));
    if (nodes_[out.id].needs_grad)
      set_back(out, [a, b, out](Tape& t) {
        const Eigen::MatrixXd& g = t.nodes_[out.id].grad;
        if (t.needs(a.id)) t.accumulate(a.id, g * t.val(b.id).transpose());
        if (t.needs(b.id)) t.accumulate(b.id, t.val(a.id).transpose() * g);
      });
    return out;
  }

  NodeRef add(NodeRef a, NodeRef b) {
    if (val(a.id).rows() != val(b.id).rows() || val(a.id).cols() != val(b.id).cols())
      throw std::invalid_argument("tape add: shape mismatch");
    NodeRef out = push(val(a.id) + val(b.id), needs(a.id) || needs(b.id));
    if (nodes_[out.id].needs_grad)
      set_back(out, [a, b, out](Tape& t) {
        const Eigen::MatrixXd& g = t.nodes_[out.id].grad;
        if (t.needs(a.id)) t.accumulate(a.id, g);
        if (t.needs(b.id)) t.accumulate(b.id, g);
      });
    return out;
  }

  NodeRef scale(NodeRef a, double c) {
    NodeRef out = push(c * val(a.id), needs(a.id));
    if (nodes_[out.id].needs_grad)
      set_back(out, [a, c, out](Tape& t) { t.accumulate(a.id, c * t.nodes_[out.id].grad); });
    return out;
  }

  NodeRef relu(NodeRef a) {
    NodeRef out = push(val(a.id).cwiseMax(0.0), needs(a.id));
    if (nodes_[out.id].needs_grad)
      set_back(out, [a, out](Tape& t) {
        // Subgradient 0 at exactly 0: pass gradient only where the output is positive.
        const Eigen::ArrayXXd open = (t.val(out.id).array() > 0.0).cast<double>();
        t.accumulate(a.id, (t.nodes_[out.id].grad.array() * open).matrix());
      });
    return out;
  }

  // Elementwise product with a fixed matrix (pruning masks).
  NodeRef hadamard_const(NodeRef a, Eigen::MatrixXd m) {
    if (val(a.id).rows() != m.rows() || val(a.id).cols() != m.cols())
      throw std::invalid_argument("tape hadamard: shape mismatch");
    NodeRef out = push(val(a.id).cwiseProduct(m), needs(a.id));
    if (nodes_[out.id].needs_grad)
      set_back(out, [a, out, m = std::move(m)](Tape& t) {
        t.accumulate(a.id, t.nodes_[out.id].grad.cwiseProduct(m));
      });
    return out;
  }

  // Same, but the mask lives in caller-owned storage (no copy).
  NodeRef hadamard_external(NodeRef a, const Eigen::MatrixXd* m) {
    if (val(a.id).rows() != m->rows() || val(a.id).cols() != m->cols())
      throw std::invalid_argument("tape hadamard: shape mismatch");
    NodeRef out = push(val(a.id).cwiseProduct(*m), needs(a.id));
    if (nodes_[out.id].needs_grad)
      set_back(out, [a, out, m](Tape& t) {
        t.accumulate(a.id, t.nodes_[out.id].grad.cwiseProduct(*m));
      });
    return out;
  }

  // Per-column elementwise scale: out.col(c) = v .* x.col(c), v is n x 1.
  NodeRef cwise_scale_cols(NodeRef v, NodeRef x) {
    if (val(v.id).cols() != 1 || val(v.id).rows() != val(x.id).rows())
      throw std::invalid_argument("tape cwise_scale: v must be a column matching x rows");
    Eigen::MatrixXd out_v =
        (val(x.id).array().colwise() * val(v.id).col(0).array()).matrix();
    NodeRef out = push(std::move(out_v), needs(v.id) || needs(x.id));
    if (nodes_[out.id].needs_grad)
      set_back(out, [v, x, out](Tape& t) {
        const Eigen::MatrixXd& g = t.nodes_[out.id].grad;
        if (t.needs(x.id))
          t.accumulate(x.id, (g.array().colwise() * t.val(v.id).col(0).array()).matrix());
        if (t.needs(v.id))
          t.accumulate(v.id, g.cwiseProduct(t.val(x.id)).rowwise().sum());
      });
    return out;
  }

  // Per-column L2 normalization: out.col(c) = x.col(c) / ||x.col(c)||.
  NodeRef l2_normalize_cols(NodeRef x) {
    const Eigen::MatrixXd& xv = val(x.id);
    Eigen::VectorXd norms(xv.cols());
    Eigen::MatrixXd out_v(xv.rows(), xv.cols());
    for (Eigen::Index c = 0; c < xv.cols(); ++c) {
      const double n = xv.col(c).norm();
      if (!(n > 1e-150)) throw std::runtime_error("tape l2_normalize: zero column");
      norms(c) = n;
      out_v.col(c) = xv.col(c) / n;
    }
    NodeRef out = push(std::move(out_v), needs(x.id));
    if (nodes_[out.id].needs_grad)
      set_back(out, [x, out, norms = std::move(norms)](Tape& t) {
        const Eigen::MatrixXd& g = t.nodes_[out.id].grad;
        const Eigen::MatrixXd& y = t.val(out.id);
        Eigen::MatrixXd gx(g.rows(), g.cols());
        for (Eigen::Index c = 0; c < g.cols(); ++c)
          gx.col(c) = (g.col(c) - y.col(c) * y.col(c).dot(g.col(c))) / norms(c);
        t.accumulate(x.id, std::move(gx));
      });
    return out;
  }

  // Per-column layer norm with affine parameters (gamma, beta are n x 1).
  NodeRef layer_norm_cols(NodeRef x, NodeRef gamma, NodeRef beta, double eps) {
    const Eigen::MatrixXd& xv = val(x.id);
    const Eigen::Index n = xv.rows();
    if (val(gamma.id).rows() != n || val(beta.id).rows() != n ||
        val(gamma.id).cols() != 1 || val(beta.id).cols() != 1)
      throw std::invalid_argument("tape layer_norm: affine params must be n x 1");
    Eigen::MatrixXd xhat(xv.rows(), xv.cols());
    Eigen::VectorXd inv_std(xv.cols());
    for (Eigen::Index c = 0; c < xv.cols(); ++c) {
      const double mu = xv.col(c).mean();
      const double var = (xv.col(c).array() - mu).square().mean();
      const double inv = 1.0 / std::sqrt(var + eps);
      inv_std(c) = inv;
      xhat.col(c) = (xv.col(c).array() - mu).matrix() * inv;
    }
    Eigen::MatrixXd out_v =
        (xhat.array().colwise() * val(gamma.id).col(0).array()).matrix();
    out_v.colwise() += val(beta.id).col(0);
    NodeRef out =
        push(std::move(out_v), needs(x.id) || needs(gamma.id) || needs(beta.id));
    if (nodes_[out.id].needs_grad)
      set_back(out, [x, gamma, beta, out, xhat = std::move(xhat),
                     inv_std = std::move(inv_std)](Tape& t) {
        const Eigen::MatrixXd& g = t.nodes_[out.id].grad;
        const Eigen::Index n = g.rows();
        if (t.needs(gamma.id)) t.accumulate(gamma.id, g.cwiseProduct(xhat).rowwise().sum());
        if (t.needs(beta.id)) t.accumulate(beta.id, g.rowwise().sum());
        if (t.needs(x.id)) {
          Eigen::MatrixXd gx(g.rows(), g.cols());
          for (Eigen::Index c = 0; c < g.cols(); ++c) {
            const Eigen::VectorXd dxhat =
                g.col(c).cwiseProduct(t.val(gamma.id).col(0));
            const double mean_dxhat = dxhat.mean();
            const double mean_dxhat_xhat = dxhat.dot(xhat.col(c)) / n;
            gx.col(c) = inv_std(c) * (dxhat.array() - mean_dxhat -
                                      xhat.col(c).array() * mean_dxhat_xhat)
                                         .matrix();
          }
          t.accumulate(x.id, std::move(gx));
        }
      });
    return out;
  }

  // Per-column LERP with a learned n x 1 coefficient: (1 - b) .* h + b .* ht.
  NodeRef lerp_cols(NodeRef h, NodeRef ht, NodeRef b) {
    const Eigen::MatrixXd& hv = val(h.id);
    if (val(b.id).cols() != 1 || val(b.id).rows() != hv.rows())
      throw std::invalid_argument("tape lerp: coefficient must be a column matching rows");
    if (val(ht.id).rows() != hv.rows() || val(ht.id).cols() != hv.cols())
      throw std::invalid_argument("tape lerp: shape mismatch");
    const Eigen::ArrayXd bc = val(b.id).col(0).array();
    Eigen::MatrixXd out_v = (hv.array().colwise() * (1.0 - bc)).matrix() +
                            (val(ht.id).array().colwise() * bc).matrix();
    NodeRef out = push(std::move(out_v), needs(h.id) || needs(ht.id) || needs(b.id));
    if (nodes_[out.id].needs_grad)
      set_back(out, [h, ht, b, out](Tape& t) {
        const Eigen::MatrixXd& g = t.nodes_[out.id].grad;
        const Eigen::ArrayXd bc = t.val(b.id).col(0).array();
        if (t.needs(h.id))
          t.accumulate(h.id, (g.array().colwise() * (1.0 - bc)).matrix());
        if (t.needs(ht.id)) t.accumulate(ht.id, (g.array().colwise() * bc).matrix());
        if (t.needs(b.id))
          t.accumulate(b.id,
                       g.cwiseProduct(t.val(ht.id) - t.val(h.id)).rowwise().sum());
      });
    return out;
  }

  // Batched squared-error loss over a 1 x P row of predictions, with
  // precomputed per-column sample counts and target sums:
  //   loss = (0.5/denom) * sum_p (counts_p q_p^2 - 2 q_p ysum_p) + 0.5*ysq/denom
  // which equals the mean of 0.5(q - y)^2 over the underlying batch.
  NodeRef weighted_quadratic_loss(NodeRef q, Eigen::VectorXd counts,
                                  Eigen::VectorXd ysum, double ysq, double denom) {
    const Eigen::MatrixXd& qv = val(q.id);
    if (qv.rows() != 1 || qv.cols() != counts.size() || counts.size() != ysum.size())
      throw std::invalid_argument("tape quadratic loss: shape mismatch");
    const Eigen::ArrayXd qa = qv.row(0).transpose().array();
    const double v =
        0.5 / denom *
        ((counts.array() * qa.square() - 2.0 * qa * ysum.array()).sum() + ysq);
    NodeRef out = push(Eigen::MatrixXd::Constant(1, 1, v), needs(q.id));
    if (nodes_[out.id].needs_grad)
      set_back(out, [q, out, counts = std::move(counts), ysum = std::move(ysum),
                     denom](Tape& t) {
        const double g = t.nodes_[out.id].grad(0, 0);
        const Eigen::ArrayXd qa = t.val(q.id).row(0).transpose().array();
        Eigen::MatrixXd gq(1, qa.size());
        gq.row(0) =
            (g / denom * (counts.array() * qa - ysum.array())).matrix().transpose();
        t.accumulate(q.id, std::move(gq));
      });
    return out;
  }

  // Weighted softmax cross-entropy over columns.  targets holds per-column
  // accumulated target mass (column sums equal counts), counts the number of
  // batch samples that hit each column:
  //   loss = (1/denom) * sum_c (counts_c * logsumexp_c - <targets_c, logits_c>)
  NodeRef softmax_cross_entropy_cols(NodeRef logits, Eigen::MatrixXd targets,
                                     Eigen::VectorXd counts, double denom) {
    const Eigen::MatrixXd& lv = val(logits.id);
    if (lv.rows() != targets.rows() || lv.cols() != targets.cols() ||
        counts.size() != lv.cols())
      throw std::invalid_argument("tape cross entropy: shape mismatch");
    if (!lv.allFinite()) throw std::runtime_error("tape cross entropy: non-finite logits");
    Eigen::MatrixXd softmax(lv.rows(), lv.cols());
    double loss = 0.0;
    for (Eigen::Index c = 0; c < lv.cols(); ++c) {
      const double m = lv.col(c).maxCoeff();
      const Eigen::ArrayXd ex = (lv.col(c).array() - m).exp();
      const double sum = ex.sum();
      softmax.col(c) = (ex / sum).matrix();
      loss += counts(c) * (std::log(sum) + m) - targets.col(c).dot(lv.col(c));
    }
    NodeRef out = push(Eigen::MatrixXd::Constant(1, 1, loss / denom), needs(logits.id));
    if (nodes_[out.id].needs_grad)
      set_back(out, [logits, out, targets = std::move(targets),
                     counts = std::move(counts), softmax = std::move(softmax),
                     denom](Tape& t) {
        const double g = t.nodes_[out.id].grad(0, 0);
        Eigen::MatrixXd gl =
            (softmax.array().rowwise() * counts.transpose().array()).matrix() - targets;
        t.accumulate(logits.id, (g / denom) * gl);
      });
    return out;
  }

  NodeRef sum_all(NodeRef x) {
    NodeRef out = push(Eigen::MatrixXd::Constant(1, 1, val(x.id).sum()), needs(x.id));
    if (nodes_[out.id].needs_grad)
      set_back(out, [x, out](Tape& t) {
        t.accumulate(x.id, Eigen::MatrixXd::Constant(t.val(x.id).rows(),
                                                     t.val(x.id).cols(),
                                                     t.nodes_[out.id].grad(0, 0)));
      });
    return out;
  }

  // ---- backward -----------------------------------------------------------

  void backward(NodeRef loss) {
    if (!loss.valid() || loss.id >= size()) throw std::invalid_argument("tape: bad loss node");
    if (val(loss.id).rows() != 1 || val(loss.id).cols() != 1)
      throw std::invalid_argument("tape: backward target must be scalar");
    for (Node& n : nodes_) n.grad.resize(0, 0);
    nodes_[loss.id].grad = Eigen::MatrixXd::Ones(1, 1);
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.back && n.grad.size() != 0) n.back(*this);
    }
  }

 private:
  struct Node {
    Eigen::MatrixXd storage;
    const Eigen::MatrixXd* external = nullptr;
    Eigen::MatrixXd grad;
    bool needs_grad = false;
    std::function<void(Tape&)> back;
  };

  const Eigen::MatrixXd& val(int id) const {
    const Node& n = nodes_.at(id);
    return n.external ? *n.external : n.storage;
  }

  bool needs(int id) const { return nodes_[id].needs_grad; }

  NodeRef push(Eigen::MatrixXd v, bool needs_grad) {
    Node n;
    n.storage = std::move(v);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return {size() - 1};
  }

  void set_back(NodeRef r, std::function<void(Tape&)> fn) {
    nodes_[r.id].back = std::move(fn);
  }

  void accumulate(int id, Eigen::MatrixXd g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0)
      n.grad = std::move(g);
    else
      n.grad += g;
  }

  std::vector<Node> nodes_;
};

}  // namespace lrcl
