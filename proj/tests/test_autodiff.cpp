#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lrcl/autodiff.hpp"
#include "lrcl/grad_check.hpp"
#include "lrcl/registry.hpp"
#include "lrcl/rng.hpp"

using namespace lrcl;

TEST_CASE("quadratic-through-matmul gradient is the classic outer product") {
  // loss = 0.5 * sum_p (W x)_p^2  =>  dloss/dW = (W x) x^T
  Rng rng(3);
  const Eigen::MatrixXd w = rng.normal_matrix(1, 4);
  const Eigen::MatrixXd x = rng.normal_matrix(4, 6);

  Tape t;
  Tape::NodeRef wn = t.leaf(w);
  Tape::NodeRef q = t.matmul(wn, t.constant(x));
  Tape::NodeRef loss = t.weighted_quadratic_loss(q, Eigen::VectorXd::Ones(6),
                                                 Eigen::VectorXd::Zero(6), 0.0, 1.0);
  const double expected_loss = 0.5 * (w * x).squaredNorm();
  REQUIRE(t.value(loss)(0, 0) == Catch::Approx(expected_loss).margin(1e-14));

  t.backward(loss);
  const Eigen::MatrixXd want = (w * x) * x.transpose();
  REQUIRE((t.grad(wn) - want).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("relu passes no gradient where the output is zero") {
  Tape t;
  Eigen::MatrixXd w(1, 3);
  w << -1.0, 0.0, 2.0;
  Tape::NodeRef wn = t.leaf(w);
  Tape::NodeRef r = t.relu(wn);
  // dL/dq_p = q_p - 1 at each coordinate, so the pre-relu gradient would be
  // nonzero everywhere if relu let it through.
  Tape::NodeRef loss = t.weighted_quadratic_loss(r, Eigen::VectorXd::Ones(3),
                                                 Eigen::VectorXd::Ones(3), 3.0, 1.0);
  t.backward(loss);
  const Eigen::MatrixXd g = t.grad(wn);
  REQUIRE(g(0, 0) == 0.0);  // negative input, relu closed
  REQUIRE(g(0, 1) == 0.0);  // exactly zero input, subgradient 0 chosen
  REQUIRE(g(0, 2) == 1.0);  // (q - 1) = 1 flows through
}

TEST_CASE("sum_all and scale compose linearly") {
  Tape t;
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(2, 3);
  Tape::NodeRef xn = t.leaf(x);
  Tape::NodeRef loss = t.sum_all(t.scale(xn, 2.5));
  REQUIRE(t.value(loss)(0, 0) == 15.0);
  t.backward(loss);
  REQUIRE((t.grad(xn).array() == 2.5).all());
}

TEST_CASE("hadamard with an external mask blocks masked gradients") {
  Tape t;
  Eigen::MatrixXd w = Eigen::MatrixXd::Ones(2, 2);
  Eigen::MatrixXd mask(2, 2);
  mask << 1, 0, 0, 1;
  Tape::NodeRef wn = t.leaf(w);
  Tape::NodeRef masked = t.hadamard_external(wn, &mask);
  Tape::NodeRef loss = t.sum_all(masked);
  REQUIRE(t.value(loss)(0, 0) == 2.0);
  t.backward(loss);
  REQUIRE((t.grad(wn) - mask).lpNorm<Eigen::Infinity>() == 0.0);

  Eigen::MatrixXd bad = Eigen::MatrixXd::Ones(3, 2);
  REQUIRE_THROWS(t.hadamard_external(wn, &bad));
}

TEST_CASE("frozen leaves accumulate no gradient") {
  ParamRegistry reg;
  Rng rng(5);
  const int w_id = reg.add("w", rng.normal_matrix(1, 3), ParamKind::Trainable);
  const int f_id = reg.add("base", rng.normal_matrix(1, 3), ParamKind::Frozen);

  Tape t;
  TapeLeaves leaves = bind_leaves(t, reg);
  Tape::NodeRef q = t.add(leaves.node[w_id], leaves.node[f_id]);
  Tape::NodeRef loss = t.weighted_quadratic_loss(q, Eigen::VectorXd::Ones(3),
                                                 Eigen::VectorXd::Zero(3), 0.0, 1.0);
  t.backward(loss);
  const auto grads = collect_grads(t, reg, leaves);
  REQUIRE(grads[w_id].size() == 3);
  REQUIRE(grads[w_id].allFinite());
  REQUIRE(grads[f_id].size() == 0);  // frozen: never collected
  REQUIRE(t.grad(leaves.node[f_id]).isZero(0.0));
}

TEST_CASE("backward rejects non-scalar targets and invalid nodes") {
  Tape t;
  Tape::NodeRef m = t.leaf(Eigen::MatrixXd::Ones(2, 2));
  REQUIRE_THROWS(t.backward(m));
  REQUIRE_THROWS(t.backward(Tape::NodeRef{}));
}

TEST_CASE("l2 normalization rejects a zero column") {
  Tape t;
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(3, 2);
  x(0, 0) = 1.0;
  Tape::NodeRef xn = t.leaf(x);
  REQUIRE_THROWS(t.l2_normalize_cols(xn));
}

TEST_CASE("shape validation on binary ops") {
  Tape t;
  Tape::NodeRef a = t.leaf(Eigen::MatrixXd::Ones(2, 3));
  Tape::NodeRef b = t.leaf(Eigen::MatrixXd::Ones(3, 3));
  REQUIRE_THROWS(t.add(a, b));
  REQUIRE_THROWS(t.matmul(b, a));  // 3x3 * 2x3
  Tape::NodeRef v = t.leaf(Eigen::MatrixXd::Ones(3, 1));
  REQUIRE_THROWS(t.cwise_scale_cols(v, a));                  // row mismatch
  REQUIRE_THROWS(t.lerp_cols(a, b, v));                      // shape mismatch
  REQUIRE_THROWS(t.layer_norm_cols(a, v, v, 1e-5));          // gamma rows != 2
  REQUIRE_THROWS(t.weighted_quadratic_loss(a, Eigen::VectorXd::Ones(3),
                                           Eigen::VectorXd::Zero(3), 0.0, 1.0));
}

namespace {

// Full-graph finite-difference check over a composite that uses every
// structured op at least once.
GradCheckResult run_composite_check(bool categorical) {
  Rng rng(categorical ? 41 : 40, "weights");
  ParamRegistry reg;
  const int P = 5;
  const int a_id = reg.add("a", rng.normal_matrix(3, 4, 0.7), ParamKind::Trainable);
  const int v_id = reg.add("v", rng.normal_matrix(3, 1, 0.5), ParamKind::Adapter);
  const int g_id = reg.add("gamma", Eigen::MatrixXd::Ones(3, 1) +
                                        0.1 * rng.normal_matrix(3, 1),
                           ParamKind::Trainable);
  const int be_id = reg.add("beta", 0.1 * rng.normal_matrix(3, 1), ParamKind::Trainable);
  Eigen::MatrixXd lerp_coef(3, 1);
  lerp_coef << 0.3, 0.5, 0.7;
  const int l_id = reg.add("mix", lerp_coef, ParamKind::Trainable);
  const int head_rows = categorical ? 4 : 1;
  const int h_id = reg.add("head", rng.normal_matrix(head_rows, 3, 0.6),
                           ParamKind::Trainable);
  reg.add("frozen", rng.normal_matrix(2, 2), ParamKind::Frozen);

  static const Eigen::MatrixXd x = Rng(11).normal_matrix(4, P);
  static const Eigen::MatrixXd mask =
      (Eigen::MatrixXd(3, 4) << 1, 1, 0, 1, 0, 1, 1, 1, 1, 0, 1, 1).finished();

  Eigen::VectorXd counts(P);
  counts << 2, 0, 1, 3, 1;
  Eigen::VectorXd ysum(P);
  ysum << 0.5, 0.0, -0.2, 1.0, 0.4;
  Eigen::MatrixXd target_mass = Eigen::MatrixXd::Zero(4, P);
  if (categorical) {
    Rng trng(9);
    for (int p = 0; p < P; ++p) {
      if (counts(p) == 0.0) continue;
      Eigen::VectorXd m(4);
      for (int i = 0; i < 4; ++i) m(i) = trng.uniform();
      target_mass.col(p) = counts(p) * m / m.sum();
    }
  }

  auto make_loss = [&, categorical](Tape& t, const TapeLeaves& leaves) {
    Tape::NodeRef masked = t.hadamard_external(leaves.node[a_id], &mask);
    Tape::NodeRef h = t.relu(t.matmul(masked, t.constant(x)));
    Tape::NodeRef hs = t.cwise_scale_cols(leaves.node[v_id], h);
    Tape::NodeRef mixed = t.add(hs, t.scale(h, 0.25));
    Tape::NodeRef ln = t.layer_norm_cols(mixed, leaves.node[g_id], leaves.node[be_id], 1e-5);
    Tape::NodeRef nrm = t.l2_normalize_cols(ln);
    Tape::NodeRef lerped = t.lerp_cols(nrm, ln, leaves.node[l_id]);
    Tape::NodeRef out = t.matmul(leaves.node[h_id], lerped);
    if (categorical)
      return t.softmax_cross_entropy_cols(out, target_mass, counts, 7.0);
    return t.weighted_quadratic_loss(out, counts, ysum, 0.9, 7.0);
  };

  return check_gradients(reg, make_loss);
}

}  // namespace

TEST_CASE("composite graph matches central finite differences, scalar loss") {
  const GradCheckResult r = run_composite_check(false);
  INFO("max relative error " << r.max_rel << " worst at " << r.worst);
  REQUIRE(r.coords_checked > 0);
  REQUIRE(r.ok);
}

TEST_CASE("composite graph matches central finite differences, cross-entropy loss") {
  const GradCheckResult r = run_composite_check(true);
  INFO("max relative error " << r.max_rel << " worst at " << r.worst);
  REQUIRE(r.coords_checked > 0);
  REQUIRE(r.ok);
}

TEST_CASE("weighted quadratic loss equals the averaged batch loss") {
  // counts/ysum/ysq form: loss must equal mean over the expanded batch of
  // 0.5 * (q_p - y_i)^2 with the matching multiplicities.
  Tape t;
  Eigen::MatrixXd q(1, 3);
  q << 0.5, -1.0, 2.0;
  // Batch: pair 0 twice with targets {1, 0}, pair 2 once with target 3.
  Eigen::VectorXd counts(3), ysum(3);
  counts << 2, 0, 1;
  ysum << 1.0, 0.0, 3.0;
  const double ysq = 1.0 * 1.0 + 0.0 * 0.0 + 3.0 * 3.0;
  Tape::NodeRef qn = t.leaf(q);
  Tape::NodeRef loss = t.weighted_quadratic_loss(qn, counts, ysum, ysq, 3.0);
  const double direct = (0.5 * (0.5 - 1.0) * (0.5 - 1.0) +
                         0.5 * (0.5 - 0.0) * (0.5 - 0.0) +
                         0.5 * (2.0 - 3.0) * (2.0 - 3.0)) /
                        3.0;
  REQUIRE(t.value(loss)(0, 0) == Catch::Approx(direct).margin(1e-14));

  t.backward(loss);
  // d/dq_p = (counts_p q_p - ysum_p) / denom
  const Eigen::MatrixXd g = t.grad(qn);
  REQUIRE(g(0, 0) == Catch::Approx((2 * 0.5 - 1.0) / 3.0).margin(1e-15));
  REQUIRE(g(0, 1) == Catch::Approx(0.0).margin(1e-15));
  REQUIRE(g(0, 2) == Catch::Approx((2.0 - 3.0) / 3.0).margin(1e-15));
}

TEST_CASE("cross entropy gradient is weighted softmax minus target mass") {
  Tape t;
  Rng rng(6);
  const Eigen::MatrixXd logits = rng.normal_matrix(4, 2);
  Eigen::VectorXd counts(2);
  counts << 3, 1;
  Eigen::MatrixXd targets(4, 2);
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd m(4);
    for (int i = 0; i < 4; ++i) m(i) = rng.uniform();
    targets.col(c) = counts(c) * m / m.sum();
  }
  Tape::NodeRef ln = t.leaf(logits);
  Tape::NodeRef loss = t.softmax_cross_entropy_cols(ln, targets, counts, 4.0);
  t.backward(loss);

  Eigen::MatrixXd want(4, 2);
  for (int c = 0; c < 2; ++c) {
    const Eigen::ArrayXd ex = (logits.col(c).array() - logits.col(c).maxCoeff()).exp();
    want.col(c) = (counts(c) * (ex / ex.sum()).matrix() - targets.col(c)) / 4.0;
  }
  REQUIRE((t.grad(ln) - want).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("tape clear resets node storage") {
  Tape t;
  t.leaf(Eigen::MatrixXd::Ones(1, 1));
  REQUIRE(t.size() == 1);
  t.clear();
  REQUIRE(t.size() == 0);
}
