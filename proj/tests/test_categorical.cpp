#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lrcl/categorical.hpp"
#include "lrcl/checks.hpp"
#include "lrcl/rng.hpp"

using namespace lrcl;

TEST_CASE("atom grid: endpoints exact, spacing uniform") {
  const ValueSupport sup{-1.0, 2.0, 51};
  const Eigen::VectorXd z = sup.atoms();
  REQUIRE(z.size() == 51);
  REQUIRE(z(0) == -1.0);
  REQUIRE(z(50) == 2.0);  // top endpoint is pinned, not accumulated
  REQUIRE(sup.spacing() == Catch::Approx(0.06).margin(1e-15));
  for (int i = 0; i + 1 < 51; ++i)
    REQUIRE(z(i + 1) - z(i) == Catch::Approx(0.06).margin(1e-12));
  for (int i = 0; i + 1 < 51; ++i) REQUIRE(z(i) < z(i + 1));

  REQUIRE_THROWS(ValueSupport{0.0, 1.0, 1}.validate());
  REQUIRE_THROWS(ValueSupport{1.0, 1.0, 51}.validate());
  REQUIRE_THROWS(ValueSupport{2.0, -1.0, 51}.validate());
}

TEST_CASE("softmax: uniform logits, saturation, shift invariance") {
  Eigen::VectorXd equal = Eigen::VectorXd::Zero(4);
  const Eigen::VectorXd p = logits_to_probs(equal);
  for (int i = 0; i < 4; ++i) REQUIRE(p(i) == 0.25);

  Eigen::VectorXd extreme(2);
  extreme << 1000.0, 0.0;
  const Eigen::VectorXd q = logits_to_probs(extreme);
  REQUIRE(std::isfinite(q(0)));
  REQUIRE(q(0) == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(q(1) == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(q.sum() == Catch::Approx(1.0).margin(1e-15));

  Rng rng(2);
  const Eigen::VectorXd logits = rng.normal_matrix(7, 1).col(0);
  const Eigen::VectorXd shifted = logits.array() + 5.0;
  REQUIRE((logits_to_probs(logits) - logits_to_probs(shifted)).lpNorm<Eigen::Infinity>() <
          1e-15);

  Eigen::VectorXd bad(2);
  bad << std::numeric_limits<double>::infinity(), 0.0;
  REQUIRE_THROWS(logits_to_probs(bad));
}

TEST_CASE("expectation contracts the grid against the probabilities") {
  const ValueSupport two{0.0, 10.0, 2};
  Eigen::VectorXd probs(2);
  probs << 0.3, 0.7;
  REQUIRE(expectation(probs, two) == 7.0);

  Eigen::VectorXd point = Eigen::VectorXd::Zero(51);
  point(0) = 1.0;
  const ValueSupport sup{-1.0, 2.0, 51};
  REQUIRE(expectation(point, sup) == -1.0);
  REQUIRE_THROWS(expectation(probs, sup));

  Eigen::MatrixXd batch(2, 2);
  batch.col(0) = probs;
  batch.col(1) << 1.0, 0.0;
  const Eigen::VectorXd e = expectation_columns(batch, two);
  REQUIRE(e(0) == 7.0);
  REQUIRE(e(1) == 0.0);
}

TEST_CASE("identity backup reproduces the input distribution bit-exactly") {
  Rng rng(13);
  const ValueSupport sup{-1.0, 2.0, 51};
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd probs(51);
    for (int i = 0; i < 51; ++i) probs(i) = rng.uniform();
    probs /= probs.sum();
    const Eigen::VectorXd out = c51_project(probs, 0.0, 1.0, sup);
    for (int i = 0; i < 51; ++i) REQUIRE(out(i) == probs(i));
  }
}

TEST_CASE("a backup landing between atoms splits mass linearly") {
  // Three atoms at -1, 0, 1; all mass on the middle one, pushed to 0.5.
  const ValueSupport sup{-1.0, 1.0, 3};
  Eigen::VectorXd probs(3);
  probs << 0.0, 1.0, 0.0;
  const Eigen::VectorXd out = c51_project(probs, 0.5, 1.0, sup);
  REQUIRE(out(0) == 0.0);
  REQUIRE(out(1) == 0.5);
  REQUIRE(out(2) == 0.5);
}

TEST_CASE("rewards beyond the grid pile onto the boundary atom") {
  const ValueSupport sup{-1.0, 1.0, 3};
  Eigen::VectorXd probs(3);
  probs << 0.0, 1.0, 0.0;
  const Eigen::VectorXd top = c51_project(probs, 10.0, 1.0, sup);
  REQUIRE(top(0) == 0.0);
  REQUIRE(top(1) == 0.0);
  REQUIRE(top(2) == 1.0);
  const Eigen::VectorXd bottom = c51_project(probs, -10.0, 1.0, sup);
  REQUIRE(bottom(0) == 1.0);

  REQUIRE_THROWS(c51_project(Eigen::VectorXd::Zero(2), 0.0, 1.0, sup));
}

TEST_CASE("projection conserves mass and matches the triangular-kernel oracle") {
  Rng rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    ValueSupport sup;
    sup.num_atoms = 2 + rng.uniform_int(50);
    sup.v_min = rng.uniform(-3.0, 0.0);
    sup.v_max = sup.v_min + rng.uniform(0.5, 4.0);
    Eigen::VectorXd probs(sup.num_atoms);
    for (int i = 0; i < sup.num_atoms; ++i) probs(i) = rng.uniform();
    probs /= probs.sum();
    const double r = rng.uniform(-2.0, 2.0);
    const double g = rng.uniform(0.0, 1.2);
    const Eigen::VectorXd out = c51_project(probs, r, g, sup);
    REQUIRE(std::abs(out.sum() - 1.0) < 1e-12);
    REQUIRE((out.array() >= 0.0).all());
    const Eigen::VectorXd ref = hat_projection_oracle(probs, r, g, sup);
    REQUIRE((out - ref).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("two-hot is the projection of a point mass") {
  const ValueSupport sup{-1.0, 2.0, 51};
  Rng rng(29);
  for (int trial = 0; trial < 200; ++trial) {
    const double y = rng.uniform(sup.v_min, sup.v_max);
    const Eigen::VectorXd enc = two_hot(y, sup);
    REQUIRE(std::abs(enc.sum() - 1.0) < 1e-15);
    REQUIRE(std::abs(expectation(enc, sup) - y) < 1e-12);
    REQUIRE((enc.array() > 0.0).count() <= 2);
  }
  // Values outside the range clamp to the boundary atom.
  const Eigen::VectorXd low = two_hot(-5.0, sup);
  REQUIRE(low(0) == 1.0);
  const Eigen::VectorXd high = two_hot(7.0, sup);
  REQUIRE(high(50) == 1.0);
  // An exact atom value produces a one-hot vector.
  const Eigen::VectorXd hit = two_hot(-1.0, sup);
  REQUIRE(hit(0) == 1.0);
  REQUIRE(hit.sum() == 1.0);
}

TEST_CASE("cross entropy: uniform case, zero-gradient case, finite differences") {
  Eigen::VectorXd logits = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd target(2);
  target << 0.5, 0.5;
  REQUIRE(cross_entropy_loss(logits, target) == Catch::Approx(std::log(2.0)).margin(1e-15));

  // When the target equals the prediction the gradient vanishes.
  Rng rng(31);
  Eigen::VectorXd pred = rng.normal_matrix(9, 1).col(0);
  Eigen::VectorXd grad;
  cross_entropy_loss(pred, logits_to_probs(pred), &grad);
  REQUIRE(grad.lpNorm<Eigen::Infinity>() < 1e-12);

  // Central finite differences on random instances.
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd x = rng.normal_matrix(7, 1).col(0);
    Eigen::VectorXd t(7);
    for (int i = 0; i < 7; ++i) t(i) = rng.uniform();
    t /= t.sum();
    Eigen::VectorXd g;
    cross_entropy_loss(x, t, &g);
    const double h = 1e-6;
    for (int i = 0; i < 7; ++i) {
      Eigen::VectorXd xp = x, xm = x;
      xp(i) += h;
      xm(i) -= h;
      const double fd = (cross_entropy_loss(xp, t) - cross_entropy_loss(xm, t)) / (2 * h);
      REQUIRE(std::abs(g(i) - fd) < 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }

  Eigen::VectorXd bad(2);
  bad << std::nan(""), 0.0;
  REQUIRE_THROWS(cross_entropy_loss(bad, target));
  REQUIRE_THROWS(cross_entropy_loss(logits, Eigen::VectorXd::Zero(3)));
}

TEST_CASE("categorical invariant suite passes") {
  const CheckReport report = check_categorical(2000);
  for (const auto& item : report.items) INFO(item.first << " -> " << item.second);
  REQUIRE(report.ok());
}
