#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lrcl/rl_targets.hpp"
#include "lrcl/rng.hpp"

using namespace lrcl;

namespace {
Eigen::VectorXd vec1(double v) {
  Eigen::VectorXd out(1);
  out << v;
  return out;
}
}  // namespace

TEST_CASE("entropy-regularized target: worked values") {
  TargetInputs t;
  t.r = 1.0;
  t.gamma = 0.5;
  t.n = 1;
  t.m = 1.0;
  t.q_agg = 2.0;
  t.alpha_ent = 0.0;
  REQUIRE(sac_target(t) == Catch::Approx(2.0).margin(1e-12));

  t.m = 0.0;  // terminal: the bootstrap vanishes entirely
  REQUIRE(sac_target(t) == 1.0);
  t.logp = -100.0;
  t.alpha_ent = 5.0;
  REQUIRE(sac_target(t) == 1.0);

  TargetInputs u;
  u.r = 0.0;
  u.gamma = 0.97;
  u.n = 1;
  u.m = 1.0;
  u.q_agg = 1.0;
  u.alpha_ent = 0.1;
  u.logp = -2.0;
  REQUIRE(sac_target(u) == Catch::Approx(1.164).margin(1e-12));
}

TEST_CASE("deterministic target: worked values") {
  TargetInputs t;
  t.r = 3.25;
  t.m = 0.0;
  t.q_agg = 1e9;
  REQUIRE(td3_target(t) == 3.25);

  TargetInputs u;
  u.r = 1.0;
  u.gamma = 0.5;
  u.n = 2;
  u.m = 1.0;
  u.q_agg = 4.0;
  REQUIRE(td3_target(u) == Catch::Approx(2.0).margin(1e-12));
}

TEST_CASE("zero entropy coefficient collapses one target onto the other") {
  Rng rng(61);
  for (int i = 0; i < 200; ++i) {
    TargetInputs t;
    t.r = rng.uniform(-5.0, 5.0);
    t.gamma = rng.uniform(0.01, 1.0);
    t.n = 1 + static_cast<int>(rng.uniform_int(4));
    t.m = rng.uniform_int(2) == 0 ? 0.0 : 1.0;
    t.q_agg = rng.uniform(-10.0, 10.0);
    t.alpha_ent = 0.0;
    t.logp = rng.uniform(-8.0, 8.0);  // must be ignored
    REQUIRE(sac_target(t) == td3_target(t));
  }
}

TEST_CASE("targets are monotone in the bootstrap value while continuing") {
  Rng rng(62);
  for (int i = 0; i < 200; ++i) {
    TargetInputs lo;
    lo.r = rng.uniform(-2.0, 2.0);
    lo.gamma = rng.uniform(0.05, 1.0);
    lo.n = 1 + static_cast<int>(rng.uniform_int(3));
    lo.m = 1.0;
    lo.q_agg = rng.uniform(-4.0, 4.0);
    TargetInputs hi = lo;
    hi.q_agg = lo.q_agg + rng.uniform(0.1, 3.0);
    REQUIRE(td3_target(hi) > td3_target(lo));
    REQUIRE(sac_target(hi) > sac_target(lo));
  }
}

TEST_CASE("target input validation") {
  TargetInputs t;
  t.gamma = 0.0;
  REQUIRE_THROWS_AS(td3_target(t), std::invalid_argument);
  t.gamma = 1.5;
  REQUIRE_THROWS_AS(td3_target(t), std::invalid_argument);
  t.gamma = 1.0;  // undiscounted is allowed
  REQUIRE_NOTHROW(t.validate());
  t.m = 0.5;
  REQUIRE_THROWS_AS(sac_target(t), std::invalid_argument);
  t.m = 1.0;
  t.n = 0;
  REQUIRE_THROWS_AS(sac_target(t), std::invalid_argument);
}

TEST_CASE("smoothed action: zero noise reduces to a clipped mean") {
  REQUIRE(td3_smoothed_action(vec1(0.3), vec1(0.0), 1.0, 0.5, -1.0, 1.0)(0) == 0.3);
  REQUIRE(td3_smoothed_action(vec1(4.0), vec1(0.0), 1.0, 0.5, -1.0, 1.0)(0) == 1.0);
  REQUIRE(td3_smoothed_action(vec1(-4.0), vec1(0.0), 1.0, 0.5, -1.0, 1.0)(0) == -1.0);
}

TEST_CASE("smoothed action: noise clip binds before the action clip") {
  // Noise 0.7 clipped to 0.5, mean 0: lands inside the action range.
  REQUIRE(td3_smoothed_action(vec1(0.0), vec1(0.7), 1.0, 0.5, -1.0, 1.0)(0) ==
          Catch::Approx(0.5).margin(1e-15));
  // Mean 0.9 plus modest noise 0.3: the action clip takes over at 1.0.
  REQUIRE(td3_smoothed_action(vec1(0.9), vec1(0.3), 1.0, 0.5, -1.0, 1.0)(0) ==
          Catch::Approx(1.0).margin(1e-15));
  // Negative side, with the noise scale doing the multiplication.
  REQUIRE(td3_smoothed_action(vec1(0.0), vec1(-7.0), 0.1, 0.5, -1.0, 1.0)(0) ==
          Catch::Approx(-0.5).margin(1e-15));
}

TEST_CASE("smoothed action: elementwise over a vector") {
  Eigen::VectorXd mu(4), eps(4);
  mu << 0.0, 0.9, -0.9, 2.0;
  eps << 0.7, 0.3, -0.3, 0.0;
  const Eigen::VectorXd got = td3_smoothed_action(mu, eps, 1.0, 0.5, -1.0, 1.0);
  Eigen::VectorXd want(4);
  want << 0.5, 1.0, -1.0, 1.0;
  REQUIRE((got - want).lpNorm<Eigen::Infinity>() < 1e-15);

  // Each coordinate matches its own scalar evaluation.
  for (int i = 0; i < 4; ++i)
    REQUIRE(got(i) ==
            td3_smoothed_action(vec1(mu(i)), vec1(eps(i)), 1.0, 0.5, -1.0, 1.0)(0));
}

TEST_CASE("smoothed action: argument validation") {
  REQUIRE_THROWS_AS(td3_smoothed_action(vec1(0.0), Eigen::VectorXd::Zero(2), 1.0, 0.5,
                                        -1.0, 1.0),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(td3_smoothed_action(vec1(0.0), vec1(0.0), 1.0, 0.0, -1.0, 1.0),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(td3_smoothed_action(vec1(0.0), vec1(0.0), 1.0, -0.5, -1.0, 1.0),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(td3_smoothed_action(vec1(0.0), vec1(0.0), 1.0, 0.5, 1.0, 1.0),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(td3_smoothed_action(vec1(0.0), vec1(0.0), 1.0, 0.5, 2.0, -2.0),
                    std::invalid_argument);
}
