#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lrcl/chain_mdp.hpp"
#include "lrcl/checks.hpp"

using namespace lrcl;

namespace {
ChainMDP default_mdp() { return ChainMDP{15, 2, 0.9, 0.97}; }
}  // namespace

TEST_CASE("transition probabilities: interior, wall, and pre-terminal moves") {
  const TransitionModel model(default_mdp());

  // Interior right move: succeed to s+1, otherwise stay put.
  REQUIRE(model.prob(5, kRight, 6) == 0.9);
  REQUIRE(model.prob(5, kRight, 5) == Catch::Approx(0.1).margin(1e-15));
  REQUIRE(model.prob(5, kRight, 4) == 0.0);

  // Left from the left wall always lands back on the wall.
  REQUIRE(model.prob(0, kLeft, 0) == 1.0);
  for (int next = 1; next < 15; ++next) REQUIRE(model.prob(0, kLeft, next) == 0.0);

  // Right from the right wall also stays.
  REQUIRE(model.prob(14, kRight, 14) == 1.0);

  REQUIRE(model.prob(13, kRight, 14) == 0.9);
  REQUIRE(model.prob(13, kRight, 13) == Catch::Approx(0.1).margin(1e-15));
}

TEST_CASE("every transition row is a probability distribution") {
  const ChainMDP mdp = default_mdp();
  const TransitionModel model(mdp);
  for (int a = 0; a < mdp.num_actions; ++a) {
    const Eigen::MatrixXd& p = model.action_matrix(a);
    REQUIRE((p.array() >= 0.0).all());
    for (int s = 0; s < mdp.num_states; ++s)
      REQUIRE(p.row(s).sum() == Catch::Approx(1.0).margin(1e-15));
  }
}

TEST_CASE("reward is earned only by attempting right from the second-to-last state") {
  const ChainMDP mdp = default_mdp();
  for (int s = 0; s < mdp.num_states; ++s)
    for (int a = 0; a < mdp.num_actions; ++a) {
      const double r = reward(mdp, s, a);
      if (s == 13 && a == kRight)
        REQUIRE(r == 0.9);
      else
        REQUIRE(r == 0.0);
    }
  const Eigen::MatrixXd table = reward_table(mdp);
  REQUIRE(table.sum() == 0.9);
  REQUIRE(table(13, kRight) == 0.9);
}

TEST_CASE("validation rejects malformed worlds") {
  REQUIRE_THROWS(ChainMDP{1, 2, 0.9, 0.97}.validate());
  REQUIRE_THROWS(ChainMDP{15, 3, 0.9, 0.97}.validate());
  REQUIRE_THROWS(ChainMDP{15, 2, 1.5, 0.97}.validate());
  REQUIRE_THROWS(ChainMDP{15, 2, 0.9, 1.0}.validate());
  REQUIRE_NOTHROW(default_mdp().validate());
}

TEST_CASE("vanishing discount collapses Q to the immediate reward") {
  ChainMDP mdp = default_mdp();
  mdp.discount = 1e-10;
  const Eigen::MatrixXd q = solve_true_q(mdp, Policy::always_right(mdp));
  const Eigen::MatrixXd r = reward_table(mdp);
  REQUIRE((q - r).lpNorm<Eigen::Infinity>() < 1e-9);
  REQUIRE(q(13, kRight) == Catch::Approx(0.9).margin(1e-9));
}

TEST_CASE("linear solve matches a plain value-iteration oracle") {
  const ChainMDP mdp = default_mdp();
  for (const Policy& pi : {Policy::always_right(mdp), Policy::uniform_random(mdp)}) {
    const Eigen::MatrixXd q = solve_true_q(mdp, pi);
    const Eigen::MatrixXd q_vi = value_iteration_q(mdp, pi);
    REQUIRE((q - q_vi).lpNorm<Eigen::Infinity>() < 1e-8);
  }
}

TEST_CASE("the solved Q table is a fixed point of the policy backup") {
  const ChainMDP mdp = default_mdp();
  const Policy pi = Policy::always_right(mdp);
  const Eigen::MatrixXd q = solve_true_q(mdp, pi);
  const Eigen::MatrixXd tq = exact_bellman_operator(q, mdp, pi);
  REQUIRE((q - tq).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("always-right values: geometric recursion at the reward state") {
  const ChainMDP mdp = default_mdp();
  const Eigen::MatrixXd q = solve_true_q(mdp, Policy::always_right(mdp));

  // At s=13, success pays 0.9 and moves to the zero-value absorbing end;
  // failure stays and re-earns the same value next step:
  //   v = 0.9 + gamma * (1 - p) * v  =>  v = 0.9 / (1 - 0.097)
  const double v13 = 0.9 / (1.0 - 0.97 * 0.1);
  REQUIRE(q(13, kRight) == Catch::Approx(v13).margin(1e-10));
  REQUIRE(v13 == Catch::Approx(0.9967).margin(5e-4));

  // The absorbing end never earns anything under always-right.
  REQUIRE(q(14, kRight) == Catch::Approx(0.0).margin(1e-12));

  // Values rise monotonically while approaching the rewarded transition.
  for (int s = 0; s + 1 <= 13; ++s) REQUIRE(q(s, kRight) < q(s + 1, kRight));
}

TEST_CASE("stationary distribution: always-right absorbs at the end state") {
  const ChainMDP mdp = default_mdp();
  const Eigen::VectorXd d = stationary_distribution(mdp, Policy::always_right(mdp));
  REQUIRE(d.sum() == Catch::Approx(1.0).margin(1e-12));
  REQUIRE((d.array() >= 0.0).all());
  REQUIRE(d(14) == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("stationary distribution: uniform policy reaches a genuine fixed point") {
  const ChainMDP mdp = default_mdp();
  const Policy mu = Policy::uniform_random(mdp);
  const Eigen::VectorXd d = stationary_distribution(mdp, mu);
  const Eigen::MatrixXd p = TransitionModel(mdp).policy_matrix(mu);
  REQUIRE(d.sum() == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(((p.transpose() * d) - d).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("replay buffers are a pure function of the seed") {
  const ChainMDP mdp = default_mdp();
  const Policy mu = Policy::uniform_random(mdp);
  const ReplayBuffer b1 = collect_buffer(mdp, mu, 500, std::uint64_t{7});
  const ReplayBuffer b2 = collect_buffer(mdp, mu, 500, std::uint64_t{7});
  REQUIRE(b1.transitions.size() == 500);
  REQUIRE(b1.transitions.size() == b2.transitions.size());
  for (size_t i = 0; i < b1.transitions.size(); ++i) {
    REQUIRE(b1.transitions[i].state == b2.transitions[i].state);
    REQUIRE(b1.transitions[i].action == b2.transitions[i].action);
    REQUIRE(b1.transitions[i].reward == b2.transitions[i].reward);
    REQUIRE(b1.transitions[i].next_state == b2.transitions[i].next_state);
  }

  const ReplayBuffer b3 = collect_buffer(mdp, mu, 500, std::uint64_t{8});
  bool differs = false;
  for (size_t i = 0; i < b1.transitions.size() && !differs; ++i)
    differs = b1.transitions[i].state != b3.transitions[i].state ||
              b1.transitions[i].action != b3.transitions[i].action;
  REQUIRE(differs);
}

TEST_CASE("replay transitions are internally consistent") {
  const ChainMDP mdp = default_mdp();
  const Policy mu = Policy::uniform_random(mdp);
  const ReplayBuffer buf = collect_buffer(mdp, mu, 2000, std::uint64_t{3});
  for (size_t i = 0; i < buf.transitions.size(); ++i) {
    const Transition& t = buf.transitions[i];
    REQUIRE(t.state >= 0);
    REQUIRE(t.state < mdp.num_states);
    REQUIRE((t.action == kLeft || t.action == kRight));
    REQUIRE((t.reward == 0.0 || t.reward == 0.9));
    REQUIRE(t.reward == reward(mdp, t.state, t.action));
    // Either the intended move landed or the agent stayed.
    REQUIRE((t.next_state == mdp.successor(t.state, t.action) || t.next_state == t.state));
    if (i + 1 < buf.transitions.size())
      REQUIRE(buf.transitions[i + 1].state == t.next_state);
  }

  // Under the uniform behaviour policy the chain spends most of its time
  // in the interior simply because there are more interior states.
  int middle = 0, edges = 0;
  for (int s = 3; s <= 11; ++s) middle += buf.count_state_visits(s);
  edges = buf.count_state_visits(0) + buf.count_state_visits(14);
  REQUIRE(middle > edges);
}

TEST_CASE("empty buffer request is rejected") {
  const ChainMDP mdp = default_mdp();
  REQUIRE_THROWS(collect_buffer(mdp, Policy::uniform_random(mdp), 0, std::uint64_t{1}));
}

TEST_CASE("policy backup identities: zero table and constant shift") {
  const ChainMDP mdp = default_mdp();
  const Policy pi = Policy::always_right(mdp);

  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(15, 2);
  const Eigen::MatrixXd t0 = exact_bellman_operator(zero, mdp, pi);
  REQUIRE((t0 - reward_table(mdp)).lpNorm<Eigen::Infinity>() == 0.0);

  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(15, 2);
  const Eigen::MatrixXd t1 = exact_bellman_operator(ones, mdp, pi);
  const Eigen::MatrixXd want = reward_table(mdp).array() + 0.97;
  REQUIRE((t1 - want).lpNorm<Eigen::Infinity>() < 1e-14);

  REQUIRE_THROWS(exact_bellman_operator(Eigen::MatrixXd::Zero(4, 2), mdp, pi));
}

TEST_CASE("world invariant suite passes end to end") {
  const CheckReport report = check_world();
  for (const auto& item : report.items) INFO(item.first << " -> " << item.second);
  REQUIRE(report.ok());
}
