#pragma once

// Self-contained property suites, shared by the `lrcl check` subcommand and
// the acceptance tests.  Each suite returns a CheckReport with one named
// pass/fail item per property; nothing here depends on test-framework
// machinery so the CLI can run the same checks in production builds.

#include <cmath>
#include <cstring>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lrcl/categorical.hpp"
#include "lrcl/chain_mdp.hpp"
#include "lrcl/critics.hpp"
#include "lrcl/errors.hpp"
#include "lrcl/feature_map.hpp"
#include "lrcl/grad_check.hpp"
#include "lrcl/hypersphere.hpp"
#include "lrcl/linear_maps.hpp"
#include "lrcl/rng.hpp"

namespace lrcl {

struct CheckReport {
  std::string suite;
  std::vector<std::pair<std::string, bool>> items;

  void add(const std::string& name, bool passed) { items.emplace_back(name, passed); }
  bool ok() const {
    for (const auto& item : items)
      if (!item.second) return false;
    return true;
  }
  void print(std::ostream& os) const {
    for (const auto& item : items)
      os << (item.second ? "[pass] " : "[FAIL] ") << suite << "." << item.first << "\n";
  }
};

// ---------------------------------------------------------------------------
// Independent Q oracle: plain value iteration with explicit loops over the
// transition structure, no matrix algebra shared with solve_true_q.
// ---------------------------------------------------------------------------

inline Eigen::MatrixXd value_iteration_q(const ChainMDP& mdp, const Policy& policy,
                                         double tol = 1e-13, int max_iters = 2000000) {
  mdp.validate();
  const int S = mdp.num_states;
  const int A = mdp.num_actions;
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(S, A);
  Eigen::MatrixXd next(S, A);
  for (int iter = 0; iter < max_iters; ++iter) {
    double delta = 0.0;
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        // Intended move with prob p, stay put otherwise; edge moves clamp.
        int intended = s + (a == kRight ? 1 : -1);
        if (intended < 0 || intended >= S) intended = s;
        double backup = reward(mdp, s, a);
        const double p = mdp.success_prob;
        double v_intended = 0.0;
        double v_stay = 0.0;
        for (int ap = 0; ap < A; ++ap) {
          v_intended += policy.action_probs(intended, ap) * q(intended, ap);
          v_stay += policy.action_probs(s, ap) * q(s, ap);
        }
        backup += mdp.discount * (p * v_intended + (1.0 - p) * v_stay);
        next(s, a) = backup;
        delta = std::max(delta, std::abs(backup - q(s, a)));
      }
    }
    q = next;
    if (delta < tol) return q;
  }
  throw NumericError("value_iteration_q: no convergence");
}

// ---------------------------------------------------------------------------
// World suite: dynamics, linear solve vs value iteration, stationary
// distribution, buffer determinism.
// ---------------------------------------------------------------------------

inline CheckReport check_world() {
  CheckReport report;
  report.suite = "world";
  ChainMDP mdp;
  const Policy uniform = Policy::uniform_random(mdp);
  const Policy right = Policy::always_right(mdp);

  {
    const TransitionModel model = transition_model(mdp);
    bool rows_ok = true;
    for (int a = 0; a < mdp.num_actions; ++a) {
      const Eigen::MatrixXd& p = model.action_matrix(a);
      rows_ok = rows_ok && ((p.rowwise().sum().array() - 1.0).abs() < 1e-12).all() &&
                (p.array() >= 0.0).all();
    }
    report.add("transition_rows_stochastic", rows_ok);
    // Clamp at the left edge: moving left from state 0 stays put.
    report.add("left_edge_clamp", model.action_matrix(kLeft)(0, 0) == 1.0);
    report.add("right_edge_clamp",
               model.action_matrix(kRight)(mdp.num_states - 1, mdp.num_states - 1) == 1.0);
  }

  {
    const Eigen::MatrixXd solved = solve_true_q(mdp, uniform);
    const Eigen::MatrixXd iterated = value_iteration_q(mdp, uniform);
    report.add("q_solve_matches_value_iteration",
               (solved - iterated).cwiseAbs().maxCoeff() < 1e-8);
    const Eigen::MatrixXd backup = exact_bellman_operator(solved, mdp, uniform);
    report.add("q_solve_is_fixed_point", (backup - solved).cwiseAbs().maxCoeff() < 1e-10);
  }

  {
    const Eigen::MatrixXd q_right = solve_true_q(mdp, right);
    bool monotone = true;
    for (int s = 0; s + 1 < mdp.num_states - 1; ++s)
      monotone = monotone && q_right(s, kRight) <= q_right(s + 1, kRight) + 1e-12;
    // Value grows toward the rewarding transition for every pre-terminal state.
    report.add("q_right_monotone_before_terminal", monotone);
    report.add("q_right_terminal_zero", std::abs(q_right(mdp.num_states - 1, kRight)) < 1e-10);
  }

  {
    const Eigen::VectorXd d = stationary_distribution(mdp, right);
    report.add("stationary_right_absorbs_at_end",
               std::abs(d(mdp.num_states - 1) - 1.0) < 1e-9);
    const Eigen::VectorXd du = stationary_distribution(mdp, uniform);
    const Eigen::MatrixXd p_pi = transition_model(mdp).policy_matrix(uniform);
    report.add("stationary_uniform_fixed_point",
               (p_pi.transpose() * du - du).cwiseAbs().maxCoeff() < 1e-10);
  }

  {
    const ReplayBuffer a = collect_buffer(mdp, uniform, 500, 7);
    const ReplayBuffer b = collect_buffer(mdp, uniform, 500, 7);
    bool same = a.transitions.size() == b.transitions.size();
    for (std::size_t i = 0; same && i < a.transitions.size(); ++i) {
      const Transition& ta = a.transitions[i];
      const Transition& tb = b.transitions[i];
      same = ta.state == tb.state && ta.action == tb.action && ta.reward == tb.reward &&
             ta.next_state == tb.next_state;
    }
    report.add("buffer_deterministic_per_seed", same);
    const ReplayBuffer c = collect_buffer(mdp, uniform, 500, 8);
    bool differs = false;
    for (std::size_t i = 0; i < c.transitions.size(); ++i) {
      if (c.transitions[i].state != a.transitions[i].state ||
          c.transitions[i].action != a.transitions[i].action) {
        differs = true;
        break;
      }
    }
    report.add("buffer_varies_with_seed", differs);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Lemma suite: for ||w|| < 1 the scale quadratic has roots of opposite sign
// and the positive root restores the unit sphere.
// ---------------------------------------------------------------------------

inline CheckReport check_lemma1(int draws = 1000) {
  CheckReport report;
  report.suite = "lemma1";
  Rng rng(99, "lemma1");
  bool signs_ok = true;
  bool unit_ok = true;
  bool positive_ok = true;
  for (int i = 0; i < draws; ++i) {
    const int n = 2 + rng.uniform_int(15);
    Eigen::VectorXd w(n), delta(n);
    for (int j = 0; j < n; ++j) w(j) = rng.normal();
    for (int j = 0; j < n; ++j) delta(j) = rng.normal();
    const double kappa = rng.uniform(0.05, 0.95);
    w *= kappa / w.norm();
    if (delta.norm() < 1e-9) delta.setOnes();

    const double a = delta.squaredNorm();
    const double b = 2.0 * w.dot(delta);
    const double c = w.squaredNorm() - 1.0;
    const double disc = b * b - 4.0 * a * c;
    const double root_plus = (-b + std::sqrt(disc)) / (2.0 * a);
    const double root_minus = (-b - std::sqrt(disc)) / (2.0 * a);
    signs_ok = signs_ok && root_plus > 0.0 && root_minus < 0.0;

    const double s = solve_row_scale(w.transpose(), delta.transpose(), ProjectionConfig{});
    positive_ok = positive_ok && s > 0.0;
    unit_ok = unit_ok && std::abs((w + s * delta).norm() - 1.0) < 1e-10;
  }
  report.add("roots_have_opposite_signs", signs_ok);
  report.add("selected_root_positive", positive_ok);
  report.add("scaled_row_lands_on_sphere", unit_ok);
  return report;
}

// ---------------------------------------------------------------------------
// Projection suite: random adapted maps, projected rows unit to 1e-9, frozen
// base bit-identical before/after.
// ---------------------------------------------------------------------------

inline CheckReport check_projection(int applications = 1000) {
  CheckReport report;
  report.suite = "projection";
  Rng rng(7, "projection");
  bool unit_ok = true;
  bool base_ok = true;
  for (int i = 0; i < applications; ++i) {
    const int d_out = 3 + rng.uniform_int(10);
    const int d_in = 3 + rng.uniform_int(10);
    const int rank = 1 + rng.uniform_int(std::min(d_out, d_in));
    const double kappa = rng.uniform(0.1, 0.9);
    Eigen::MatrixXd w0 = rng.normal_matrix(d_out, d_in);
    for (int r = 0; r < d_out; ++r) w0.row(r) *= kappa / w0.row(r).norm();
    Eigen::MatrixXd a = rng.normal_matrix(rank, d_in);
    Eigen::MatrixXd b = rng.normal_matrix(d_out, rank);
    const Eigen::MatrixXd w0_before = w0;
    project_lora_rows(w0, a, b, 1.0, ProjectionConfig{});
    const Eigen::MatrixXd eff = w0 + b * a;
    for (int r = 0; r < d_out; ++r)
      unit_ok = unit_ok && std::abs(eff.row(r).norm() - 1.0) < 1e-9;
    base_ok = base_ok &&
              std::memcmp(w0.data(), w0_before.data(), sizeof(double) * w0.size()) == 0;
  }
  report.add("effective_rows_unit_norm", unit_ok);
  report.add("base_rows_bit_identical", base_ok);
  return report;
}

// ---------------------------------------------------------------------------
// Incompatibility suite: plain row renormalisation rescales the base weights
// (so a frozen base cannot survive it), while the scale solve leaves the base
// untouched and still reaches the sphere.
// ---------------------------------------------------------------------------

inline CheckReport check_incompatibility(int rows = 100) {
  CheckReport report;
  report.suite = "incompatibility";
  Rng rng(11, "incompat");
  bool naive_moves_base = true;
  bool ours_keeps_base = true;
  bool ours_on_sphere = true;
  for (int i = 0; i < rows; ++i) {
    const int n = 4 + rng.uniform_int(12);
    Eigen::RowVectorXd w(n), delta(n);
    for (int j = 0; j < n; ++j) w(j) = rng.normal();
    for (int j = 0; j < n; ++j) delta(j) = rng.normal();
    w *= rng.uniform(0.1, 0.9) / w.norm();
    if (std::abs((w + delta).norm() - 1.0) < 1e-3) delta *= 2.0;

    const IncompatibilityReport demo = demonstrate_incompatibility(w, delta);
    naive_moves_base = naive_moves_base && demo.naive_base_shift > 1e-12 &&
                       std::abs(demo.c - 1.0) > 1e-12;
    ours_keeps_base = ours_keeps_base &&
                      std::memcmp(demo.base_after_ours.data(), w.data(),
                                  sizeof(double) * w.size()) == 0;
    ours_on_sphere = ours_on_sphere &&
                     std::abs((w + demo.s * delta).norm() - 1.0) < 1e-10;
  }
  report.add("naive_rescale_moves_base", naive_moves_base);
  report.add("scale_solve_keeps_base", ours_keeps_base);
  report.add("scale_solve_reaches_sphere", ours_on_sphere);
  return report;
}

// ---------------------------------------------------------------------------
// Categorical suite: mass conservation, hat-function oracle agreement,
// identity backup exactness, two-hot equivalence.
// ---------------------------------------------------------------------------

// Reference projection: accumulate every source atom through the triangular
// interpolation kernel on the target grid.  O(N^2), no branch on exact hits.
inline Eigen::VectorXd hat_projection_oracle(const Eigen::VectorXd& probs, double r,
                                             double g, const ValueSupport& support) {
  const Eigen::VectorXd z = support.atoms();
  const double dz = support.spacing();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(support.num_atoms);
  for (int i = 0; i < support.num_atoms; ++i) {
    const double y = std::min(std::max(r + g * z(i), support.v_min), support.v_max);
    for (int j = 0; j < support.num_atoms; ++j) {
      const double weight = std::max(0.0, 1.0 - std::abs(y - z(j)) / dz);
      out(j) += probs(i) * weight;
    }
  }
  return out;
}

inline CheckReport check_categorical(int instances = 10000) {
  CheckReport report;
  report.suite = "categorical";
  Rng rng(5, "categorical");
  bool mass_ok = true;
  bool oracle_ok = true;
  bool identity_ok = true;
  for (int i = 0; i < instances; ++i) {
    ValueSupport support;
    support.num_atoms = 2 + rng.uniform_int(50);
    support.v_min = rng.uniform(-3.0, 0.0);
    support.v_max = support.v_min + rng.uniform(0.5, 4.0);
    Eigen::VectorXd probs(support.num_atoms);
    for (int j = 0; j < support.num_atoms; ++j) probs(j) = rng.uniform();
    probs /= probs.sum();
    const double r = rng.uniform(-2.0, 2.0);
    const double g = rng.uniform(0.0, 1.2);

    const Eigen::VectorXd projected = c51_project(probs, r, g, support);
    mass_ok = mass_ok && std::abs(projected.sum() - 1.0) < 1e-12;
    const Eigen::VectorXd reference = hat_projection_oracle(probs, r, g, support);
    oracle_ok = oracle_ok && (projected - reference).cwiseAbs().maxCoeff() < 1e-12;

    const Eigen::VectorXd same = c51_project(probs, 0.0, 1.0, support);
    for (int j = 0; j < support.num_atoms; ++j)
      identity_ok = identity_ok && same(j) == probs(j);
  }
  report.add("projected_mass_conserved", mass_ok);
  report.add("matches_hat_kernel_oracle", oracle_ok);
  report.add("identity_backup_bit_exact", identity_ok);

  {
    ValueSupport support;  // default support
    bool twohot_ok = true;
    Rng trng(17, "two-hot");
    for (int i = 0; i < 1000; ++i) {
      const double y = trng.uniform(support.v_min, support.v_max);
      const Eigen::VectorXd direct = two_hot(y, support);
      Eigen::VectorXd point = Eigen::VectorXd::Zero(support.num_atoms);
      point(0) = 1.0;
      // Projecting a point mass at atom 0 through r = y, g = 0 must match.
      const Eigen::VectorXd via_projection = c51_project(point, y, 0.0, support);
      twohot_ok = twohot_ok && (direct - via_projection).cwiseAbs().maxCoeff() < 1e-15;
      twohot_ok = twohot_ok && std::abs(direct.sum() - 1.0) < 1e-15;
      twohot_ok = twohot_ok &&
                  std::abs(direct.dot(support.atoms()) - y) < 1e-12;
    }
    report.add("two_hot_matches_point_mass_projection", twohot_ok);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Gradient suite: every critic variant, scalar and categorical heads,
// analytic tape gradients against central differences.
// ---------------------------------------------------------------------------

namespace detail {

// Random loss on a batch of columns: weighted quadratic for a scalar head,
// cross entropy against random per-pair target mass for a distributional one.
// head_rows must match the critic output.
template <class Critic>
GradCheckResult grad_check_critic(Critic& critic, const Eigen::MatrixXd& x, int head_rows,
                                  bool categorical, std::uint64_t seed) {
  Rng rng(seed, "grad-check-data");
  const int pairs = static_cast<int>(x.cols());
  Eigen::VectorXd counts(pairs);
  for (int p = 0; p < pairs; ++p) counts(p) = 1.0 + rng.uniform_int(4);
  const double denom = counts.sum();

  std::function<Tape::NodeRef(Tape&, const TapeLeaves&)> make_loss;
  if (categorical) {
    Eigen::MatrixXd target_mass(head_rows, pairs);
    for (int p = 0; p < pairs; ++p) {
      Eigen::VectorXd t(head_rows);
      for (int j = 0; j < head_rows; ++j) t(j) = rng.uniform();
      target_mass.col(p) = counts(p) * (t / t.sum());
    }
    make_loss = [&critic, &x, target_mass, counts, denom](Tape& tape, const TapeLeaves& leaves) {
      Tape::NodeRef logits = critic.forward(tape, leaves, x);
      return tape.softmax_cross_entropy_cols(logits, target_mass, counts, denom);
    };
  } else {
    Eigen::VectorXd ysum(pairs);
    double ysq = 0.0;
    for (int p = 0; p < pairs; ++p) {
      const double mean = rng.normal();
      ysum(p) = counts(p) * mean;
      ysq += counts(p) * (mean * mean + 0.04);
    }
    make_loss = [&critic, &x, counts, ysum, ysq, denom](Tape& tape, const TapeLeaves& leaves) {
      Tape::NodeRef q = critic.forward(tape, leaves, x);
      return tape.weighted_quadratic_loss(q, counts, ysum, ysq, denom);
    };
  }
  return check_gradients(critic.registry(), make_loss);
}

}  // namespace detail

inline CheckReport check_gradients_suite() {
  CheckReport report;
  report.suite = "gradients";
  const ChainMDP mdp;
  Rng fm_rng(3, "feature-map");
  const FeatureMap features = FeatureMap::build(mdp, 64, fm_rng);
  const Eigen::MatrixXd x = features.feature_matrix().leftCols(8);

  const ValueSupport support;
  for (bool categorical : {false, true}) {
    const std::string head = categorical ? "categorical" : "scalar";
    const int head_rows = categorical ? support.num_atoms : 1;
    {
      Rng rng(1, "weights");
      ToyCritic critic = ToyCritic::build_dense(64, 256, rng, categorical, support);
      const GradCheckResult r = detail::grad_check_critic(critic, x, head_rows, categorical, 21);
      report.add("toy_dense_" + head, r.ok);
    }
    {
      Rng rng(1, "weights");
      ToyCritic critic = ToyCritic::build_dense(64, 256, rng, categorical, support);
      LoraWrapSpec spec;
      spec.rank = 4;
      spec.init = LoRAInitSpec::parse("normal-both");
      critic.lora_wrap(spec, rng);
      const GradCheckResult r = detail::grad_check_critic(critic, x, head_rows, categorical, 22);
      report.add("toy_lora_" + head, r.ok);
    }
    {
      Rng rng(1, "weights");
      ToyCritic critic = ToyCritic::build_dense(64, 256, rng, categorical, support);
      critic.prune_wrap(0.75, rng);
      const GradCheckResult r = detail::grad_check_critic(critic, x, head_rows, categorical, 23);
      report.add("toy_pruned_" + head, r.ok);
    }
    {
      Rng rng(1, "weights");
      ToyCritic critic = ToyCritic::build_dense(64, 256, rng, categorical, support);
      LoraWrapSpec spec;
      spec.rank = 4;
      spec.init = LoRAInitSpec::parse("normal-both");
      spec.zero_base = true;
      critic.lora_wrap(spec, rng);
      const GradCheckResult r = detail::grad_check_critic(critic, x, head_rows, categorical, 24);
      report.add("toy_nobase_" + head, r.ok);
    }
    {
      SimbaConfig cfg;
      cfg.head_rows = head_rows;
      Rng rng(2, "weights");
      SimbaCritic critic = SimbaCritic::build(cfg, rng);
      Rng in_rng(9, "inputs");
      const Eigen::MatrixXd xs = in_rng.normal_matrix(cfg.d_in, 6);
      const GradCheckResult r = detail::grad_check_critic(critic, xs, head_rows, categorical, 25);
      report.add("simbav2_" + head, r.ok);
    }
    {
      BroConfig cfg;
      cfg.head_rows = head_rows;
      Rng rng(2, "weights");
      BroCritic critic = BroCritic::build(cfg, rng);
      Rng in_rng(9, "inputs");
      const Eigen::MatrixXd xb = in_rng.normal_matrix(cfg.d_in, 6);
      const GradCheckResult r = detail::grad_check_critic(critic, xb, head_rows, categorical, 26);
      report.add("bronet_" + head, r.ok);
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Architecture invariants used by arch-demo and the acceptance run.
// ---------------------------------------------------------------------------

inline CheckReport check_simba_norms(int param_draws = 10, int inputs_per_draw = 10) {
  CheckReport report;
  report.suite = "simbav2";
  bool norms_ok = true;
  double worst = 0.0;
  for (int d = 0; d < param_draws; ++d) {
    SimbaConfig cfg;
    Rng rng(100 + d, "weights");
    SimbaCritic critic = SimbaCritic::build(cfg, rng);
    Rng in_rng(200 + d, "inputs");
    for (int i = 0; i < inputs_per_draw; ++i) {
      const Eigen::MatrixXd x = in_rng.normal_matrix(cfg.d_in, 1);
      std::vector<Eigen::MatrixXd> trace;
      critic.forward(x, &trace);
      for (const Eigen::MatrixXd& h : trace) {
        for (Eigen::Index c = 0; c < h.cols(); ++c) {
          const double err = std::abs(h.col(c).norm() - 1.0);
          worst = std::max(worst, err);
          norms_ok = norms_ok && err < 1e-10;
        }
      }
    }
  }
  std::ostringstream label;
  label << "hidden_states_unit_norm_max_err_" << worst;
  report.add(label.str(), norms_ok);
  return report;
}

inline CheckReport run_check_suite(const std::string& name) {
  if (name == "world") return check_world();
  if (name == "lemma1") return check_lemma1();
  if (name == "projection") return check_projection();
  if (name == "incompatibility") return check_incompatibility();
  if (name == "categorical") return check_categorical();
  if (name == "gradients") return check_gradients_suite();
  throw UsageError("unknown check suite: " + name +
                   " (expected world, lemma1, projection, incompatibility, categorical, gradients)");
}

inline std::vector<std::string> all_check_suites() {
  return {"world", "lemma1", "projection", "incompatibility", "categorical", "gradients"};
}

}  // namespace lrcl
