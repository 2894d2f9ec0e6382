#pragma once

// The two chain-MDP training regimes and their evaluation loop.
//
//   static  supervised regression onto the precomputed true Q table; batches
//           are uniform over all 30 state-action pairs.  No bootstrapping.
//   td      off-policy temporal-difference learning from a fixed 500-step
//           replay buffer; targets bootstrap through a Polyak-averaged target
//           network and always use the target policy's action at s'.
//
// Both regimes share one exact evaluation: every eval_every steps (and at
// step 0) the critic is read out on all pairs and compared against the true
// Q table (weighted by the target policy's stationary distribution) and
// against one application of the exact Bellman operator (RMS residual).
// Batches only ever touch the training loss; metrics use the model directly.
//
// Named RNG streams per seed keep every source of randomness independent:
//   feature-map  frozen random features
//   buffer       behaviour-policy trajectory
//   weights      parameter initialization (base draws first, then adapter
//                factors / masks, in registry order)
//   noise        per-step batch index sampling

#include <atomic>
#include <chrono>
#include <cmath>
#include <string>
#include <thread>
#include <vector>

#include "lrcl/categorical.hpp"
#include "lrcl/chain_mdp.hpp"
#include "lrcl/critics.hpp"
#include "lrcl/errors.hpp"
#include "lrcl/feature_map.hpp"
#include "lrcl/optim.hpp"
#include "lrcl/registry.hpp"

namespace lrcl {

struct ExperimentConfig {
  std::string regime = "td";          // static | td
  std::string critic_kind = "dense";  // dense | lora | pruned | nobase
  int rank = 1;
  double sparsity = 0.85;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  int steps = 12000;
  int batch = 64;
  double lr = 1e-3;
  double tau = 0.02;
  int eval_every = 300;
  int buffer_size = 500;
  int hidden = 256;      // H
  int feature_dim = 64;  // D
  double gamma = 0.97;
  double success_prob = 0.9;
  int num_states = 15;
  std::string init_mode = "zero-b";  // zero-b | normal-both
  double kappa = 0.0;                // >0: rebuild frozen base at this row norm
  int base_rank = 0;                 // 0: full rank
  std::string projection = "none";   // none | row_normalize | project_lora
  double weight_decay = 0.0;         // decoupled, adapter factors only
  bool categorical = false;          // categorical value head (extension)
  double v_min = -1.0;
  double v_max = 2.0;
  int atoms = 51;

  void validate() const {
    if (regime != "static" && regime != "td")
      throw UsageError("config: regime must be 'static' or 'td'");
    if (critic_kind != "dense" && critic_kind != "lora" && critic_kind != "pruned" &&
        critic_kind != "nobase")
      throw UsageError("config: critic_kind must be dense|lora|pruned|nobase");
    if (init_mode != "zero-b" && init_mode != "normal-both")
      throw UsageError("config: init_mode must be 'zero-b' or 'normal-both'");
    try {
      parse_projection_mode(projection);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
    if (steps < 1 || batch < 1 || eval_every < 1 || buffer_size < 1)
      throw UsageError("config: steps/batch/eval_every/buffer_size must be positive");
    if (hidden < 1 || feature_dim < 1) throw UsageError("config: bad network dims");
    if (rank < 1) throw UsageError("config: rank must be >= 1");
    if (!(sparsity >= 0.0 && sparsity < 1.0)) throw UsageError("config: sparsity in [0,1)");
    if (!(lr > 0.0)) throw UsageError("config: lr must be positive");
    if (!(tau >= 0.0 && tau <= 1.0)) throw UsageError("config: tau in [0,1]");
    if (seeds.empty()) throw UsageError("config: need at least one seed");
    if (kappa < 0.0 || kappa >= 1.0) throw UsageError("config: kappa in [0,1)");
    try {
      ChainMDP mdp{num_states, 2, success_prob, gamma};
      mdp.validate();
      if (categorical) ValueSupport{v_min, v_max, atoms}.validate();
    } catch (const UsageError&) {
      throw;
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
  }

  ValueSupport support() const { return {v_min, v_max, atoms}; }
};

// Everything about the chain world a run needs, precomputed once per seed.
struct ToyWorld {
  ChainMDP mdp;
  Policy mu, pi;
  Eigen::MatrixXd q_true;  // S x A
  Eigen::VectorXd d_pi;    // S
  FeatureMap features;
  Eigen::MatrixXd phi_all;    // D x (S*A), column = pair_index(s, a)
  Eigen::MatrixXd phi_right;  // D x S

  static ToyWorld build(const ExperimentConfig& cfg, std::uint64_t seed) {
    ToyWorld w;
    w.mdp = ChainMDP{cfg.num_states, 2, cfg.success_prob, cfg.gamma};
    w.mdp.validate();
    w.mu = Policy::uniform_random(w.mdp);
    w.pi = Policy::always_right(w.mdp);
    w.q_true = solve_true_q(w.mdp, w.pi);
    w.d_pi = stationary_distribution(w.mdp, w.pi);
    Rng fm_rng(seed, "feature-map");
    w.features = FeatureMap::build(w.mdp, cfg.feature_dim, fm_rng);
    w.phi_all = w.features.feature_matrix();
    w.phi_right = w.features.features_for_action(kRight);
    return w;
  }
};

struct MetricTrace {
  std::uint64_t seed = 0;
  std::vector<long> steps;
  std::vector<double> eps_q;
  std::vector<double> eps_b;

  double final_eps_q() const { return eps_q.back(); }
  double final_eps_b() const { return eps_b.back(); }

  // Mean of the last ceil-rounded 10% of evaluations (at the default cadence
  // of 41 evaluations this is the last 4).
  double tail_mean_eps_b() const {
    const int n = static_cast<int>(eps_b.size());
    const int k = std::max(1, static_cast<int>(std::lround(0.1 * n)));
    double acc = 0.0;
    for (int i = n - k; i < n; ++i) acc += eps_b[i];
    return acc / k;
  }
};

// eps_q: sqrt(sum_s d_pi(s) * (Q(s,pi(s)) - Q*(s,pi(s)))^2), read at the
// target policy's action.  eps_b: RMS over all pairs of Q - T_pi(Q) with the
// exact transition model (never the replay buffer).
inline std::pair<double, double> compute_metrics(const Eigen::MatrixXd& q_table,
                                                 const ToyWorld& w) {
  const Eigen::MatrixXd diff = q_table - w.q_true;
  const Eigen::VectorXd diff_at_pi = (w.pi.action_probs.array() * diff.array()).rowwise().sum();
  const double eps_q = std::sqrt(diff_at_pi.array().square().matrix().dot(w.d_pi));
  const Eigen::MatrixXd residual = q_table - exact_bellman_operator(q_table, w.mdp, w.pi);
  const double eps_b = std::sqrt(residual.array().square().mean());
  return {eps_q, eps_b};
}

inline ToyCritic build_toy_critic(const ExperimentConfig& cfg, Rng& weights_rng) {
  ToyCritic critic = ToyCritic::build_dense(cfg.feature_dim, cfg.hidden, weights_rng,
                                            cfg.categorical, cfg.support());
  if (cfg.critic_kind == "lora" || cfg.critic_kind == "nobase") {
    LoraWrapSpec spec;
    spec.rank = cfg.rank;
    spec.init = LoRAInitSpec::parse(cfg.init_mode);
    spec.kappa = cfg.kappa;
    spec.base_rank = cfg.base_rank;
    spec.zero_base = cfg.critic_kind == "nobase";
    critic.lora_wrap(spec, weights_rng);
  } else if (cfg.critic_kind == "pruned") {
    critic.prune_wrap(cfg.sparsity, weights_rng);
  }
  return critic;
}

struct RunOutput {
  MetricTrace trace;
  ToyCritic critic;  // final parameters, for snapshots and post-hoc checks
};

namespace detail {

inline Eigen::MatrixXd q_table_from(const ToyCritic& critic, const ToyWorld& w) {
  const Eigen::VectorXd q = critic.q_values(w.phi_all);
  Eigen::MatrixXd table(w.mdp.num_states, w.mdp.num_actions);
  for (int s = 0; s < w.mdp.num_states; ++s)
    for (int a = 0; a < w.mdp.num_actions; ++a)
      table(s, a) = q(w.features.pair_index(s, a));
  return table;
}

inline void record(MetricTrace& tr, long step, const ToyCritic& critic, const ToyWorld& w) {
  auto [eq, eb] = compute_metrics(q_table_from(critic, w), w);
  if (!std::isfinite(eq) || !std::isfinite(eb))
    throw NumericError("metrics: non-finite at step " + std::to_string(step));
  tr.steps.push_back(step);
  tr.eps_q.push_back(eq);
  tr.eps_b.push_back(eb);
}

}  // namespace detail

// One full training run for one seed under either regime.
inline RunOutput run_regime(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const ToyWorld world = ToyWorld::build(cfg, seed);
  const int pairs = world.mdp.num_states * world.mdp.num_actions;
  const bool td = cfg.regime == "td";
  const ProjectionMode proj = parse_projection_mode(cfg.projection);
  const ValueSupport sup = cfg.support();

  Rng weights_rng(seed, "weights");
  ToyCritic critic = build_toy_critic(cfg, weights_rng);
  ToyCritic target = critic;  // slow-moving copy, equal at step 0

  ReplayBuffer buffer;
  if (td) {
    Rng buffer_rng(seed, "buffer");
    buffer = collect_buffer(world.mdp, world.mu, cfg.buffer_size, buffer_rng);
  }

  AdamConfig base_opt;
  base_opt.lr = cfg.lr;
  // The static control interpolates its 30 fixed targets within ~1.5k steps;
  // past that point a textbook epsilon leaves Adam taking ~lr-sized steps per
  // coordinate no matter how small the gradient, so the run orbits a noise
  // ball instead of settling. A larger epsilon makes late updates
  // gradient-proportional and the regression quiesces at the float64 floor.
  // TD targets never stop moving (gradients stay ~1e-2), so the damping is
  // inert there and the bootstrapped runs keep the standard constant.
  if (cfg.regime == "static") base_opt.eps = 1e-4;
  AdamConfig adapter_opt = base_opt;
  adapter_opt.weight_decay = cfg.weight_decay;
  RegistryOptimizer opt(critic.registry(), base_opt, adapter_opt);

  // Static-regime targets: the true Q value per pair (and, for a categorical
  // head, its two-hot encoding), fixed for the whole run.
  Eigen::VectorXd y_static(pairs);
  Eigen::MatrixXd twohot_static;
  for (int s = 0; s < world.mdp.num_states; ++s)
    for (int a = 0; a < world.mdp.num_actions; ++a)
      y_static(world.features.pair_index(s, a)) = world.q_true(s, a);
  if (cfg.categorical) {
    twohot_static.resize(sup.num_atoms, pairs);
    for (int p = 0; p < pairs; ++p) twohot_static.col(p) = two_hot(y_static(p), sup);
  }

  Rng noise(seed, "noise");
  MetricTrace trace;
  trace.seed = seed;
  detail::record(trace, 0, critic, world);

  Tape tape;
  std::vector<int> batch_idx(cfg.batch);
  Eigen::VectorXd counts(pairs), ysum(pairs);
  Eigen::MatrixXd target_mass;  // categorical target accumulation per pair
  std::vector<int> hits_per_buffer_index;
  if (td) hits_per_buffer_index.assign(cfg.buffer_size, 0);

  for (long step = 1; step <= cfg.steps; ++step) {
    counts.setZero();
    ysum.setZero();
    double ysq = 0.0;
    if (cfg.categorical) target_mass = Eigen::MatrixXd::Zero(sup.num_atoms, pairs);

    if (!td) {
      for (int b = 0; b < cfg.batch; ++b) batch_idx[b] = noise.uniform_int(pairs);
      for (int b = 0; b < cfg.batch; ++b) counts(batch_idx[b]) += 1.0;
      if (cfg.categorical) {
        for (int p = 0; p < pairs; ++p)
          if (counts(p) != 0.0) target_mass.col(p) = counts(p) * twohot_static.col(p);
      } else {
        for (int p = 0; p < pairs; ++p) {
          ysum(p) = counts(p) * y_static(p);
          ysq += counts(p) * y_static(p) * y_static(p);
        }
      }
    } else {
      // Bootstrap values at s' under the target policy's action (always
      // right), from the target network -- one readout per step.
      for (int b = 0; b < cfg.batch; ++b) batch_idx[b] = noise.uniform_int(cfg.buffer_size);
      std::fill(hits_per_buffer_index.begin(), hits_per_buffer_index.end(), 0);
      for (int b = 0; b < cfg.batch; ++b) hits_per_buffer_index[batch_idx[b]] += 1;

      if (cfg.categorical) {
        const Eigen::MatrixXd probs_next =
            softmax_columns(target.forward(world.phi_right));
        for (int i = 0; i < cfg.buffer_size; ++i) {
          const int n = hits_per_buffer_index[i];
          if (n == 0) continue;
          const Transition& t = buffer.transitions[i];
          const int p = world.features.pair_index(t.state, t.action);
          counts(p) += n;
          target_mass.col(p) +=
              n * c51_project(probs_next.col(t.next_state), t.reward, cfg.gamma, sup);
        }
      } else {
        const Eigen::VectorXd q_next = target.q_values(world.phi_right);
        for (int i = 0; i < cfg.buffer_size; ++i) {
          const int n = hits_per_buffer_index[i];
          if (n == 0) continue;
          const Transition& t = buffer.transitions[i];
          const int p = world.features.pair_index(t.state, t.action);
          const double y = t.reward + cfg.gamma * q_next(t.next_state);
          counts(p) += n;
          ysum(p) += n * y;
          ysq += n * y * y;
        }
      }
    }

    tape.clear();
    TapeLeaves leaves = bind_leaves(tape, critic.registry());
    Tape::NodeRef out = critic.forward(tape, leaves, world.phi_all);
    Tape::NodeRef loss =
        cfg.categorical
            ? tape.softmax_cross_entropy_cols(out, target_mass, counts,
                                              static_cast<double>(cfg.batch))
            : tape.weighted_quadratic_loss(out, counts, ysum, ysq,
                                           static_cast<double>(cfg.batch));
    if (!std::isfinite(tape.value(loss)(0, 0)))
      throw NumericError("training: non-finite loss at step " + std::to_string(step));
    tape.backward(loss);
    opt.step(critic.registry(), collect_grads(tape, critic.registry(), leaves));
    post_update_hook(critic, proj);
    if (td) polyak_update(target.registry(), critic.registry(), cfg.tau);

    if (step % cfg.eval_every == 0) detail::record(trace, step, critic, world);
  }
  return {std::move(trace), std::move(critic)};
}

inline RunOutput run_static_regression(ExperimentConfig cfg, std::uint64_t seed) {
  cfg.regime = "static";
  return run_regime(cfg, seed);
}

inline RunOutput run_bootstrapped_td(ExperimentConfig cfg, std::uint64_t seed) {
  cfg.regime = "td";
  return run_regime(cfg, seed);
}

// Ablation presets.  nobase and the hypersphere TD run need both adapter
// factors live from the start (a zero B would leave rows unprojectable and,
// for nobase, the whole net gradient-dead), so they switch to normal-both.
inline ExperimentConfig ablation_config(ExperimentConfig cfg, const std::string& variant) {
  if (variant == "nobase") {
    cfg.critic_kind = "nobase";
    cfg.init_mode = "normal-both";
  } else if (variant == "lora-nown") {
    cfg.critic_kind = "lora";
    cfg.projection = "none";
  } else if (variant == "pruned") {
    cfg.critic_kind = "pruned";
  } else if (variant == "hypersphere-td") {
    cfg.regime = "td";
    cfg.critic_kind = "lora";
    cfg.init_mode = "normal-both";
    if (cfg.kappa <= 0.0) cfg.kappa = 0.5;
    cfg.projection = "project_lora";
  } else {
    throw UsageError("unknown ablation variant '" + variant + "'");
  }
  return cfg;
}

inline RunOutput run_ablation(const ExperimentConfig& cfg, const std::string& variant,
                              std::uint64_t seed) {
  return run_regime(ablation_config(cfg, variant), seed);
}

// ---------------------------------------------------------------------------
// Rank sweep across both regimes with per-seed runs and seed aggregation.

struct RunStat {
  std::string regime;
  bool dense = false;
  int rank = 0;  // 0 for dense rows
  std::uint64_t seed = 0;
  double final_eps_q = 0.0;
  double final_eps_b = 0.0;
  double tail_eps_b = 0.0;  // mean over last 10% of evaluations
  double seconds = 0.0;
};

struct AggregateStat {
  std::string regime;
  bool dense = false;
  int rank = 0;
  int n = 0;
  double mean_final_eps_q = 0.0;
  double std_final_eps_q = 0.0;
  double mean_tail_eps_b = 0.0;
  double std_tail_eps_b = 0.0;
};

struct SweepResult {
  std::vector<RunStat> runs;
  std::vector<AggregateStat> summary;

  const AggregateStat* find(const std::string& regime, bool dense, int rank) const {
    for (const AggregateStat& a : summary)
      if (a.regime == regime && a.dense == dense && a.rank == rank) return &a;
    return nullptr;
  }
};

// Which (regime, rank) cells a sweep covers; dense is always included.
struct SweepPlan {
  std::vector<int> static_ranks;
  std::vector<int> td_ranks;

  static SweepPlan full(const std::vector<int>& ranks) { return {ranks, ranks}; }
};

inline const std::vector<int>& default_rank_list() {
  static const std::vector<int> ranks{1, 2, 4, 8, 16, 32, 64, 128, 256};
  return ranks;
}

inline SweepResult run_sweep_plan(const ExperimentConfig& base, const SweepPlan& plan,
                                  int jobs = 1) {
  struct Cell {
    std::string regime;
    bool dense;
    int rank;
  };
  std::vector<Cell> cells;
  auto add_regime = [&](const std::string& regime, const std::vector<int>& ranks) {
    cells.push_back({regime, true, 0});
    for (int r : ranks) cells.push_back({regime, false, r});
  };
  add_regime("static", plan.static_ranks);
  add_regime("td", plan.td_ranks);

  struct Task {
    Cell cell;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (const Cell& c : cells)
    for (std::uint64_t s : base.seeds) tasks.push_back({c, s});

  std::vector<RunStat> runs(tasks.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const Task& t = tasks[i];
      ExperimentConfig cfg = base;
      cfg.regime = t.cell.regime;
      cfg.critic_kind = t.cell.dense ? "dense" : "lora";
      if (!t.cell.dense) cfg.rank = t.cell.rank;
      const auto t0 = std::chrono::steady_clock::now();
      const RunOutput out = run_regime(cfg, t.seed);
      const auto t1 = std::chrono::steady_clock::now();
      RunStat& rs = runs[i];
      rs.regime = t.cell.regime;
      rs.dense = t.cell.dense;
      rs.rank = t.cell.rank;
      rs.seed = t.seed;
      rs.final_eps_q = out.trace.final_eps_q();
      rs.final_eps_b = out.trace.final_eps_b();
      rs.tail_eps_b = out.trace.tail_mean_eps_b();
      rs.seconds = std::chrono::duration<double>(t1 - t0).count();
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }

  SweepResult result;
  result.runs = std::move(runs);
  const size_t seeds = base.seeds.size();
  for (size_t c = 0; c < cells.size(); ++c) {
    AggregateStat agg;
    agg.regime = cells[c].regime;
    agg.dense = cells[c].dense;
    agg.rank = cells[c].rank;
    agg.n = static_cast<int>(seeds);
    double sq = 0.0, sb = 0.0;
    for (size_t s = 0; s < seeds; ++s) {
      sq += result.runs[c * seeds + s].final_eps_q;
      sb += result.runs[c * seeds + s].tail_eps_b;
    }
    agg.mean_final_eps_q = sq / seeds;
    agg.mean_tail_eps_b = sb / seeds;
    double vq = 0.0, vb = 0.0;
    for (size_t s = 0; s < seeds; ++s) {
      const RunStat& r = result.runs[c * seeds + s];
      vq += (r.final_eps_q - agg.mean_final_eps_q) * (r.final_eps_q - agg.mean_final_eps_q);
      vb += (r.tail_eps_b - agg.mean_tail_eps_b) * (r.tail_eps_b - agg.mean_tail_eps_b);
    }
    if (seeds > 1) {
      agg.std_final_eps_q = std::sqrt(vq / (seeds - 1));
      agg.std_tail_eps_b = std::sqrt(vb / (seeds - 1));
    }
    result.summary.push_back(agg);
  }
  return result;
}

inline SweepResult rank_sweep(const ExperimentConfig& base, const std::vector<int>& ranks,
                              int jobs = 1) {
  return run_sweep_plan(base, SweepPlan::full(ranks), jobs);
}

}  // namespace lrcl
