// lrcl — experiment driver for the low-rank critic library.
//
// Subcommands:
//   toy-run    train on the chain world (static regression or bootstrapped TD)
//   sweep      rank sweep across both regimes with seed aggregation
//   check      run the library's property suites
//   arch-demo  build a desk-scale SimbaV2/BroNet critic and report invariants
//
// Exit codes: 0 success, 1 usage error, 2 check failure, 3 numeric failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lrcl/checks.hpp"
#include "lrcl/errors.hpp"
#include "lrcl/io.hpp"
#include "lrcl/regimes.hpp"
#include "lrcl/serialize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Config plumbing: JSON file -> ExperimentConfig, plus --set key=value
// overrides.  Both paths go through one string-typed setter so a config key
// behaves identically wherever it comes from.

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::string token;
  std::stringstream ss(text);
  while (std::getline(ss, token, ',')) {
    if (token.empty()) continue;
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(token, &used));
      if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw lrcl::UsageError("bad seed '" + token + "' in seed list");
    }
  }
  if (seeds.empty()) throw lrcl::UsageError("empty seed list");
  return seeds;
}

double parse_double_field(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw lrcl::UsageError("config key '" + key + "': bad number '" + value + "'");
  }
}

int parse_int_field(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long v = std::stol(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw lrcl::UsageError("config key '" + key + "': bad integer '" + value + "'");
  }
}

bool parse_bool_field(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw lrcl::UsageError("config key '" + key + "': bad boolean '" + value + "'");
}

void set_config_field(lrcl::ExperimentConfig& cfg, const std::string& key,
                      const std::string& value) {
  if (key == "regime") cfg.regime = value;
  else if (key == "critic_kind") cfg.critic_kind = value;
  else if (key == "init_mode") cfg.init_mode = value;
  else if (key == "projection") cfg.projection = value;
  else if (key == "rank") cfg.rank = parse_int_field(key, value);
  else if (key == "steps") cfg.steps = parse_int_field(key, value);
  else if (key == "batch") cfg.batch = parse_int_field(key, value);
  else if (key == "eval_every") cfg.eval_every = parse_int_field(key, value);
  else if (key == "buffer_size") cfg.buffer_size = parse_int_field(key, value);
  else if (key == "hidden") cfg.hidden = parse_int_field(key, value);
  else if (key == "feature_dim") cfg.feature_dim = parse_int_field(key, value);
  else if (key == "num_states") cfg.num_states = parse_int_field(key, value);
  else if (key == "base_rank") cfg.base_rank = parse_int_field(key, value);
  else if (key == "atoms") cfg.atoms = parse_int_field(key, value);
  else if (key == "sparsity") cfg.sparsity = parse_double_field(key, value);
  else if (key == "lr") cfg.lr = parse_double_field(key, value);
  else if (key == "tau") cfg.tau = parse_double_field(key, value);
  else if (key == "gamma") cfg.gamma = parse_double_field(key, value);
  else if (key == "success_prob") cfg.success_prob = parse_double_field(key, value);
  else if (key == "kappa") cfg.kappa = parse_double_field(key, value);
  else if (key == "weight_decay") cfg.weight_decay = parse_double_field(key, value);
  else if (key == "v_min") cfg.v_min = parse_double_field(key, value);
  else if (key == "v_max") cfg.v_max = parse_double_field(key, value);
  else if (key == "categorical") cfg.categorical = parse_bool_field(key, value);
  else if (key == "seeds") cfg.seeds = parse_seed_list(value);
  else throw lrcl::UsageError("unknown config key '" + key + "'");
}

json config_to_json(const lrcl::ExperimentConfig& cfg) {
  json j;
  j["regime"] = cfg.regime;
  j["critic_kind"] = cfg.critic_kind;
  j["rank"] = cfg.rank;
  j["sparsity"] = cfg.sparsity;
  j["seeds"] = cfg.seeds;
  j["steps"] = cfg.steps;
  j["batch"] = cfg.batch;
  j["lr"] = cfg.lr;
  j["tau"] = cfg.tau;
  j["eval_every"] = cfg.eval_every;
  j["buffer_size"] = cfg.buffer_size;
  j["hidden"] = cfg.hidden;
  j["feature_dim"] = cfg.feature_dim;
  j["gamma"] = cfg.gamma;
  j["success_prob"] = cfg.success_prob;
  j["num_states"] = cfg.num_states;
  j["init_mode"] = cfg.init_mode;
  j["kappa"] = cfg.kappa;
  j["base_rank"] = cfg.base_rank;
  j["projection"] = cfg.projection;
  j["weight_decay"] = cfg.weight_decay;
  j["categorical"] = cfg.categorical;
  j["v_min"] = cfg.v_min;
  j["v_max"] = cfg.v_max;
  j["atoms"] = cfg.atoms;
  return j;
}

void apply_json_config(lrcl::ExperimentConfig& cfg, const json& j) {
  if (!j.is_object()) throw lrcl::UsageError("config: top-level JSON must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "seeds") {
      if (!value.is_array()) throw lrcl::UsageError("config: 'seeds' must be an array");
      cfg.seeds.clear();
      for (const auto& s : value) cfg.seeds.push_back(s.get<std::uint64_t>());
      continue;
    }
    std::string text;
    if (value.is_string()) text = value.get<std::string>();
    else text = value.dump();
    set_config_field(cfg, key, text);
  }
}

// Accepts either a plain config object or a previously written manifest
// (anything with a "config" sub-object), so reruns can point straight at
// manifest.json.
lrcl::ExperimentConfig load_config(const std::string& path) {
  json j;
  try {
    j = json::parse(lrcl::read_text_file(path));
  } catch (const json::parse_error& e) {
    throw lrcl::UsageError("config " + path + ": " + e.what());
  }
  if (j.is_object() && j.contains("config")) j = j["config"];
  lrcl::ExperimentConfig cfg;
  apply_json_config(cfg, j);
  return cfg;
}

std::uint64_t seed_offset_from_env() {
  const char* raw = std::getenv("LRCL_SEED_OFFSET");
  if (raw == nullptr || *raw == '\0') return 0;
  try {
    std::size_t used = 0;
    const std::uint64_t v = std::stoull(raw, &used);
    if (used != std::string(raw).size()) throw std::invalid_argument(raw);
    return v;
  } catch (const std::exception&) {
    throw lrcl::UsageError(std::string("LRCL_SEED_OFFSET: bad value '") + raw + "'");
  }
}

std::vector<std::uint64_t> effective_seeds(const lrcl::ExperimentConfig& cfg,
                                           std::uint64_t offset) {
  std::vector<std::uint64_t> seeds = cfg.seeds;
  for (std::uint64_t& s : seeds) s += offset;
  return seeds;
}

// Shared flags for the experiment subcommands.
struct RunArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::string seeds_flag;
  int jobs = 1;
};

void add_run_flags(CLI::App* cmd, RunArgs& args, const char* default_out) {
  cmd->add_option("--config", args.config_path, "JSON config (or a manifest.json)");
  cmd->add_option("--set", args.overrides, "Override a config key, e.g. --set regime=static")
      ->take_all();
  cmd->add_option("--out", args.out_dir, "Output directory")->default_val(default_out);
  cmd->add_option("--seeds", args.seeds_flag, "Comma-separated seed list");
  cmd->add_option("--jobs", args.jobs, "Worker threads")->default_val(1);
}

lrcl::ExperimentConfig resolve_config(const RunArgs& args) {
  lrcl::ExperimentConfig cfg;
  if (!args.config_path.empty()) cfg = load_config(args.config_path);
  for (const std::string& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw lrcl::UsageError("--set expects key=value, got '" + kv + "'");
    set_config_field(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!args.seeds_flag.empty()) cfg.seeds = parse_seed_list(args.seeds_flag);
  if (args.jobs < 1) throw lrcl::UsageError("--jobs must be >= 1");
  cfg.validate();
  return cfg;
}

void write_manifest(const fs::path& dir, const std::string& command,
                    const lrcl::ExperimentConfig& cfg, std::uint64_t offset,
                    const std::vector<std::uint64_t>& seeds, const json& outputs,
                    const json* timings) {
  json m;
  m["command"] = command;
  m["config"] = config_to_json(cfg);
  m["outputs"] = outputs;
  m["seed_offset"] = offset;
  m["seeds"] = seeds;  // effective seeds, offset applied
  m["timings_seconds"] = timings ? *timings : json::object();
  m["version"] = kVersion;
  lrcl::write_text_file(dir / "manifest.json", m.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// toy-run

int cmd_toy_run(const RunArgs& args, const std::string& ablation) {
  lrcl::ExperimentConfig cfg = resolve_config(args);
  if (!ablation.empty()) {
    cfg = lrcl::ablation_config(cfg, ablation);
    cfg.validate();
  }
  const std::uint64_t offset = seed_offset_from_env();
  const std::vector<std::uint64_t> seeds = effective_seeds(cfg, offset);

  const fs::path dir(args.out_dir);
  fs::create_directories(dir);

  json outputs;
  outputs["manifest"] = "manifest.json";
  for (std::uint64_t s : seeds) {
    outputs["metrics"].push_back("metrics_seed" + std::to_string(s) + ".csv");
    outputs["weights"].push_back("weights_seed" + std::to_string(s) + ".txt");
  }
  write_manifest(dir, "toy-run", cfg, offset, seeds, outputs, nullptr);

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<lrcl::RunOutput> results(seeds.size());
  std::vector<double> per_run(seeds.size(), 0.0);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= seeds.size()) return;
      const auto r0 = std::chrono::steady_clock::now();
      results[i] = lrcl::run_regime(cfg, seeds[i]);
      per_run[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - r0).count();
    }
  };
  const int jobs = std::min<int>(args.jobs, static_cast<int>(seeds.size()));
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }

  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const std::string tag = std::to_string(seeds[i]);
    lrcl::write_text_file(dir / ("metrics_seed" + tag + ".csv"),
                          lrcl::trace_csv(results[i].trace, seeds[i]));
    lrcl::save_snapshot(results[i].critic.registry(),
                        (dir / ("weights_seed" + tag + ".txt")).string());
    std::cout << "seed " << seeds[i] << ": final eps_q " << results[i].trace.final_eps_q()
              << ", final eps_b " << results[i].trace.final_eps_b() << "\n";
  }

  json timings;
  timings["total"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  timings["per_run"] = per_run;
  write_manifest(dir, "toy-run", cfg, offset, seeds, outputs, &timings);
  std::cout << "wrote " << seeds.size() << " run(s) to " << dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// sweep

int cmd_sweep(const RunArgs& args) {
  lrcl::ExperimentConfig cfg = resolve_config(args);
  const std::uint64_t offset = seed_offset_from_env();
  cfg.seeds = effective_seeds(cfg, offset);

  const fs::path dir(args.out_dir);
  fs::create_directories(dir);

  json outputs;
  outputs["manifest"] = "manifest.json";
  outputs["runs"] = "sweep_runs.csv";
  outputs["summary"] = "sweep_summary.csv";
  write_manifest(dir, "sweep", cfg, offset, cfg.seeds, outputs, nullptr);

  const auto t0 = std::chrono::steady_clock::now();
  const lrcl::SweepResult result = lrcl::rank_sweep(cfg, lrcl::default_rank_list(), args.jobs);
  lrcl::write_text_file(dir / "sweep_runs.csv", lrcl::runs_csv(result.runs));
  lrcl::write_text_file(dir / "sweep_summary.csv", lrcl::summary_csv(result.summary));

  json timings;
  timings["total"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(dir, "sweep", cfg, offset, cfg.seeds, outputs, &timings);

  for (const lrcl::AggregateStat& row : result.summary)
    std::cout << row.regime << (row.dense ? " dense   " : " rank " + std::to_string(row.rank))
              << "  mean final eps_q " << row.mean_final_eps_q << " (std "
              << row.std_final_eps_q << ")\n";
  std::cout << "wrote sweep results to " << dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// check

int cmd_check(const std::vector<std::string>& suites) {
  const std::vector<std::string> selected = suites.empty() ? lrcl::all_check_suites() : suites;
  bool all_ok = true;
  for (const std::string& name : selected) {
    const lrcl::CheckReport report = lrcl::run_check_suite(name);
    report.print(std::cout);
    all_ok = all_ok && report.ok();
  }
  if (!all_ok) throw lrcl::CheckError("one or more property checks failed");
  return 0;
}

// ---------------------------------------------------------------------------
// arch-demo

void print_effective_row_report(const std::string& label, lrcl::ParamRegistry& reg,
                                const std::vector<lrcl::MapSlot*>& maps) {
  double worst = 0.0;
  for (const lrcl::MapSlot* m : maps) {
    const Eigen::MatrixXd w = m->effective(reg);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      worst = std::max(worst, std::abs(w.row(r).norm() - 1.0));
  }
  std::cout << label << ": max |row norm - 1| = " << worst << "\n";
  if (worst > 1e-9) throw lrcl::CheckError(label + ": rows left the unit sphere");
}

// Rows past strict_below_rank still print (they show where factored counts
// cross the dense count) but only ranks under the bound must be cheaper:
// square d×d maps break even at r = d/2, the wide simbav2 maps at 0.8·d_h.
template <class Critic>
void print_param_table(const std::function<Critic()>& build_dense, double strict_below_rank) {
  Critic dense = build_dense();
  const long dense_count = dense.registry().trainable_scalar_count();
  std::cout << "trainable parameters\n  dense: " << dense_count << "\n";
  for (int r : {1, 2, 4, 8, 16, 32}) {
    Critic c = build_dense();
    lrcl::LoraWrapSpec spec;
    spec.rank = r;
    spec.init = lrcl::LoRAInitSpec::parse("normal-both");
    lrcl::Rng wrap_rng(40 + r, "weights");
    c.lora_wrap(spec, wrap_rng);
    const long count = c.registry().trainable_scalar_count();
    std::cout << "  lora r=" << r << ": " << count << "  ("
              << (100.0 * count / dense_count) << "% of dense)\n";
    if (r < strict_below_rank && count >= dense_count)
      throw lrcl::CheckError("lora trainable count not below dense at rank " +
                             std::to_string(r));
  }
}

int cmd_arch_demo(const std::string& arch, const std::string& mode_name, int rank) {
  const lrcl::ProjectionMode mode = lrcl::parse_projection_mode(mode_name);
  if (rank < 1) throw lrcl::UsageError("--rank must be >= 1");
  lrcl::Rng input_rng(123, "inputs");

  if (arch == "simbav2") {
    lrcl::SimbaConfig cfg;
    std::cout << "simbav2: d_h=" << cfg.d_h << " blocks=" << cfg.blocks
              << " head_rows=" << cfg.head_rows << "\n";
    const Eigen::MatrixXd x = input_rng.normal_matrix(cfg.d_in, 16);

    lrcl::Rng build_rng(7, "weights");
    lrcl::SimbaCritic critic = lrcl::SimbaCritic::build(cfg, build_rng);
    std::vector<Eigen::MatrixXd> trace;
    critic.forward(x, &trace);
    double worst = 0.0;
    for (const Eigen::MatrixXd& h : trace)
      for (Eigen::Index c = 0; c < h.cols(); ++c)
        worst = std::max(worst, std::abs(h.col(c).norm() - 1.0));
    std::cout << "forward: " << trace.size() << " normalized representations, max |norm - 1| = "
              << worst << "\n";
    if (worst > 1e-10) throw lrcl::CheckError("simbav2 hidden states left the unit sphere");

    if (mode == lrcl::ProjectionMode::ProjectLora) {
      lrcl::LoraWrapSpec spec;
      spec.rank = rank;
      spec.init = lrcl::LoRAInitSpec::parse("normal-both");
      spec.kappa = 0.5;
      lrcl::Rng wrap_rng(8, "weights");
      critic.lora_wrap(spec, wrap_rng);
      lrcl::post_update_hook(critic, mode);
      print_effective_row_report("after project_lora hook (rank " + std::to_string(rank) + ")",
                                 critic.registry(), critic.hook_maps());
    } else if (mode == lrcl::ProjectionMode::RowNormalize) {
      lrcl::post_update_hook(critic, mode);
      print_effective_row_report("after row_normalize hook", critic.registry(),
                                 critic.hook_maps());
    }

    {
      lrcl::SimbaConfig small = cfg;
      lrcl::Rng grad_rng(15, "weights");
      lrcl::SimbaCritic gc = lrcl::SimbaCritic::build(small, grad_rng);
      lrcl::Rng gx_rng(16, "inputs");
      const Eigen::MatrixXd gx = gx_rng.normal_matrix(small.d_in, 4);
      const lrcl::GradCheckResult gr =
          lrcl::detail::grad_check_critic(gc, gx, small.head_rows, true, 77);
      std::cout << "gradient check: max relative error " << gr.max_rel << " over "
                << gr.coords_checked << " coordinates\n";
      if (!gr.ok) throw lrcl::CheckError("simbav2 gradient check failed: " + gr.worst);
    }

    print_param_table<lrcl::SimbaCritic>(
        [&] {
          lrcl::Rng rng(7, "weights");
          return lrcl::SimbaCritic::build(cfg, rng);
        },
        0.8 * cfg.d_h);
    return 0;
  }

  if (arch == "bronet") {
    lrcl::BroConfig cfg;
    std::cout << "bronet: d_h=" << cfg.d_h << " blocks=" << cfg.blocks
              << " head_rows=" << cfg.head_rows << "\n";
    if (mode != lrcl::ProjectionMode::None)
      throw lrcl::UsageError(
          "bronet keeps weight rows unconstrained (layer norm architecture); "
          "projection hooks apply only to simbav2");
    const Eigen::MatrixXd x = input_rng.normal_matrix(cfg.d_in, 16);

    lrcl::Rng build_rng(7, "weights");
    lrcl::BroCritic critic = lrcl::BroCritic::build(cfg, build_rng);
    std::vector<Eigen::MatrixXd> ln_trace;
    critic.forward(x, &ln_trace);
    std::cout << "layer norm outputs (" << ln_trace.size() << " sites):\n";
    double worst_mean = 0.0, worst_var = 0.0;
    for (std::size_t i = 0; i < ln_trace.size(); ++i) {
      const Eigen::MatrixXd& n = ln_trace[i];
      double mean_err = 0.0, var_err = 0.0;
      for (Eigen::Index c = 0; c < n.cols(); ++c) {
        const double mean = n.col(c).mean();
        const double var = (n.col(c).array() - mean).square().mean();
        mean_err = std::max(mean_err, std::abs(mean));
        var_err = std::max(var_err, std::abs(var - 1.0));
      }
      std::cout << "  site " << i << ": max |col mean| = " << mean_err
                << ", max |col var - 1| = " << var_err << "\n";
      worst_mean = std::max(worst_mean, mean_err);
      worst_var = std::max(worst_var, var_err);
    }
    // At init gamma=1, beta=0, so columns are exactly standardized up to the
    // eps in the variance denominator.
    if (worst_mean > 1e-12 || worst_var > 1e-3)
      throw lrcl::CheckError("bronet layer norm statistics off");

    {
      lrcl::Rng grad_rng(15, "weights");
      lrcl::BroCritic gc = lrcl::BroCritic::build(cfg, grad_rng);
      lrcl::Rng gx_rng(16, "inputs");
      const Eigen::MatrixXd gx = gx_rng.normal_matrix(cfg.d_in, 4);
      const lrcl::GradCheckResult gr =
          lrcl::detail::grad_check_critic(gc, gx, cfg.head_rows, true, 78);
      std::cout << "gradient check: max relative error " << gr.max_rel << " over "
                << gr.coords_checked << " coordinates\n";
      if (!gr.ok) throw lrcl::CheckError("bronet gradient check failed: " + gr.worst);
    }

    print_param_table<lrcl::BroCritic>(
        [&] {
          lrcl::Rng rng(7, "weights");
          return lrcl::BroCritic::build(cfg, rng);
        },
        0.5 * cfg.d_h);
    return 0;
  }

  throw lrcl::UsageError("unknown architecture '" + arch + "' (expected simbav2 or bronet)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"low-rank critic experiments"};
  app.require_subcommand(1);

  RunArgs toy_args;
  std::string ablation;
  CLI::App* toy = app.add_subcommand("toy-run", "train a critic on the chain world");
  add_run_flags(toy, toy_args, "runs/toy");
  toy->add_option("--ablation", ablation,
                  "Preset variant: nobase, lora-nown, pruned, hypersphere-td");

  RunArgs sweep_args;
  CLI::App* sweep = app.add_subcommand("sweep", "rank sweep over both regimes");
  add_run_flags(sweep, sweep_args, "runs/sweep");

  std::vector<std::string> suites;
  CLI::App* check = app.add_subcommand("check", "run property suites");
  check->add_option("suites", suites,
                    "world, lemma1, projection, incompatibility, categorical, gradients");

  std::string arch, mode = "none";
  int demo_rank = 4;
  CLI::App* demo = app.add_subcommand("arch-demo", "desk-scale architecture report");
  demo->add_option("arch", arch, "simbav2 or bronet")->required();
  demo->add_option("--mode", mode, "none, row_normalize or project_lora")->default_val("none");
  demo->add_option("--rank", demo_rank, "adapter rank for the projection demo")->default_val(4);

  try {
    app.parse(argc, argv);
    if (toy->parsed()) return cmd_toy_run(toy_args, ablation);
    if (sweep->parsed()) return cmd_sweep(sweep_args);
    if (check->parsed()) return cmd_check(suites);
    if (demo->parsed()) return cmd_arch_demo(arch, mode, demo_rank);
    return 1;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const lrcl::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const lrcl::CheckError& e) {
    std::cerr << "check failed: " << e.what() << "\n";
    return 2;
  } catch (const lrcl::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 3;
  }
}
