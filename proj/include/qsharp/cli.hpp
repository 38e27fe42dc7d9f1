#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qsharp/config.hpp"
#include "qsharp/experiments.hpp"
#include "qsharp/io.hpp"
#include "qsharp/serialize.hpp"
#include "qsharp/train.hpp"

namespace qsharp::cli {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitCheckFailed = 2;

inline const std::set<std::string> kKnownKeys = {
    // env
    "env.kind", "env.p_left", "env.p_right", "env.r_left", "env.p_reward", "env.degree",
    "env.path_len", "env.vocab_size", "env.n_train_graphs", "env.n_test_graphs", "env.horizon",
    "env.states", "env.actions", "env.sparsity", "env.seed",
    // learner
    "learner.family", "learner.alpha", "learner.bins", "learner.learning_rate",
    "learner.max_epochs", "learner.loss_tol",
    // train
    "train.eta", "train.rounds", "train.traj_per_round", "train.prefix_mode", "train.algorithm",
    "train.filter_uninformative",
    // eval
    "eval.mode", "eval.samples"};

struct EnvBundle {
  DeterministicMdp mdp;
  RefPolicy ref;
  std::optional<StarGraphInstance> instance;
};

/// Builds the environment named by env.kind, materializing defaults into
/// the config so the manifest is self-contained.
inline EnvBundle make_env(Config& cfg, std::uint64_t seed) {
  EnvBundle env;
  const std::string kind = cfg.get_string("env.kind");
  if (kind == "counterexample") {
    const double p_left = cfg.get_double("env.p_left", 0.5);
    const double p_right = cfg.get_double("env.p_right", 1.0 - p_left);
    const double r_left = cfg.get_double("env.r_left", 0.1);
    const double p_reward = cfg.get_double("env.p_reward", 0.05);
    auto [mdp, ref] = build_tree_counterexample(p_left, p_right, r_left, p_reward);
    env.mdp = std::move(mdp);
    env.ref = std::move(ref);
  } else if (kind == "star_graph") {
    const int degree = static_cast<int>(cfg.get_int("env.degree", 5));
    const int path_len = static_cast<int>(cfg.get_int("env.path_len", 5));
    int vocab = static_cast<int>(cfg.get_int("env.vocab_size", 0));
    if (vocab == 0) {
      vocab = degree * path_len + 1;
      cfg.set("env.vocab_size", std::to_string(vocab));
    }
    const std::uint64_t env_seed = cfg.has("env.seed")
                                       ? static_cast<std::uint64_t>(cfg.get_int("env.seed"))
                                       : seed;
    cfg.set("env.seed", std::to_string(env_seed));
    auto [inst, mdp, ref] = build_star_graph(degree, path_len, vocab, env_seed);
    env.instance = std::move(inst);
    env.mdp = std::move(mdp);
    env.ref = std::move(ref);
  } else if (kind == "random") {
    const int horizon = static_cast<int>(cfg.get_int("env.horizon", 3));
    const int states = static_cast<int>(cfg.get_int("env.states", 4));
    const int actions = static_cast<int>(cfg.get_int("env.actions", 3));
    const std::string sparsity = cfg.get_string("env.sparsity", "terminal_only");
    if (sparsity != "terminal_only" && sparsity != "dense")
      throw ConfigError("env.sparsity must be terminal_only or dense");
    const std::uint64_t env_seed = cfg.has("env.seed")
                                       ? static_cast<std::uint64_t>(cfg.get_int("env.seed"))
                                       : seed;
    cfg.set("env.seed", std::to_string(env_seed));
    auto [mdp, ref] = build_random_mdp(
        horizon, states, actions,
        sparsity == "dense" ? RewardSparsity::Dense : RewardSparsity::TerminalOnly, env_seed);
    env.mdp = std::move(mdp);
    env.ref = std::move(ref);
  } else {
    throw ConfigError("env.kind must be counterexample, star_graph or random");
  }
  return env;
}

inline ModelSpec make_learner(Config& cfg, double vmax) {
  ModelSpec spec;
  const std::string family = cfg.get_string("learner.family", "tabular_histogram");
  if (family == "tabular_histogram")
    spec.family = LearnerFamily::TabularHistogram;
  else if (family == "tabular_bernoulli")
    spec.family = LearnerFamily::TabularBernoulli;
  else if (family == "logistic")
    spec.family = LearnerFamily::Logistic;
  else
    throw ConfigError("learner.family must be tabular_histogram, tabular_bernoulli or logistic");
  spec.vmax = vmax;
  spec.alpha = cfg.get_double("learner.alpha", 0.5);
  spec.bins = static_cast<int>(cfg.get_int("learner.bins", 32));
  spec.learning_rate = cfg.get_double("learner.learning_rate", 0.5);
  spec.max_epochs = static_cast<int>(cfg.get_int("learner.max_epochs", 2000));
  spec.loss_tol = cfg.get_double("learner.loss_tol", 1e-9);
  if (spec.alpha <= 0.0) throw ConfigError("learner.alpha must be positive");
  if (spec.bins < 1) throw ConfigError("learner.bins must be positive");
  return spec;
}

inline TrainConfig make_train_config(Config& cfg, std::uint64_t seed, double vmax) {
  TrainConfig tc;
  tc.eta = cfg.get_double("train.eta", 0.1);
  if (tc.eta <= 0.0) throw ConfigError("train.eta must be positive");
  tc.rounds = static_cast<int>(cfg.get_int("train.rounds", 2));
  tc.traj_per_round = static_cast<int>(cfg.get_int("train.traj_per_round", 1000));
  if (tc.rounds < 1 || tc.traj_per_round < 1)
    throw ConfigError("train.rounds and train.traj_per_round must be >= 1");
  const std::string prefix = cfg.get_string("train.prefix_mode", "all");
  if (prefix == "all")
    tc.prefix_mode = PrefixMode::All;
  else if (prefix == "single")
    tc.prefix_mode = PrefixMode::Single;
  else
    throw ConfigError("train.prefix_mode must be all or single");
  const std::string algo = cfg.get_string("train.algorithm", "practical");
  if (algo == "practical")
    tc.algorithm = AlgoVariant::Practical;
  else if (algo == "theory")
    tc.algorithm = AlgoVariant::Theory;
  else
    throw ConfigError("train.algorithm must be practical or theory");
  tc.filter_uninformative = cfg.get_bool("train.filter_uninformative", false);
  tc.seed = seed;
  tc.learner = make_learner(cfg, vmax);
  return tc;
}

struct CommandContext {
  std::string out_dir;
  std::uint64_t seed = 0;
  bool plots = false;
  int threads = 1;  // inner parallelism knob; execution is serial either way
};

namespace detail {

inline std::string out_path(const CommandContext& ctx, const std::string& name) {
  std::filesystem::create_directories(ctx.out_dir);
  return (std::filesystem::path(ctx.out_dir) / name).string();
}

struct ManifestScope {
  RunManifest manifest;
  std::string path;

  ManifestScope(const CommandContext& ctx, std::string command, const Config& cfg) {
    manifest.command = std::move(command);
    manifest.seed = ctx.seed;
    manifest.started_at = RunManifest::timestamp();
    manifest.resolved_config = cfg.serialize();
    path = out_path(ctx, "manifest.txt");
  }

  void finish(const std::string& error = "") {
    manifest.error = error;
    manifest.finished_at = RunManifest::timestamp();
    manifest.write(path);
  }
};

inline std::vector<double> parse_eta_grid(const std::string& text) {
  std::vector<double> grid;
  std::istringstream in(text);
  std::string token;
  while (std::getline(in, token, ',')) {
    const double eta = std::stod(token);
    if (eta <= 0.0) throw ConfigError("eta grid entries must be positive");
    grid.push_back(eta);
  }
  if (grid.empty()) throw ConfigError("empty eta grid");
  return grid;
}

}  // namespace detail

/// `solve`: dump exact oracles (soft solution + reward-to-go table) for an
/// environment at one eta.
inline int run_solve(Config cfg, double eta, const CommandContext& ctx) {
  cfg.validate_keys(kKnownKeys);
  EnvBundle env = make_env(cfg, ctx.seed);
  detail::ManifestScope scope(ctx, "solve", cfg);
  try {
    const SoftSolution sol = solve_soft_bellman(env.mdp, env.ref, eta);
    const ExactZTable table = exact_z_table(env.mdp, env.ref);
    solution_to_csv(env.mdp, sol).write(detail::out_path(ctx, "q.csv"));
    values_to_csv(env.mdp, sol).write(detail::out_path(ctx, "values.csv"));
    z_table_to_csv(env.mdp, table).write(detail::out_path(ctx, "ztable.csv"));
    mdp_to_csv(env.mdp, env.ref).write(detail::out_path(ctx, "mdp.csv"));
    scope.manifest.add_output(detail::out_path(ctx, "q.csv"));
    scope.manifest.add_output(detail::out_path(ctx, "values.csv"));
    scope.manifest.add_output(detail::out_path(ctx, "ztable.csv"));
    scope.manifest.add_output(detail::out_path(ctx, "mdp.csv"));
    scope.finish();
    return kExitOk;
  } catch (const std::exception& e) {
    scope.finish(e.what());
    std::cerr << "solve failed: " << e.what() << "\n";
    return kExitCheckFailed;
  }
}

inline const std::vector<std::string> kRunLogHeader = {
    "round",        "eta", "subopt",           "expected_reward", "kl",
    "fit_loss",     "dataset_size", "hellinger_sq_mean", "regret_proxy"};

/// `train`: the aggregation loop on a single environment with per-round
/// checkpoints and the run-log CSV.
inline int run_train_command(Config cfg, const CommandContext& ctx) {
  cfg.validate_keys(kKnownKeys);
  EnvBundle env = make_env(cfg, ctx.seed);
  TrainConfig tc = make_train_config(cfg, ctx.seed, env.mdp.vmax);
  detail::ManifestScope scope(ctx, "train", cfg);
  try {
    const std::vector<TrainEnv> envs = {{&env.mdp, &env.ref, nullptr}};
    const TrainResult result = run_training(envs, tc);

    CsvTable log;
    log.header = kRunLogHeader;
    for (const auto& rep : result.reports)
      log.add_row({std::to_string(rep.round), format_g9(tc.eta), format_g9(rep.subopt),
                   format_g9(rep.expected_reward), format_g9(rep.kl), format_g9(rep.fit_loss),
                   std::to_string(rep.dataset_size), format_g9(rep.hellinger_sq_mean),
                   format_g9(rep.regret_proxy)});
    const std::string log_path = detail::out_path(ctx, "run_log.csv");
    log.write(log_path);
    scope.manifest.add_output(log_path);

    const std::string model_path = detail::out_path(ctx, "checkpoint_final.txt");
    std::ofstream(model_path) << save_z_model(result.model);
    scope.manifest.add_output(model_path);
    for (std::size_t k = 0; k < result.round_models.size(); ++k) {
      const std::string ck =
          detail::out_path(ctx, "checkpoint_round_" + std::to_string(k + 1) + ".txt");
      std::ofstream(ck) << save_z_model(result.round_models[k]);
      scope.manifest.add_output(ck);
    }
    const std::string data_path = detail::out_path(ctx, "dataset.csv");
    dataset_to_csv(result.dataset).write(data_path);
    scope.manifest.add_output(data_path);

    if (ctx.plots) {
      SvgPlot plot;
      plot.title = "suboptimality per round";
      plot.x_label = "round";
      plot.y_label = "V* - V";
      SvgPlot::Series s{"subopt", "steelblue", {}};
      for (const auto& rep : result.reports)
        s.points.emplace_back(static_cast<double>(rep.round), rep.subopt);
      plot.series.push_back(std::move(s));
      const std::string svg = detail::out_path(ctx, "subopt.svg");
      plot.write(svg);
      scope.manifest.add_output(svg);
    }
    scope.finish();
    return kExitOk;
  } catch (const std::exception& e) {
    scope.finish(e.what());
    std::cerr << "train failed: " << e.what() << "\n";
    return kExitCheckFailed;
  }
}

/// `eval`: exact value / KL / pass rate of the guided policy induced by a
/// checkpoint on its environment.
inline int run_eval_command(Config cfg, const std::string& checkpoint_path, double eta,
                            const CommandContext& ctx) {
  cfg.validate_keys(kKnownKeys);
  EnvBundle env = make_env(cfg, ctx.seed);
  detail::ManifestScope scope(ctx, "eval", cfg);
  try {
    const ZModel model = load_z_model(read_file(checkpoint_path));
    const GuidedPolicy gp(env.ref, z_source(model), eta, GuideRule::QSharp);
    const PolicyEval eval = evaluate_policy(env.mdp, env.ref, gp.as_policy(), eta);
    const SoftSolution sol = solve_soft_bellman(env.mdp, env.ref, eta);
    CsvTable csv;
    csv.header = {"eta", "value", "expected_reward", "kl", "subopt"};
    csv.add_row({format_g9(eta), format_g9(eval.value), format_g9(eval.expected_reward),
                 format_g9(eval.kl),
                 format_g9(sol.v[0][env.mdp.initial_state] - eval.value)});
    const std::string path = detail::out_path(ctx, "eval.csv");
    csv.write(path);
    scope.manifest.add_output(path);
    scope.finish();
    return kExitOk;
  } catch (const std::exception& e) {
    scope.finish(e.what());
    std::cerr << "eval failed: " << e.what() << "\n";
    return kExitCheckFailed;
  }
}

/// `pareto`: counterexample sweep CSV (+ optional reward-vs-KL plot).
inline int run_pareto_command(double p_left, const std::vector<double>& eta_grid,
                              const CommandContext& ctx) {
  Config cfg;
  cfg.set("env.kind", "counterexample");
  cfg.set("env.p_left", format_g9(p_left));
  detail::ManifestScope scope(ctx, "pareto", cfg);
  try {
    const std::vector<SweepRow> rows = run_counterexample_sweep(p_left, 1.0 - p_left, eta_grid);
    CsvTable csv;
    csv.header = {"method", "eta", "expected_reward", "kl", "p_left"};
    for (const auto& row : rows)
      csv.add_row({row.method, format_g9(row.eta), format_g9(row.expected_reward),
                   format_g9(row.kl), format_g9(row.p_left)});
    const std::string path = detail::out_path(ctx, "pareto.csv");
    csv.write(path);
    scope.manifest.add_output(path);

    if (ctx.plots) {
      SvgPlot plot;
      plot.title = "reward vs KL";
      plot.x_label = "KL";
      plot.y_label = "expected reward";
      SvgPlot::Series qs{"qsharp", "steelblue", {}};
      SvgPlot::Series cd{"cd", "firebrick", {}};
      for (const auto& row : rows)
        (row.method == "qsharp" ? qs : cd).points.emplace_back(row.kl, row.expected_reward);
      plot.series = {std::move(qs), std::move(cd)};
      const std::string svg = detail::out_path(ctx, "pareto.svg");
      plot.write(svg);
      scope.manifest.add_output(svg);
    }
    scope.finish();
    return kExitOk;
  } catch (const std::exception& e) {
    scope.finish(e.what());
    std::cerr << "pareto failed: " << e.what() << "\n";
    return kExitCheckFailed;
  }
}

/// `stargraph`: the shortcut-fixing experiment; one CSV row per method
/// (and per round for the guided policy).
inline int run_stargraph_command(Config cfg, const CommandContext& ctx) {
  cfg.validate_keys(kKnownKeys);
  cfg.set("env.kind", "star_graph");
  const int degree = static_cast<int>(cfg.get_int("env.degree", 5));
  const int path_len = static_cast<int>(cfg.get_int("env.path_len", 5));
  const int n_train = static_cast<int>(cfg.get_int("env.n_train_graphs", 200));
  const int n_test = static_cast<int>(cfg.get_int("env.n_test_graphs", 100));
  cfg.set("learner.family", "logistic");
  TrainConfig tc = make_train_config(cfg, ctx.seed, 1.0);
  detail::ManifestScope scope(ctx, "stargraph", cfg);
  try {
    const StarGraphResult result =
        run_star_graph_experiment(degree, path_len, n_train, n_test, tc);
    CsvTable csv;
    csv.header = {"d", "ell", "method", "accuracy", "kl_estimate", "round"};
    const auto row = [&](const std::string& method, double acc, double kl, int round) {
      csv.add_row({std::to_string(degree), std::to_string(path_len), method, format_g9(acc),
                   format_g9(kl), std::to_string(round)});
    };
    row("ref", result.ref_accuracy, 0.0, 0);
    for (std::size_t k = 0; k < result.accuracy_per_round.size(); ++k)
      row("qsharp", result.accuracy_per_round[k],
          k + 1 == result.accuracy_per_round.size() ? result.kl_qsharp : 0.0,
          static_cast<int>(k + 1));
    row("cd", result.cd_accuracy, result.kl_cd, tc.rounds);
    const std::string path = detail::out_path(ctx, "stargraph.csv");
    csv.write(path);
    scope.manifest.add_output(path);

    const std::string model_path = detail::out_path(ctx, "checkpoint_final.txt");
    std::ofstream(model_path) << save_z_model(result.model);
    scope.manifest.add_output(model_path);

    if (ctx.plots) {
      SvgPlot plot;
      plot.title = "held-out accuracy per round";
      plot.x_label = "round";
      plot.y_label = "accuracy";
      SvgPlot::Series s{"qsharp", "steelblue", {}};
      for (std::size_t k = 0; k < result.accuracy_per_round.size(); ++k)
        s.points.emplace_back(static_cast<double>(k + 1), result.accuracy_per_round[k]);
      plot.series.push_back(std::move(s));
      const std::string svg = detail::out_path(ctx, "stargraph.svg");
      plot.write(svg);
      scope.manifest.add_output(svg);
    }
    scope.finish();
    if (result.final_fit_loss > 0.3)
      std::cerr << "warning: training BCE plateaued above 0.3; features may not separate\n";
    return kExitOk;
  } catch (const std::exception& e) {
    scope.finish(e.what());
    std::cerr << "stargraph failed: " << e.what() << "\n";
    return kExitCheckFailed;
  }
}

/// `battery`: the random-MDP oracle identity suite; exit 2 on violation.
inline int run_battery_command(int count, const std::vector<double>& eta_grid,
                               const CommandContext& ctx, std::ostream& out = std::cout) {
  Config cfg;
  cfg.set("env.kind", "random");
  detail::ManifestScope scope(ctx, "battery", cfg);
  try {
    const BatteryResult res = run_random_mdp_battery(count, BatteryLimits{}, eta_grid, ctx.seed);
    CsvTable csv;
    csv.header = {"identity", "max_error"};
    csv.add_row({"oracle_equivalence", format_g9(res.max_oracle_err)});
    csv.add_row({"functional_consistency", format_g9(res.max_functional_err)});
    csv.add_row({"donsker_varadhan_value", format_g9(res.max_dv_value_err)});
    csv.add_row({"donsker_varadhan_gap", format_g9(res.max_dv_gap)});
    csv.add_row({"soft_pdl", format_g9(res.max_pdl_err)});
    csv.add_row({"guided_normalization", format_g9(res.max_norm_err)});
    csv.add_row({"support_violations", std::to_string(res.support_violations)});
    csv.add_row({"large_eta_tv", format_g9(res.max_large_eta_tv)});
    csv.add_row({"zero_reward", format_g9(res.max_zero_reward_err)});
    const std::string path = detail::out_path(ctx, "battery.csv");
    csv.write(path);
    scope.manifest.add_output(path);
    for (const auto& row : csv.rows) out << row[0] << ": " << row[1] << "\n";
    if (!res.ok()) {
      scope.finish("oracle identity violated" +
                   (res.failing_seed ? " (seed " + std::to_string(*res.failing_seed) + ")" : ""));
      out << "FAIL" << (res.failing_seed ? " at seed " + std::to_string(*res.failing_seed) : "")
          << "\n";
      return kExitCheckFailed;
    }
    scope.finish();
    out << "OK (" << res.instances << " instances)\n";
    return kExitOk;
  } catch (const std::exception& e) {
    scope.finish(e.what());
    std::cerr << "battery failed: " << e.what() << "\n";
    return kExitCheckFailed;
  }
}

/// `rm-eval`: reward-model accuracies on sampled star-graph completions.
inline int run_rm_eval_command(Config cfg, double eta, int n, const CommandContext& ctx) {
  cfg.validate_keys(kKnownKeys);
  cfg.set("env.kind", "star_graph");
  const int degree = static_cast<int>(cfg.get_int("env.degree", 5));
  const int path_len = static_cast<int>(cfg.get_int("env.path_len", 5));
  int vocab = static_cast<int>(cfg.get_int("env.vocab_size", 0));
  if (vocab == 0) vocab = degree * path_len + 1;
  const int n_graphs = static_cast<int>(cfg.get_int("env.n_test_graphs", 50));
  detail::ManifestScope scope(ctx, "rm-eval", cfg);
  try {
    const StarGraphEnvSet envs =
        make_star_graph_set(degree, path_len, vocab, n_graphs, ctx.seed, nullptr);
    const RmEvalResult res = run_rm_eval(envs, eta, n, ctx.seed ^ 0x9e3779b97f4a7c15ULL);
    CsvTable csv;
    csv.header = {"eta", "n", "pass_at_1", "best_of_n_acc", "weighted_vote_acc",
                  "majority_vote_acc"};
    csv.add_row({format_g9(eta), std::to_string(n), format_g9(res.pass_at_1),
                 format_g9(res.best_of_n_acc), format_g9(res.weighted_vote_acc),
                 format_g9(res.majority_vote_acc)});
    const std::string path = detail::out_path(ctx, "rm_eval.csv");
    csv.write(path);
    scope.manifest.add_output(path);
    scope.finish();
    return kExitOk;
  } catch (const std::exception& e) {
    scope.finish(e.what());
    std::cerr << "rm-eval failed: " << e.what() << "\n";
    return kExitCheckFailed;
  }
}

}  // namespace qsharp::cli
