#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "qsharp/cli.hpp"

namespace {

using qsharp::Config;
using qsharp::ConfigError;
namespace cli = qsharp::cli;

int threads_from_env() {
  if (const char* env = std::getenv("QSHARP_LAB_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

Config load_config(const std::string& path) {
  if (path.empty()) return {};
  return Config::parse_file(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"exact-oracle playground for KL-regularized guided decoding"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", checkpoint_path, eta_grid_text = "0.05,0.1,1,10";
  std::uint64_t seed = 0;
  bool plots = false;
  int threads = threads_from_env();
  double eta = 0.1, p_left = 0.5;
  int count = 100, n_samples = 8;

  const auto common = [&](CLI::App* sub, bool seed_required) {
    sub->add_option("--config", config_path, "flat key = value config file");
    sub->add_option("--out", out_dir, "output directory");
    auto* s = sub->add_option("--seed", seed, "base RNG seed");
    if (seed_required) s->required();
    sub->add_flag("--plots", plots, "also emit SVG plots");
    sub->add_option("--threads", threads, "worker threads (env QSHARP_LAB_THREADS)");
  };

  auto* solve = app.add_subcommand("solve", "dump exact soft-optimal tables");
  common(solve, false);
  solve->add_option("--eta", eta, "regularization strength");
  std::string env_kind;
  solve->add_option("--env", env_kind, "environment kind when no config is given");

  auto* train = app.add_subcommand("train", "run the aggregation training loop");
  common(train, true);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint exactly");
  common(eval, false);
  eval->add_option("--checkpoint", checkpoint_path, "model checkpoint path")->required();
  eval->add_option("--eta", eta, "regularization strength");

  auto* pareto = app.add_subcommand("pareto", "reward-vs-KL sweep on the two-branch tree");
  common(pareto, false);
  pareto->add_option("--eta-grid", eta_grid_text, "comma-separated eta values");
  pareto->add_option("--p-left", p_left, "reference probability of the sure branch");

  auto* stargraph = app.add_subcommand("stargraph", "shortcut-fixing experiment");
  common(stargraph, true);

  auto* battery = app.add_subcommand("battery", "random-environment oracle identity checks");
  common(battery, false);
  battery->add_option("--count", count, "number of random environments");
  battery->add_option("--eta-grid", eta_grid_text, "comma-separated eta values");

  auto* rm_eval = app.add_subcommand("rm-eval", "scored-completion selection accuracies");
  common(rm_eval, true);
  rm_eval->add_option("--eta", eta, "regularization strength");
  rm_eval->add_option("--n", n_samples, "completions per prompt");

  CLI11_PARSE(app, argc, argv);

  try {
    cli::CommandContext ctx{out_dir, seed, plots, threads};
    if (solve->parsed()) {
      Config cfg = load_config(config_path);
      if (!cfg.has("env.kind")) {
        if (env_kind.empty()) throw ConfigError("need --config or --env");
        cfg.set("env.kind", env_kind);
      }
      return cli::run_solve(std::move(cfg), eta, ctx);
    }
    if (train->parsed()) {
      if (config_path.empty()) throw ConfigError("train requires --config");
      return cli::run_train_command(load_config(config_path), ctx);
    }
    if (eval->parsed()) {
      if (config_path.empty()) throw ConfigError("eval requires --config");
      return cli::run_eval_command(load_config(config_path), checkpoint_path, eta, ctx);
    }
    if (pareto->parsed())
      return cli::run_pareto_command(p_left, cli::detail::parse_eta_grid(eta_grid_text), ctx);
    if (stargraph->parsed())
      return cli::run_stargraph_command(load_config(config_path), ctx);
    if (battery->parsed())
      return cli::run_battery_command(count, cli::detail::parse_eta_grid(eta_grid_text), ctx);
    if (rm_eval->parsed())
      return cli::run_rm_eval_command(load_config(config_path), eta, n_samples, ctx);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return cli::kExitConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return cli::kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitCheckFailed;
  }
  return cli::kExitConfigError;
}
