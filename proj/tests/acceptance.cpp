// Acceptance gate: one pass/fail line per criterion, exit 0 only if all pass.
//
// Criteria 2 and 3 include KL clauses that are not attainable under the
// exact full-trajectory KL this library computes (see the README's
// "known-failing acceptance checks" note); they are reported red with the
// measured values rather than being relaxed.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "qsharp/cli.hpp"
#include "qsharp/experiments.hpp"

using namespace qsharp;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("criterion %d: %s (%s)\n", criterion, pass ? "PASS" : "FAIL", detail.c_str());
  if (!pass) ++g_failures;
}

std::string num(double v) { return format_g9(v); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const SweepRow& find_row(const std::vector<SweepRow>& rows, const std::string& method,
                         double eta) {
  for (const auto& row : rows)
    if (row.method == method && row.eta == eta) return row;
  throw std::logic_error("missing sweep row");
}

// --------------------------------------------------------------------------

BatteryResult criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  const BatteryResult res =
      run_random_mdp_battery(100, BatteryLimits{6, 6, 5}, {0.05, 0.1, 1.0, 10.0}, 12345);
  const double secs = seconds_since(t0);
  const bool pass = res.max_oracle_err <= 1e-9 && secs <= 60.0;
  report(1, pass,
         "recursion vs enumeration max error " + num(res.max_oracle_err) + " <= 1e-9 over " +
             std::to_string(res.instances) + " instances x 4 etas, " + num(secs) + " s <= 60 s");
  return res;  // reused by criterion 7
}

void criterion_2() {
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream detail;
  bool pass = true;

  const auto rows = run_counterexample_sweep(0.5, 0.5, {0.01});
  const SweepRow& qs = find_row(rows, "qsharp", 0.01);
  const SweepRow& cd = find_row(rows, "cd", 0.01);
  const double ln2 = std::log(2.0);

  const bool decisive = (1.0 - qs.p_left) > 0.99 && cd.p_left > 0.99;
  pass = pass && decisive;
  detail << "P_qsharp(right) " << num(1.0 - qs.p_left) << " > 0.99, P_cd(left) "
         << num(cd.p_left) << " > 0.99";

  const bool cd_kl = std::abs(cd.kl - ln2) < 0.05;
  pass = pass && cd_kl;
  detail << "; |KL_cd - ln 2| = " << num(std::abs(cd.kl - ln2)) << (cd_kl ? " < " : " !< ")
         << "0.05";

  const bool qs_kl = std::abs(qs.kl - ln2) < 0.05;
  pass = pass && qs_kl;
  detail << "; |KL_qsharp - ln 2| = " << num(std::abs(qs.kl - ln2)) << (qs_kl ? " < " : " !< ")
         << "0.05 [KL_qsharp = " << num(qs.kl) << ", full-trajectory KL includes the ln 20 "
         << "leaf-lottery term]";

  for (const double p_left : {0.1, 0.5, 0.9}) {
    const double p_right = 1.0 - p_left;
    const auto sweep = run_counterexample_sweep(p_left, p_right, {0.001});
    const SweepRow& qsl = find_row(sweep, "qsharp", 0.001);
    const SweepRow& cdl = find_row(sweep, "cd", 0.001);
    const double cd_err = std::abs(cdl.kl - std::log(1.0 / p_left));
    const double qs_err = std::abs(qsl.kl - std::log(1.0 / p_right));
    pass = pass && cd_err < 0.05 && qs_err < 0.05;
    detail << "; p_L=" << num(p_left) << ": |KL_cd - ln(1/p_L)| = " << num(cd_err)
           << (cd_err < 0.05 ? " < " : " !< ") << "0.05, |KL_qsharp - ln(1/p_R)| = "
           << num(qs_err) << (qs_err < 0.05 ? " < " : " !< ") << "0.05";
  }

  const double secs = seconds_since(t0);
  pass = pass && secs <= 5.0;
  detail << "; " << num(secs) << " s <= 5 s";
  report(2, pass, detail.str());
}

void criterion_3() {
  const std::vector<double> grid = {0.01, 0.05, 0.1, 0.5, 1.0, 10.0};
  const auto rows = run_counterexample_sweep(0.5, 0.5, grid);
  std::ostringstream detail;
  bool pass = true;
  bool first = true;
  for (const double eta : grid) {
    if (eta > 0.05) continue;
    const SweepRow& qs = find_row(rows, "qsharp", eta);
    const SweepRow& cd = find_row(rows, "cd", eta);
    const bool reward_ok = qs.expected_reward > cd.expected_reward;
    const bool kl_ok = qs.kl < cd.kl;
    pass = pass && reward_ok && kl_ok;
    detail << (first ? "" : "; ") << "eta=" << num(eta) << ": reward "
           << num(qs.expected_reward) << (reward_ok ? " > " : " !> ")
           << num(cd.expected_reward) << ", KL " << num(qs.kl) << (kl_ok ? " < " : " !< ")
           << num(cd.kl);
    first = false;
  }
  report(3, pass, detail.str());
}

TrainConfig counterexample_train_config(int rounds) {
  TrainConfig cfg;
  cfg.eta = 0.1;
  cfg.rounds = rounds;
  cfg.traj_per_round = 2000;
  cfg.seed = 17;
  cfg.learner.family = LearnerFamily::TabularHistogram;
  cfg.learner.bins = 32;
  cfg.learner.alpha = 0.1;  // lighter smoothing than the library default of 0.5
  return cfg;
}

void criterion_4() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto [mdp, ref] = build_tree_counterexample(0.5, 0.5, 0.1, 0.05);
  const TrainResult res =
      run_training({{&mdp, &ref, nullptr}}, counterexample_train_config(5));
  const double final_subopt = res.reports.back().subopt;
  bool monotone = true;
  for (std::size_t k = 2; k < res.reports.size(); ++k)
    monotone = monotone && res.reports[k].subopt <= res.reports[k - 1].subopt + 1e-4;
  const double secs = seconds_since(t0);
  const bool pass = final_subopt <= 1e-3 && monotone && secs <= 30.0;
  std::ostringstream detail;
  detail << "final suboptimality " << num(final_subopt)
         << (final_subopt <= 1e-3 ? " <= " : " !<= ") << "1e-3; "
         << (monotone ? "non-increasing" : "NOT non-increasing")
         << " after round 2 within 1e-4; " << num(secs) << " s <= 30 s";
  report(4, pass, detail.str());
}

void criterion_5() {
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream detail;
  bool pass = true;
  bool first = true;
  for (const auto [degree, path_len] : {std::pair{5, 5}, std::pair{2, 20}}) {
    TrainConfig cfg;
    cfg.eta = 0.1;
    cfg.rounds = 3;
    cfg.traj_per_round = 2000;
    cfg.seed = 7;
    const StarGraphResult res = run_star_graph_experiment(degree, path_len, 200, 100, cfg);
    const bool ref_ok = std::abs(res.ref_accuracy - 1.0 / degree) <= 1e-12;
    const bool qs_ok = res.qsharp_accuracy >= 0.95;
    const bool cd_ok = res.cd_accuracy >= 0.95;
    pass = pass && ref_ok && qs_ok && cd_ok;
    detail << (first ? "" : "; ") << "G(" << degree << "," << path_len << "): ref "
           << num(res.ref_accuracy) << (ref_ok ? " == " : " != ") << num(1.0 / degree)
           << ", guided " << num(res.qsharp_accuracy) << (qs_ok ? " >= " : " !>= ")
           << "0.95, mean-rule " << num(res.cd_accuracy) << (cd_ok ? " >= " : " !>= ") << "0.95";
    first = false;
  }
  const double secs = seconds_since(t0);
  pass = pass && secs <= 300.0;
  detail << "; " << num(secs) << " s <= 300 s";
  report(5, pass, detail.str());
}

void criterion_6() {
  double worst_cv = 0.0;
  double worst_env = 0.0;
  bool pass = true;
  for (int i = 1; i <= 99; ++i) {
    const double p = i / 100.0;
    for (const double eta : {0.05, 0.1, 0.5, 1.0, 10.0}) {
      const CvEnvelope ce = cv_and_envelope(p, eta);
      pass = pass && !ce.envelope_infinite;
      worst_cv = std::max(worst_cv, ce.cv - std::sqrt((1.0 - p) / p));
      worst_env = std::max(worst_env, ce.envelope - 1.0 / p);
    }
  }
  pass = pass && worst_cv <= 1e-12 && worst_env <= 1e-12;
  report(6, pass,
         "max cv excess over sqrt((1-p)/p) = " + num(worst_cv) +
             " <= 1e-12, max envelope excess over 1/p = " + num(worst_env) + " <= 1e-12");
}

void criterion_7(const BatteryResult& battery) {
  // finite-difference check of the BCE gradient in the logit
  double worst_grad = 0.0;
  const double h = 1e-6;
  for (const double r : {0.0, 1.0})
    for (double logit = -4.0; logit <= 4.0; logit += 0.5) {
      const auto sigmoid = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
      const double analytic = sigmoid(logit) - r;
      const double numeric =
          (bce_loss(r, sigmoid(logit + h)) - bce_loss(r, sigmoid(logit - h))) / (2.0 * h);
      worst_grad = std::max(worst_grad, std::abs(numeric - analytic) / std::abs(analytic));
    }

  const bool pass = battery.max_dv_value_err <= 1e-9 && battery.max_dv_gap <= 1e-9 &&
                    battery.max_pdl_err <= 1e-8 && battery.max_norm_err <= 1e-12 &&
                    battery.support_violations == 0 && battery.max_large_eta_tv <= 1e-4 &&
                    worst_grad <= 1e-6;
  std::ostringstream detail;
  detail << "variational value identity " << num(battery.max_dv_value_err)
         << " <= 1e-9, perturbation gap " << num(battery.max_dv_gap)
         << " <= 1e-9, performance-difference identity " << num(battery.max_pdl_err)
         << " <= 1e-8, normalization " << num(battery.max_norm_err) << " <= 1e-12, "
         << battery.support_violations << " support violations, TV at eta=1e6 "
         << num(battery.max_large_eta_tv) << " <= 1e-4, BCE gradient rel. error "
         << num(worst_grad) << " <= 1e-6";
  report(7, pass, detail.str());
}

void criterion_8() {
  const auto [mdp, ref] = build_tree_counterexample(0.5, 0.5, 0.1, 0.05);
  const TrainResult res =
      run_training({{&mdp, &ref, nullptr}}, counterexample_train_config(50));
  const auto curve = suboptimality_curve(res.reports);

  bool avg_decreasing = true;
  for (std::size_t k = 31; k < 50; ++k) {
    const double avg_prev = curve[k - 1].second / static_cast<double>(k);
    const double avg_here = curve[k].second / static_cast<double>(k + 1);
    avg_decreasing = avg_decreasing && avg_here < avg_prev;
  }

  const auto slope = [&](std::size_t a, std::size_t b) {
    return (res.reports[b].regret_proxy - res.reports[a].regret_proxy) /
           static_cast<double>(b - a);
  };
  const double first_slope = slope(0, 9);
  const double final_slope = slope(40, 49);
  const bool sublinear = final_slope < first_slope;

  std::ostringstream detail;
  detail << "cumulative suboptimality / K "
         << (avg_decreasing ? "decreasing" : "NOT decreasing")
         << " over the final 20 rounds; regret-proxy slope final 10 rounds "
         << num(final_slope) << (sublinear ? " < " : " !< ") << num(first_slope)
         << " first 10 rounds";
  report(8, avg_decreasing && sublinear, detail.str());
}

void criterion_9() {
  namespace qc = qsharp::cli;
  const fs::path base = fs::temp_directory_path() / "qsharp_acceptance";
  fs::remove_all(base);
  bool pass = true;
  std::ostringstream detail;

  {
    Config cfg = Config::parse_string(
        "env.kind = counterexample\n"
        "learner.alpha = 0.1\n"
        "train.rounds = 3\n"
        "train.traj_per_round = 500\n");
    const fs::path a = base / "train_a";
    const fs::path b = base / "train_b";
    pass = pass && qc::run_train_command(cfg, {a.string(), 17, false, 1}) == qc::kExitOk;
    pass = pass && qc::run_train_command(cfg, {b.string(), 17, false, 1}) == qc::kExitOk;
    bool identical = pass;
    for (const char* name : {"run_log.csv", "dataset.csv", "checkpoint_final.txt"})
      identical = identical &&
                  read_file((a / name).string()) == read_file((b / name).string());
    pass = pass && identical;
    detail << "train outputs " << (identical ? "bitwise identical" : "DIFFER")
           << " across reruns";
  }
  {
    Config cfg = Config::parse_string(
        "env.degree = 3\n"
        "env.path_len = 4\n"
        "env.n_train_graphs = 40\n"
        "env.n_test_graphs = 20\n"
        "train.rounds = 2\n"
        "train.traj_per_round = 600\n");
    const fs::path a = base / "sg_a";
    const fs::path b = base / "sg_b";
    pass = pass && qc::run_stargraph_command(cfg, {a.string(), 7, false, 1}) == qc::kExitOk;
    pass = pass && qc::run_stargraph_command(cfg, {b.string(), 7, false, 1}) == qc::kExitOk;
    const bool identical =
        pass && read_file((a / "stargraph.csv").string()) ==
                    read_file((b / "stargraph.csv").string());
    pass = pass && identical;
    detail << "; stargraph outputs " << (identical ? "bitwise identical" : "DIFFER")
           << " across reruns";
  }
  report(9, pass, detail.str());
}

}  // namespace

int main() {
  const BatteryResult battery = criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7(battery);
  criterion_8();
  criterion_9();
  if (g_failures > 0) {
    std::printf("%d criteria failed\n", g_failures);
    return 2;
  }
  std::printf("all criteria passed\n");
  return 0;
}
