#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "qsharp/dist_learn.hpp"
#include "qsharp/guided_policy.hpp"
#include "qsharp/mdp.hpp"
#include "qsharp/soft_solver.hpp"

namespace qsharp {

enum class PrefixMode { Single, All };
enum class AlgoVariant { Practical, Theory };

/// Maps (step, state, action) to a feature vector; set for the logistic
/// learner, empty for tabular ones.
using Featurizer = std::function<std::vector<double>(int h, int x, int y)>;

struct TrainEnv {
  const DeterministicMdp* mdp = nullptr;
  const RefPolicy* ref = nullptr;
  Featurizer featurizer;  // null for tabular learners
};

struct TrainConfig {
  double eta = 0.1;
  int rounds = 2;
  int traj_per_round = 1000;
  PrefixMode prefix_mode = PrefixMode::All;
  AlgoVariant algorithm = AlgoVariant::Practical;
  std::uint64_t seed = 0;
  ModelSpec learner;
  bool filter_uninformative = false;  // drop per-env increments whose samples all agree
  bool exact_diagnostics = true;
};

struct RoundReport {
  int round = 0;
  std::vector<std::size_t> dataset_size_per_h;
  std::size_t dataset_size = 0;
  double fit_loss = 0.0;
  bool exact_available = false;
  double subopt = 0.0;           // V*,eta - V^{pi after this round's refit}
  double expected_reward = 0.0;
  double kl = 0.0;
  double hellinger_sq_mean = 0.0;
  double regret_proxy = 0.0;     // cumulative MLE regret proxy through this round
  double cv_mean = 0.0;
  double envelope_max = 0.0;
};

struct TrainResult {
  ZModel model;
  std::vector<RoundReport> reports;
  RolloutDataset dataset;
  std::vector<ZModel> round_models;  // model deployed during round k (pre-refit)
};

namespace detail {

inline ZSource model_z_source(const ZModel& model, const TrainEnv& env) {
  if (model.spec().family == LearnerFamily::Logistic) {
    if (!env.featurizer) throw std::invalid_argument("logistic learner requires a featurizer");
    const Featurizer& feat = env.featurizer;
    return [&model, feat](int h, int x, int y) {
      return model.predict_from_features(feat(h, x, y));
    };
  }
  return z_source(model);
}

inline double model_log_prob(const ZModel& model, const DatasetRecord& rec) {
  ReturnDistribution z = model.spec().family == LearnerFamily::Logistic
                             ? model.predict_from_features(rec.features)
                             : model.predict(rec.h, rec.state, rec.action);
  return std::log(std::max(z.prob_of(rec.reward_to_go), kProbClamp));
}

}  // namespace detail

/// One round of data collection: N trajectories, each with a uniformly
/// drawn switch time h; roll in with the guided policy, then (practical)
/// hand control back to the reference from step h, or (theory) take one
/// uniformly random action at h first. Records (x_t, y_t, R_t) for t >= h
/// or just t = h depending on the prefix mode.
inline std::vector<DatasetRecord> collect_round(const GuidedPolicy& pik,
                                                const DeterministicMdp& mdp,
                                                const RefPolicy& ref, int n_traj,
                                                PrefixMode prefix_mode, AlgoVariant algorithm,
                                                int round, std::uint64_t seed,
                                                std::uint64_t stream_base = 0,
                                                const Featurizer* featurizer = nullptr) {
  std::vector<DatasetRecord> out;
  const int horizon = mdp.horizon;
  for (int i = 0; i < n_traj; ++i) {
    Rng rng(seed, stream_base + static_cast<std::uint64_t>(i));
    const int switch_h = rng.next_int(horizon);

    int x = mdp.initial_state;
    std::vector<Trajectory::Step> steps;
    steps.reserve(horizon);
    for (int h = 0; h < horizon; ++h) {
      int y;
      if (h < switch_h) {
        y = pik.sample_action(h, x, rng);
      } else if (h == switch_h && algorithm == AlgoVariant::Theory) {
        y = rng.next_int(mdp.num_actions);
      } else {
        y = rng.sample(ref.at(h, x));
      }
      const auto [nx, r] = step(mdp, h, x, y);
      steps.push_back({x, y, r});
      x = nx;
    }

    double reward_to_go = 0.0;
    std::vector<double> rtg(horizon, 0.0);
    for (int h = horizon - 1; h >= 0; --h) {
      reward_to_go += steps[h].reward;
      rtg[h] = reward_to_go;
    }

    const int last = prefix_mode == PrefixMode::All ? horizon - 1 : switch_h;
    for (int t = switch_h; t <= last; ++t) {
      DatasetRecord rec{t, steps[t].state, steps[t].action, rtg[t], round, {}};
      if (featurizer) rec.features = (*featurizer)(t, steps[t].state, steps[t].action);
      out.push_back(std::move(rec));
    }
  }
  return out;
}

inline double mle_regret_proxy(const std::vector<ZModel>& round_models, const ExactZTable& z_star,
                               const RolloutDataset& data) {
  double regret = 0.0;
  for (int h = 0; h < data.horizon(); ++h) {
    for (const auto& rec : data.at(h)) {
      const double log_true =
          std::log(std::max(z_star.at(rec.h, rec.state, rec.action).prob_of(rec.reward_to_go),
                            kProbClamp));
      const ZModel& model = round_models.at(static_cast<std::size_t>(rec.round - 1));
      regret += log_true - detail::model_log_prob(model, rec);
    }
  }
  return regret;
}

/// Per-round suboptimality values paired with their running sum.
inline std::vector<std::pair<double, double>> suboptimality_curve(
    const std::vector<RoundReport>& reports) {
  std::vector<std::pair<double, double>> out;
  double running = 0.0;
  for (const auto& rep : reports) {
    running += rep.subopt;
    out.emplace_back(rep.subopt, running);
  }
  return out;
}

/// The full loop: collect with the current induced policy, aggregate,
/// refit from scratch, report. Exact diagnostics are produced only for a
/// single enumerable environment and are flagged absent otherwise.
inline TrainResult run_training(const std::vector<TrainEnv>& envs, const TrainConfig& cfg) {
  if (envs.empty()) throw std::invalid_argument("run_training: no environments");
  if (cfg.rounds < 1 || cfg.traj_per_round < 1 || cfg.eta <= 0.0)
    throw std::invalid_argument("run_training: invalid config");
  int horizon = 0;
  for (const auto& env : envs) horizon = std::max(horizon, env.mdp->horizon);

  TrainResult result;
  result.dataset = RolloutDataset(horizon);
  result.model = ZModel(cfg.learner);  // uniform p = 1/2 prior; round-1 policy == reference

  std::optional<SoftSolution> sol;
  std::optional<ExactZTable> zstar;
  if (cfg.exact_diagnostics && envs.size() == 1) {
    try {
      sol = solve_soft_bellman(*envs[0].mdp, *envs[0].ref, cfg.eta);
      zstar = exact_z_table(*envs[0].mdp, *envs[0].ref);
    } catch (const std::runtime_error&) {
      sol.reset();  // enumeration budget exceeded: report diagnostics as absent
      zstar.reset();
    }
  }

  const int n_envs = static_cast<int>(envs.size());
  for (int round = 1; round <= cfg.rounds; ++round) {
    result.round_models.push_back(result.model);

    // Per-env trajectory counts; stream ids are globally unique so the
    // whole run is a pure function of the seed.
    for (int e = 0; e < n_envs; ++e) {
      const TrainEnv& env = envs[e];
      const GuidedPolicy pik(*env.ref, detail::model_z_source(result.model, env), cfg.eta,
                             GuideRule::QSharp);
      const int n_here = cfg.traj_per_round / n_envs + (e < cfg.traj_per_round % n_envs ? 1 : 0);
      const std::uint64_t stream_base =
          (static_cast<std::uint64_t>(round - 1) * static_cast<std::uint64_t>(n_envs) + e) *
          static_cast<std::uint64_t>(cfg.traj_per_round);
      std::vector<DatasetRecord> increment =
          collect_round(pik, *env.mdp, *env.ref, n_here, cfg.prefix_mode, cfg.algorithm, round,
                        cfg.seed, stream_base, env.featurizer ? &env.featurizer : nullptr);
      if (cfg.filter_uninformative && !increment.empty()) {
        bool all_hi = true;
        bool all_lo = true;
        for (const auto& rec : increment) {
          all_hi = all_hi && std::abs(rec.reward_to_go - env.mdp->vmax) <= 1e-9;
          all_lo = all_lo && std::abs(rec.reward_to_go) <= 1e-9;
        }
        if (all_hi || all_lo) increment.clear();
      }
      for (auto& rec : increment) result.dataset.append(std::move(rec));
    }

    if (result.dataset.total_size() > 0) result.model = fit_z_model(result.dataset, cfg.learner);

    RoundReport rep;
    rep.round = round;
    rep.dataset_size = result.dataset.total_size();
    for (int h = 0; h < horizon; ++h) rep.dataset_size_per_h.push_back(result.dataset.size(h));
    rep.fit_loss = dataset_loss(result.model, result.dataset);

    if (sol && zstar) {
      rep.exact_available = true;
      const TrainEnv& env = envs[0];
      const GuidedPolicy post(*env.ref, detail::model_z_source(result.model, env), cfg.eta,
                              GuideRule::QSharp);
      const PolicyEval eval = evaluate_policy(*env.mdp, *env.ref, post.as_policy(), cfg.eta);
      rep.subopt = sol->v[0][env.mdp->initial_state] - eval.value;
      rep.expected_reward = eval.expected_reward;
      rep.kl = eval.kl;
      rep.regret_proxy = mle_regret_proxy(result.round_models, *zstar, result.dataset);

      double hell = 0.0;
      double cv = 0.0;
      double env_max = 0.0;
      std::size_t cells = 0;
      for (const auto& [key, cell] : result.model.cells()) {
        const int h = static_cast<int>(key >> 44);
        const int x = static_cast<int>((key >> 22) & 0x3fffff);
        const int y = static_cast<int>(key & 0x3fffff);
        const ReturnDistribution& truth = zstar->at(h, x, y);
        const int bins = std::max(result.model.spec().bins, 2);
        hell += hellinger_sq(discretize(truth, bins), discretize(result.model.predict(h, x, y), bins));
        // generic CV / envelope of the exact cell distribution
        const double lem = log_exp_moment(truth, cfg.eta);
        const double lem2 = log_exp_moment(truth, cfg.eta / 2.0);
        cv += std::sqrt(std::max(std::exp(lem2 - 2.0 * lem) - 1.0, 0.0));
        env_max = std::max(env_max, std::exp((env.mdp->vmax - cfg.eta * lem) / cfg.eta));
        ++cells;
      }
      if (cells > 0) {
        rep.hellinger_sq_mean = hell / static_cast<double>(cells);
        rep.cv_mean = cv / static_cast<double>(cells);
        rep.envelope_max = env_max;
      }
      if (rep.subopt < -1e-9) throw std::logic_error("negative suboptimality beyond tolerance");
    }
    result.reports.push_back(std::move(rep));
  }
  return result;
}

}  // namespace qsharp
