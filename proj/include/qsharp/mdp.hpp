#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qsharp/rng.hpp"

namespace qsharp {

/// Finite-horizon MDP with deterministic transitions. Step indices are
/// 0-based internally: h runs over 0..horizon-1 and states at step h are
/// 0..states_per_step[h]-1. states_per_step has horizon+1 entries so the
/// terminal layer is addressable.
struct DeterministicMdp {
  int horizon = 0;
  std::vector<int> states_per_step;
  int num_actions = 0;
  double vmax = 1.0;
  int initial_state = 0;
  // next[h][x][y], reward[h][x][y]
  std::vector<std::vector<std::vector<int>>> next;
  std::vector<std::vector<std::vector<double>>> reward;

  int state_count(int h) const { return states_per_step.at(h); }

  void check_index(int h, int x, int y) const {
    if (h < 0 || h >= horizon) throw std::out_of_range("step index out of range");
    if (x < 0 || x >= states_per_step[h]) throw std::out_of_range("state index out of range");
    if (y < 0 || y >= num_actions) throw std::out_of_range("action index out of range");
  }

  void validate() const {
    if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
    if (static_cast<int>(states_per_step.size()) != horizon + 1)
      throw std::invalid_argument("states_per_step must have horizon+1 entries");
    if (vmax <= 0.0) throw std::invalid_argument("vmax must be positive");
    for (int h = 0; h < horizon; ++h) {
      for (int x = 0; x < states_per_step[h]; ++x) {
        for (int y = 0; y < num_actions; ++y) {
          const int nx = next[h][x][y];
          if (nx < 0 || nx >= states_per_step[h + 1])
            throw std::invalid_argument("successor state out of range");
          const double r = reward[h][x][y];
          if (r < 0.0 || r > vmax)
            throw std::invalid_argument("reward outside [0, vmax]");
        }
      }
    }
  }
};

/// Action distributions of the reference policy, one per (step, state).
struct RefPolicy {
  std::vector<std::vector<std::vector<double>>> probs;  // [h][x][y]

  const std::vector<double>& at(int h, int x) const { return probs.at(h).at(x); }

  void validate(const DeterministicMdp& mdp) const {
    for (int h = 0; h < mdp.horizon; ++h) {
      for (int x = 0; x < mdp.state_count(h); ++x) {
        const auto& row = probs.at(h).at(x);
        if (static_cast<int>(row.size()) != mdp.num_actions)
          throw std::invalid_argument("reference policy row has wrong arity");
        double sum = 0.0;
        for (double p : row) {
          if (p < 0.0) throw std::invalid_argument("negative reference probability");
          sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-12)
          throw std::invalid_argument("reference probabilities do not sum to 1");
      }
    }
  }
};

/// A (possibly partial) trajectory. steps[i] is the transition taken at
/// step start_h + i; rewards_to_go[i] sums rewards from that step onward.
struct Trajectory {
  struct Step {
    int state;
    int action;
    double reward;
  };
  int start_h = 0;
  std::vector<Step> steps;
  std::vector<double> rewards_to_go;

  double total_return() const { return rewards_to_go.empty() ? 0.0 : rewards_to_go.front(); }

  void fill_rewards_to_go() {
    rewards_to_go.assign(steps.size(), 0.0);
    double acc = 0.0;
    for (int i = static_cast<int>(steps.size()) - 1; i >= 0; --i) {
      acc += steps[i].reward;
      rewards_to_go[i] = acc;
    }
  }
};

/// Anything that hands out an action distribution per (step, state).
using PolicyFn = std::function<std::vector<double>(int h, int x)>;

inline PolicyFn as_policy(const RefPolicy& ref) {
  return [&ref](int h, int x) { return ref.at(h, x); };
}

inline std::pair<int, double> step(const DeterministicMdp& mdp, int h, int x, int y) {
  mdp.check_index(h, x, y);
  return {mdp.next[h][x][y], mdp.reward[h][x][y]};
}

inline Trajectory rollout(const DeterministicMdp& mdp, const PolicyFn& policy, int start_h,
                          int start_x, Rng& rng) {
  Trajectory traj;
  traj.start_h = start_h;
  int x = start_x;
  for (int h = start_h; h < mdp.horizon; ++h) {
    const std::vector<double> dist = policy(h, x);
    if (static_cast<int>(dist.size()) != mdp.num_actions)
      throw std::domain_error("policy returned distribution of wrong arity");
    double sum = 0.0;
    for (double p : dist) {
      if (p < 0.0 || !std::isfinite(p)) throw std::domain_error("policy returned invalid distribution");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw std::domain_error("policy distribution does not sum to 1");
    const int y = rng.sample(dist);
    const auto [nx, r] = step(mdp, h, x, y);
    traj.steps.push_back({x, y, r});
    x = nx;
  }
  traj.fill_rewards_to_go();
  return traj;
}

// Action layout of the two-step counterexample tree: at the root action 0
// goes to the left subtree and action 1 to the right subtree; at the right
// leaf state action 0 pays 1 and action 1 pays 0.
namespace counterexample {
constexpr int kLeft = 0;
constexpr int kRight = 1;
constexpr int kStateLeft = 0;
constexpr int kStateRight = 1;
}  // namespace counterexample

/// Two-step tree MDP where the reference prefers a safe low reward on the
/// left and pays 1 only rarely on the right. The stochastic right-subtree
/// reward is carried by reference randomness over two deterministic
/// actions, keeping the transitions deterministic.
inline std::pair<DeterministicMdp, RefPolicy> build_tree_counterexample(double p_left,
                                                                        double p_right_branch,
                                                                        double r_left,
                                                                        double p_right) {
  if (!(p_left > 0.0 && p_left < 1.0) || !(p_right_branch > 0.0 && p_right_branch < 1.0))
    throw std::invalid_argument("branch probabilities must be interior");
  if (std::abs(p_left + p_right_branch - 1.0) > 1e-12)
    throw std::invalid_argument("branch probabilities must sum to 1");
  if (!(r_left > 0.0 && r_left < 1.0)) throw std::invalid_argument("r_left must be in (0,1)");
  if (!(p_right > 0.0 && p_right < 1.0)) throw std::invalid_argument("p_right must be in (0,1)");

  DeterministicMdp mdp;
  mdp.horizon = 2;
  mdp.states_per_step = {1, 2, 1};
  mdp.num_actions = 2;
  mdp.vmax = 1.0;
  mdp.initial_state = 0;
  mdp.next = {{{counterexample::kStateLeft, counterexample::kStateRight}}, {{0, 0}, {0, 0}}};
  // Rewards land on the leaf step; the root step pays nothing.
  mdp.reward = {{{0.0, 0.0}}, {{r_left, r_left}, {1.0, 0.0}}};
  mdp.validate();

  RefPolicy ref;
  ref.probs = {{{p_left, p_right_branch}},
               {{1.0, 0.0}, {p_right, 1.0 - p_right}}};
  ref.validate(mdp);
  return {std::move(mdp), std::move(ref)};
}

enum class RewardSparsity { TerminalOnly, Dense };

/// Seeded random deterministic MDP with a simplex-sampled reference
/// policy. Rewards are laid out so every trajectory return stays in
/// [0, 1]: terminal-only rewards live on a {0, 1/8, ..., 1} grid and dense
/// per-step rewards are divided by the horizon.
inline std::pair<DeterministicMdp, RefPolicy> build_random_mdp(int horizon, int states,
                                                               int actions,
                                                               RewardSparsity sparsity,
                                                               std::uint64_t seed) {
  if (horizon < 1 || states < 1 || actions < 2)
    throw std::invalid_argument("build_random_mdp: need horizon>=1, states>=1, actions>=2");
  Rng rng(seed);
  DeterministicMdp mdp;
  mdp.horizon = horizon;
  mdp.states_per_step.assign(horizon + 1, states);
  mdp.num_actions = actions;
  mdp.vmax = 1.0;
  mdp.initial_state = 0;
  mdp.next.resize(horizon);
  mdp.reward.resize(horizon);
  for (int h = 0; h < horizon; ++h) {
    mdp.next[h].assign(states, std::vector<int>(actions, 0));
    mdp.reward[h].assign(states, std::vector<double>(actions, 0.0));
    for (int x = 0; x < states; ++x) {
      for (int y = 0; y < actions; ++y) {
        mdp.next[h][x][y] = rng.next_int(states);
        if (sparsity == RewardSparsity::TerminalOnly) {
          if (h == horizon - 1) mdp.reward[h][x][y] = rng.next_int(9) / 8.0;
        } else {
          mdp.reward[h][x][y] = (rng.next_int(9) / 8.0) / horizon;
        }
      }
    }
  }
  mdp.validate();

  RefPolicy ref;
  ref.probs.resize(horizon);
  for (int h = 0; h < horizon; ++h) {
    ref.probs[h].assign(states, std::vector<double>(actions, 0.0));
    for (int x = 0; x < states; ++x) {
      double sum = 0.0;
      for (int y = 0; y < actions; ++y) {
        const double e = -std::log(1.0 - rng.next_double());  // Exp(1) draw
        ref.probs[h][x][y] = e;
        sum += e;
      }
      for (int y = 0; y < actions; ++y) ref.probs[h][x][y] /= sum;
      // renormalize exactly so validate()'s 1e-12 gate holds
      double check = 0.0;
      for (int y = 0; y < actions - 1; ++y) check += ref.probs[h][x][y];
      ref.probs[h][x][actions - 1] = 1.0 - check;
    }
  }
  ref.validate(mdp);
  return {std::move(mdp), std::move(ref)};
}

}  // namespace qsharp
