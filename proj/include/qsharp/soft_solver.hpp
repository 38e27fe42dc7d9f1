#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "qsharp/dist_learn.hpp"
#include "qsharp/mdp.hpp"

namespace qsharp {

constexpr std::uint64_t kDefaultEnumerationBudget = 1'000'000;

/// Exact solution of the KL-regularized control problem: soft values,
/// soft Q, and the induced softmax-over-reference optimal policy.
struct SoftSolution {
  double eta = 1.0;
  std::vector<std::vector<double>> v;                    // [h][x], h in 0..H (v[H] == 0)
  std::vector<std::vector<std::vector<double>>> q;       // [h][x][y]
  std::vector<std::vector<std::vector<double>>> pi_star; // [h][x][y]
};

namespace detail {

// eta * ln sum_y ref[y] * exp(q[y]/eta) with max-subtraction; also emits
// the softmax if out != nullptr. Entries with ref[y] == 0 are excluded.
inline double soft_backup(const std::vector<double>& ref, const std::vector<double>& q,
                          double eta, std::vector<double>* out) {
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t y = 0; y < ref.size(); ++y)
    if (ref[y] > 0.0) hi = std::max(hi, std::log(ref[y]) + q[y] / eta);
  if (!std::isfinite(hi)) throw std::domain_error("reference policy has empty support");
  double acc = 0.0;
  for (std::size_t y = 0; y < ref.size(); ++y)
    if (ref[y] > 0.0) acc += std::exp(std::log(ref[y]) + q[y] / eta - hi);
  const double lse = hi + std::log(acc);
  if (out) {
    out->assign(ref.size(), 0.0);
    for (std::size_t y = 0; y < ref.size(); ++y)
      if (ref[y] > 0.0) (*out)[y] = std::exp(std::log(ref[y]) + q[y] / eta - lse);
  }
  return eta * lse;
}

}  // namespace detail

inline SoftSolution solve_soft_bellman(const DeterministicMdp& mdp, const RefPolicy& ref,
                                       double eta) {
  if (eta <= 0.0) throw std::invalid_argument("eta must be positive");
  SoftSolution sol;
  sol.eta = eta;
  sol.v.resize(mdp.horizon + 1);
  sol.q.resize(mdp.horizon);
  sol.pi_star.resize(mdp.horizon);
  sol.v[mdp.horizon].assign(mdp.state_count(mdp.horizon), 0.0);
  for (int h = mdp.horizon - 1; h >= 0; --h) {
    const int nstates = mdp.state_count(h);
    sol.v[h].assign(nstates, 0.0);
    sol.q[h].assign(nstates, std::vector<double>(mdp.num_actions, 0.0));
    sol.pi_star[h].assign(nstates, std::vector<double>(mdp.num_actions, 0.0));
    for (int x = 0; x < nstates; ++x) {
      for (int y = 0; y < mdp.num_actions; ++y)
        sol.q[h][x][y] = mdp.reward[h][x][y] + sol.v[h + 1][mdp.next[h][x][y]];
      sol.v[h][x] = detail::soft_backup(ref.at(h, x), sol.q[h][x], eta, &sol.pi_star[h][x]);
    }
  }
  return sol;
}

/// eta * ln E_ref[exp(sum of rewards from (h, x [, y]) / eta)] by
/// exhaustive trajectory enumeration -- no dynamic programming. This is
/// the independent oracle for solve_soft_bellman.
inline double enumerate_functional(const DeterministicMdp& mdp, const RefPolicy& ref, double eta,
                                   int h, int x, std::optional<int> y = std::nullopt,
                                   std::uint64_t budget = kDefaultEnumerationBudget) {
  if (eta <= 0.0) throw std::invalid_argument("eta must be positive");
  std::vector<double> terms;  // ln(prob) + return/eta per trajectory
  std::uint64_t visited = 0;

  const std::function<void(int, int, double, double)> dfs = [&](int step, int state, double logp,
                                                                double ret) {
    if (step == mdp.horizon) {
      if (++visited > budget) throw std::runtime_error("enumeration budget exceeded");
      terms.push_back(logp + ret / eta);
      return;
    }
    const auto& row = ref.at(step, state);
    for (int a = 0; a < mdp.num_actions; ++a) {
      if (row[a] <= 0.0) continue;
      dfs(step + 1, mdp.next[step][state][a], logp + std::log(row[a]),
          ret + mdp.reward[step][state][a]);
    }
  };

  if (y) {
    mdp.check_index(h, x, *y);
    dfs(h + 1, mdp.next[h][x][*y], 0.0, mdp.reward[h][x][*y]);
  } else {
    dfs(h, x, 0.0, 0.0);
  }

  const double hi = *std::max_element(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - hi);
  return eta * (hi + std::log(acc));
}

/// Exact finite-support reward-to-go distributions under reference
/// continuation, one per (h, state, action), by backward convolution over
/// the deterministic tree.
struct ExactZTable {
  double vmax = 1.0;
  std::vector<std::vector<std::vector<ReturnDistribution>>> dist;  // [h][x][y]

  const ReturnDistribution& at(int h, int x, int y) const { return dist.at(h).at(x).at(y); }
};

namespace detail {

struct SupportList {
  std::vector<double> values;
  std::vector<double> probs;

  void add(double v, double p) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (std::abs(values[i] - v) <= kSupportMergeTol) {
        probs[i] += p;
        return;
      }
    }
    values.push_back(v);
    probs.push_back(p);
  }

  void sort() {
    std::vector<std::size_t> order(values.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> v2(values.size()), p2(values.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      v2[i] = values[order[i]];
      p2[i] = probs[order[i]];
    }
    values.swap(v2);
    probs.swap(p2);
  }
};

}  // namespace detail

inline ExactZTable exact_z_table(const DeterministicMdp& mdp, const RefPolicy& ref,
                                 std::uint64_t budget = kDefaultEnumerationBudget) {
  ExactZTable table;
  table.vmax = mdp.vmax;
  table.dist.resize(mdp.horizon);
  // state-level supports at step h+1, i.e. distribution of rewards from
  // step h+1 onward under the reference
  std::vector<detail::SupportList> below(mdp.state_count(mdp.horizon));
  for (auto& s : below) s.add(0.0, 1.0);

  std::uint64_t work = 0;
  for (int h = mdp.horizon - 1; h >= 0; --h) {
    const int nstates = mdp.state_count(h);
    table.dist[h].assign(nstates, {});
    std::vector<detail::SupportList> here(nstates);
    for (int x = 0; x < nstates; ++x) {
      table.dist[h][x].reserve(mdp.num_actions);
      const auto& row = ref.at(h, x);
      for (int y = 0; y < mdp.num_actions; ++y) {
        detail::SupportList cell;
        const auto& child = below[mdp.next[h][x][y]];
        for (std::size_t i = 0; i < child.values.size(); ++i) {
          if (++work > budget) throw std::runtime_error("enumeration budget exceeded");
          cell.add(mdp.reward[h][x][y] + child.values[i], child.probs[i]);
        }
        cell.sort();
        table.dist[h][x].push_back(
            ReturnDistribution::support(cell.values, cell.probs, mdp.vmax));
        if (row[y] > 0.0)
          for (std::size_t i = 0; i < cell.values.size(); ++i)
            here[x].add(cell.values[i], row[y] * cell.probs[i]);
      }
      here[x].sort();
    }
    below.swap(here);
  }
  return table;
}

struct PolicyEval {
  double value = 0.0;
  double expected_reward = 0.0;
  double kl = 0.0;
};

/// Exact forward evaluation of the KL-regularized value: value =
/// expected_reward - eta * kl, with kl the cumulative KL to the reference
/// along the policy's occupancy. Mass on actions outside the reference
/// support is a hard error.
inline PolicyEval evaluate_policy(const DeterministicMdp& mdp, const RefPolicy& ref,
                                  const PolicyFn& policy, double eta) {
  if (eta <= 0.0) throw std::invalid_argument("eta must be positive");
  std::vector<double> occ(mdp.state_count(0), 0.0);
  occ[mdp.initial_state] = 1.0;
  PolicyEval out;
  for (int h = 0; h < mdp.horizon; ++h) {
    std::vector<double> nxt(mdp.state_count(h + 1), 0.0);
    for (int x = 0; x < mdp.state_count(h); ++x) {
      if (occ[x] <= 0.0) continue;
      const std::vector<double> pi = policy(h, x);
      const auto& rr = ref.at(h, x);
      double local_kl = 0.0;
      for (int y = 0; y < mdp.num_actions; ++y) {
        if (pi[y] <= 0.0) continue;  // 0 * ln(0/q) = 0 convention
        if (rr[y] <= 0.0)
          throw std::domain_error("policy puts mass outside the reference support");
        local_kl += pi[y] * std::log(pi[y] / rr[y]);
        out.expected_reward += occ[x] * pi[y] * mdp.reward[h][x][y];
        nxt[mdp.next[h][x][y]] += occ[x] * pi[y];
      }
      out.kl += occ[x] * local_kl;
    }
    occ = std::move(nxt);
  }
  out.value = out.expected_reward - eta * out.kl;
  return out;
}

/// KL-regularized value/Q tables of an arbitrary policy (backward
/// recursion); needed by the performance-difference identity checks.
struct PolicyValueTables {
  std::vector<std::vector<double>> v;               // [h][x]
  std::vector<std::vector<std::vector<double>>> q;  // [h][x][y]
};

inline PolicyValueTables policy_value_tables(const DeterministicMdp& mdp, const RefPolicy& ref,
                                             const PolicyFn& policy, double eta) {
  if (eta <= 0.0) throw std::invalid_argument("eta must be positive");
  PolicyValueTables out;
  out.v.resize(mdp.horizon + 1);
  out.q.resize(mdp.horizon);
  out.v[mdp.horizon].assign(mdp.state_count(mdp.horizon), 0.0);
  for (int h = mdp.horizon - 1; h >= 0; --h) {
    const int nstates = mdp.state_count(h);
    out.v[h].assign(nstates, 0.0);
    out.q[h].assign(nstates, std::vector<double>(mdp.num_actions, 0.0));
    for (int x = 0; x < nstates; ++x) {
      const std::vector<double> pi = policy(h, x);
      const auto& rr = ref.at(h, x);
      double ev = 0.0;
      double kl = 0.0;
      for (int y = 0; y < mdp.num_actions; ++y) {
        out.q[h][x][y] = mdp.reward[h][x][y] + out.v[h + 1][mdp.next[h][x][y]];
        if (pi[y] <= 0.0) continue;
        if (rr[y] <= 0.0)
          throw std::domain_error("policy puts mass outside the reference support");
        ev += pi[y] * out.q[h][x][y];
        kl += pi[y] * std::log(pi[y] / rr[y]);
      }
      out.v[h][x] = ev - eta * kl;
    }
  }
  return out;
}

}  // namespace qsharp
