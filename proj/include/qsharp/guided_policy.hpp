#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qsharp/dist_learn.hpp"
#include "qsharp/mdp.hpp"
#include "qsharp/soft_solver.hpp"

namespace qsharp {

enum class GuideRule { QSharp, CD };

/// Per-cell source of return distributions driving a guided policy.
using ZSource = std::function<ReturnDistribution(int h, int x, int y)>;

inline ZSource z_source(const ExactZTable& table) {
  return [&table](int h, int x, int y) { return table.at(h, x, y); };
}

inline ZSource z_source(const ZModel& model) {
  return [&model](int h, int x, int y) { return model.predict(h, x, y); };
}

/// SoftSolution as a value source: a point mass at Q* reproduces
/// eta * ln E exp(z/eta) = Q* for the QSharp rule.
inline ZSource z_source(const SoftSolution& sol, double vmax = 1.0) {
  return [&sol, vmax](int h, int x, int y) {
    return ReturnDistribution::point_mass(sol.q.at(h).at(x).at(y), vmax);
  };
}

/// Reference policy reweighted by a return-distribution statistic. The
/// QSharp rule weights by the exponential moment E[exp(z/eta)] and the CD
/// rule by exp(mean(z)/eta); support never grows beyond the reference's.
class GuidedPolicy {
 public:
  GuidedPolicy(const RefPolicy& ref, ZSource values, double eta, GuideRule rule,
               std::optional<int> top_k = std::nullopt)
      : ref_(&ref), values_(std::move(values)), eta_(eta), rule_(rule), top_k_(top_k) {
    if (eta <= 0.0) throw std::invalid_argument("eta must be positive");
    if (top_k && *top_k < 1) throw std::invalid_argument("top_k must be positive");
  }

  double eta() const { return eta_; }
  GuideRule rule() const { return rule_; }

  std::vector<double> action_distribution(int h, int x) const {
    const std::vector<double>& ref_row = ref_->at(h, x);
    std::vector<char> keep(ref_row.size(), 1);
    if (top_k_ && static_cast<std::size_t>(*top_k_) < ref_row.size()) {
      std::vector<int> order(ref_row.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return ref_row[a] > ref_row[b]; });
      keep.assign(ref_row.size(), 0);
      for (int i = 0; i < *top_k_; ++i) keep[order[i]] = 1;
    }

    std::vector<double> logits(ref_row.size(), -std::numeric_limits<double>::infinity());
    bool any = false;
    for (std::size_t y = 0; y < ref_row.size(); ++y) {
      if (!keep[y] || ref_row[y] <= 0.0) continue;
      const ReturnDistribution z = values_(h, x, static_cast<int>(y));
      const double weight = rule_ == GuideRule::QSharp ? log_exp_moment(z, eta_)
                                                       : z.mean() / eta_;
      logits[y] = std::log(ref_row[y]) + weight;
      any = true;
    }
    if (!any) throw std::domain_error("reference policy has empty support");

    const double hi = *std::max_element(logits.begin(), logits.end());
    double acc = 0.0;
    for (double l : logits)
      if (std::isfinite(l)) acc += std::exp(l - hi);
    const double lse = hi + std::log(acc);
    std::vector<double> out(ref_row.size(), 0.0);
    for (std::size_t y = 0; y < ref_row.size(); ++y)
      if (std::isfinite(logits[y])) out[y] = std::exp(logits[y] - lse);
    return out;
  }

  PolicyFn as_policy() const {
    return [this](int h, int x) { return action_distribution(h, x); };
  }

  int sample_action(int h, int x, Rng& rng) const { return rng.sample(action_distribution(h, x)); }

  // argmax, ties broken toward the lowest action index
  int greedy_action(int h, int x) const {
    const std::vector<double> dist = action_distribution(h, x);
    int best = 0;
    for (std::size_t y = 1; y < dist.size(); ++y)
      if (dist[y] > dist[best]) best = static_cast<int>(y);
    return best;
  }

 private:
  const RefPolicy* ref_;
  ZSource values_;
  double eta_;
  GuideRule rule_;
  std::optional<int> top_k_;
};

/// Reward-model score of a complete trajectory: the guided value
/// eta * ln E[exp(z/eta)] at its final (state, action) cell.
inline double score_completion(const ZSource& values, double eta, const Trajectory& traj) {
  if (traj.steps.empty()) throw std::invalid_argument("score_completion: empty trajectory");
  const int h = traj.start_h + static_cast<int>(traj.steps.size()) - 1;
  const Trajectory::Step& last = traj.steps.back();
  return eta * log_exp_moment(values(h, last.state, last.action), eta);
}

/// Index of the top-scoring completion, earliest on ties.
inline std::size_t best_of_n(const std::vector<double>& scores) {
  if (scores.empty()) throw std::invalid_argument("best_of_n: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

/// Sums scores per distinct answer and returns the argmax-sum answer
/// (earliest first occurrence on ties).
template <typename Answer>
Answer weighted_vote(const std::vector<Answer>& answers, const std::vector<double>& scores) {
  if (answers.empty() || answers.size() != scores.size())
    throw std::invalid_argument("weighted_vote: empty or misaligned input");
  std::vector<Answer> seen;
  std::vector<double> totals;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    const auto it = std::find(seen.begin(), seen.end(), answers[i]);
    if (it == seen.end()) {
      seen.push_back(answers[i]);
      totals.push_back(scores[i]);
    } else {
      totals[static_cast<std::size_t>(it - seen.begin())] += scores[i];
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < totals.size(); ++i)
    if (totals[i] > totals[best]) best = i;
  return seen[best];
}

}  // namespace qsharp
