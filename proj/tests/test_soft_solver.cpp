#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "qsharp/mdp.hpp"
#include "qsharp/soft_solver.hpp"

using namespace qsharp;

namespace {
const auto tree = build_tree_counterexample(0.5, 0.5, 0.1, 0.05);
const DeterministicMdp& kTree = tree.first;
const RefPolicy& kTreeRef = tree.second;
}  // namespace

TEST_CASE("root action values match their closed forms at every temperature") {
  for (const double eta : {0.01, 0.05, 0.1, 0.5, 1.0, 10.0}) {
    const SoftSolution sol = solve_soft_bellman(kTree, kTreeRef, eta);
    const double q_right = eta * std::log(0.05 * std::exp(1.0 / eta) + 0.95);
    REQUIRE(std::abs(sol.q[0][0][counterexample::kRight] - q_right) <= 1e-9 * (1.0 + q_right));
    REQUIRE(std::abs(sol.q[0][0][counterexample::kLeft] - 0.1) <= 1e-12);
    // direct enumeration agrees without any recursion
    REQUIRE(std::abs(enumerate_functional(kTree, kTreeRef, eta, 0, 0, counterexample::kLeft) -
                     0.1) <= 1e-12);
    REQUIRE(std::abs(enumerate_functional(kTree, kTreeRef, eta, 0, 0, counterexample::kRight) -
                     q_right) <= 1e-9);
  }
}

TEST_CASE("zero rewards collapse the solution onto the reference") {
  auto [mdp, ref] = build_random_mdp(4, 3, 3, RewardSparsity::Dense, 5);
  for (auto& layer : mdp.reward)
    for (auto& row : layer)
      for (double& r : row) r = 0.0;
  const SoftSolution sol = solve_soft_bellman(mdp, ref, 0.1);
  for (int h = 0; h <= mdp.horizon; ++h)
    for (double v : sol.v[h]) REQUIRE(std::abs(v) <= 1e-15);
  for (int h = 0; h < mdp.horizon; ++h)
    for (int x = 0; x < mdp.state_count(h); ++x)
      for (int y = 0; y < mdp.num_actions; ++y)
        REQUIRE(std::abs(sol.pi_star[h][x][y] - ref.at(h, x)[y]) <= 1e-15);
}

TEST_CASE("reward-to-go table reproduces the tree lotteries exactly") {
  const ExactZTable table = exact_z_table(kTree, kTreeRef);
  const ReturnDistribution& right = table.at(0, 0, counterexample::kRight);
  REQUIRE(right.values() == std::vector<double>{0.0, 1.0});
  REQUIRE(std::abs(right.probs()[0] - 0.95) <= 1e-15);
  REQUIRE(std::abs(right.probs()[1] - 0.05) <= 1e-15);
  const ReturnDistribution& left = table.at(0, 0, counterexample::kLeft);
  REQUIRE(left.values() == std::vector<double>{0.1});
  REQUIRE(left.probs() == std::vector<double>{1.0});
}

TEST_CASE("exponential moments of the exact table equal the solver values") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto [mdp, ref] = build_random_mdp(4, 3, 3, RewardSparsity::Dense, seed);
    const ExactZTable table = exact_z_table(mdp, ref);
    for (const double eta : {0.05, 0.1, 1.0, 10.0}) {
      const SoftSolution sol = solve_soft_bellman(mdp, ref, eta);
      for (int h = 0; h < mdp.horizon; ++h)
        for (int x = 0; x < mdp.state_count(h); ++x)
          for (int y = 0; y < mdp.num_actions; ++y)
            REQUIRE(std::abs(eta * log_exp_moment(table.at(h, x, y), eta) - sol.q[h][x][y]) <=
                    1e-9);
    }
  }
}

TEST_CASE("policy evaluation: reference policy pays no divergence") {
  const PolicyEval eval = evaluate_policy(kTree, kTreeRef, as_policy(kTreeRef), 0.1);
  REQUIRE(eval.kl == 0.0);
  REQUIRE(eval.value == eval.expected_reward);
  // E[R] = p_L * 0.1 + p_R * 0.05
  REQUIRE(std::abs(eval.expected_reward - 0.075) <= 1e-12);
}

TEST_CASE("policy evaluation: the softmax optimum attains the solver value") {
  for (const double eta : {0.05, 0.1, 1.0}) {
    const SoftSolution sol = solve_soft_bellman(kTree, kTreeRef, eta);
    const PolicyFn pi_star = [&sol](int h, int x) { return sol.pi_star[h][x]; };
    const PolicyEval eval = evaluate_policy(kTree, kTreeRef, pi_star, eta);
    REQUIRE(std::abs(eval.value - sol.v[0][kTree.initial_state]) <= 1e-9);
  }
}

TEST_CASE("policy evaluation: deterministic left play pays ln(1/p_left)") {
  for (const double p_left : {0.1, 0.5, 0.9}) {
    const auto [mdp, ref] = build_tree_counterexample(p_left, 1.0 - p_left, 0.1, 0.05);
    const PolicyFn go_left = [](int h, int x) {
      if (h == 0) return std::vector<double>{1.0, 0.0};
      return std::vector<double>{1.0, 0.0};  // left leaf's only supported action
    };
    const PolicyEval eval = evaluate_policy(mdp, ref, go_left, 0.1);
    REQUIRE(std::abs(eval.expected_reward - 0.1) <= 1e-12);
    REQUIRE(std::abs(eval.kl - std::log(1.0 / p_left)) <= 1e-12);
  }
}

TEST_CASE("policy evaluation rejects mass outside the reference support") {
  const PolicyFn bad = [](int h, int) {
    if (h == 0) return std::vector<double>{1.0, 0.0};
    return std::vector<double>{0.5, 0.5};  // left leaf only supports action 0
  };
  REQUIRE_THROWS_AS(evaluate_policy(kTree, kTreeRef, bad, 0.1), std::domain_error);
}

TEST_CASE("optimal divergence shrinks as the penalty grows") {
  double prev = std::numeric_limits<double>::infinity();
  for (const double eta : {0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0}) {
    const SoftSolution sol = solve_soft_bellman(kTree, kTreeRef, eta);
    const PolicyFn pi_star = [&sol](int h, int x) { return sol.pi_star[h][x]; };
    const double kl = evaluate_policy(kTree, kTreeRef, pi_star, eta).kl;
    REQUIRE(kl <= prev + 1e-12);
    prev = kl;
  }
  const SoftSolution sol = solve_soft_bellman(kTree, kTreeRef, 1e3);
  const PolicyFn pi_star = [&sol](int h, int x) { return sol.pi_star[h][x]; };
  REQUIRE(evaluate_policy(kTree, kTreeRef, pi_star, 1e3).kl <= 1e-3);
}

TEST_CASE("enumeration refuses to exceed its trajectory budget") {
  const auto [mdp, ref] = build_random_mdp(6, 4, 4, RewardSparsity::Dense, 1);
  REQUIRE_THROWS_AS(enumerate_functional(mdp, ref, 0.1, 0, 0, std::nullopt, 10),
                    std::runtime_error);
}

TEST_CASE("per-policy value tables agree with direct evaluation") {
  const auto [mdp, ref] = build_random_mdp(3, 3, 3, RewardSparsity::Dense, 9);
  const SoftSolution sol = solve_soft_bellman(mdp, ref, 0.2);
  const PolicyFn pi_star = [&sol](int h, int x) { return sol.pi_star[h][x]; };
  const PolicyValueTables tables = policy_value_tables(mdp, ref, pi_star, 0.2);
  const PolicyEval eval = evaluate_policy(mdp, ref, pi_star, 0.2);
  REQUIRE(std::abs(tables.v[0][mdp.initial_state] - eval.value) <= 1e-12);
}

TEST_CASE("tiny temperatures stay finite end to end") {
  const SoftSolution sol = solve_soft_bellman(kTree, kTreeRef, 1e-3);
  for (int h = 0; h < kTree.horizon; ++h)
    for (int x = 0; x < kTree.state_count(h); ++x) {
      REQUIRE(std::isfinite(sol.v[h][x]));
      for (int y = 0; y < kTree.num_actions; ++y) REQUIRE(std::isfinite(sol.q[h][x][y]));
    }
}
