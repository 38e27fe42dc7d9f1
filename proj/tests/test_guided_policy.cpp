#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "qsharp/guided_policy.hpp"
#include "qsharp/mdp.hpp"
#include "qsharp/soft_solver.hpp"

using namespace qsharp;

namespace {
const auto tree = build_tree_counterexample(0.5, 0.5, 0.1, 0.05);
const DeterministicMdp& kTree = tree.first;
const RefPolicy& kTreeRef = tree.second;
}  // namespace

TEST_CASE("exact-table reweighting reproduces the softmax optimum everywhere") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto [mdp, ref] = build_random_mdp(4, 3, 3, RewardSparsity::Dense, seed);
    const ExactZTable table = exact_z_table(mdp, ref);
    for (const double eta : {0.05, 0.1, 1.0}) {
      const SoftSolution sol = solve_soft_bellman(mdp, ref, eta);
      const GuidedPolicy gp(ref, z_source(table), eta, GuideRule::QSharp);
      for (int h = 0; h < mdp.horizon; ++h)
        for (int x = 0; x < mdp.state_count(h); ++x) {
          const std::vector<double> dist = gp.action_distribution(h, x);
          for (int y = 0; y < mdp.num_actions; ++y)
            REQUIRE(std::abs(dist[y] - sol.pi_star[h][x][y]) <= 1e-9);
        }
    }
  }
}

TEST_CASE("a point mass at the optimal action value is an equivalent source") {
  const SoftSolution sol = solve_soft_bellman(kTree, kTreeRef, 0.1);
  const GuidedPolicy gp(kTreeRef, z_source(sol, kTree.vmax), 0.1, GuideRule::QSharp);
  for (int h = 0; h < kTree.horizon; ++h)
    for (int x = 0; x < kTree.state_count(h); ++x) {
      const std::vector<double> dist = gp.action_distribution(h, x);
      for (int y = 0; y < kTree.num_actions; ++y)
        REQUIRE(std::abs(dist[y] - sol.pi_star[h][x][y]) <= 1e-9);
    }
}

TEST_CASE("huge penalties collapse both rules onto the reference") {
  const ExactZTable table = exact_z_table(kTree, kTreeRef);
  for (const GuideRule rule : {GuideRule::QSharp, GuideRule::CD}) {
    const GuidedPolicy gp(kTreeRef, z_source(table), 1e6, rule);
    for (int h = 0; h < kTree.horizon; ++h)
      for (int x = 0; x < kTree.state_count(h); ++x) {
        double tv = 0.0;
        const std::vector<double> dist = gp.action_distribution(h, x);
        for (int y = 0; y < kTree.num_actions; ++y)
          tv += std::abs(dist[y] - kTreeRef.at(h, x)[y]);
        REQUIRE(0.5 * tv <= 1e-4);
      }
  }
}

TEST_CASE("at low temperature the two rules choose opposite branches") {
  const double eta = 0.01;
  const ExactZTable table = exact_z_table(kTree, kTreeRef);
  const GuidedPolicy qs(kTreeRef, z_source(table), eta, GuideRule::QSharp);
  const GuidedPolicy cd(kTreeRef, z_source(table), eta, GuideRule::CD);
  const double p_qs_left = qs.action_distribution(0, 0)[counterexample::kLeft];
  const double p_cd_left = cd.action_distribution(0, 0)[counterexample::kLeft];
  REQUIRE(p_qs_left < 0.01);
  REQUIRE(p_cd_left > 0.99);
  // closed form for the exponential-moment rule at the root
  const double m_right = 0.05 * std::exp(1.0 / eta) + 0.95;
  const double expected = 0.5 * std::exp(0.1 / eta) / (0.5 * std::exp(0.1 / eta) + 0.5 * m_right);
  REQUIRE(p_qs_left == Catch::Approx(expected).margin(1e-12));
  // the mean-value rule weighs exp(E[Z]/eta) instead
  const double cd_expected = std::exp(0.1 / eta) / (std::exp(0.1 / eta) + std::exp(0.05 / eta));
  REQUIRE(p_cd_left == Catch::Approx(cd_expected).epsilon(1e-12));
}

TEST_CASE("one-step problems reduce to exponential tilting of the reference") {
  DeterministicMdp mdp;
  mdp.horizon = 1;
  mdp.states_per_step = {1, 1};
  mdp.num_actions = 3;
  mdp.vmax = 1.0;
  mdp.initial_state = 0;
  mdp.next = {{{0, 0, 0}}};
  mdp.reward = {{{0.2, 0.9, 0.0}}};
  mdp.validate();
  RefPolicy ref;
  ref.probs = {{{0.5, 0.25, 0.25}}};
  ref.validate(mdp);

  const ExactZTable table = exact_z_table(mdp, ref);
  const double eta = 0.3;
  const GuidedPolicy gp(ref, z_source(table), eta, GuideRule::QSharp);
  const std::vector<double> dist = gp.action_distribution(0, 0);
  double norm = 0.0;
  std::vector<double> want(3);
  for (int y = 0; y < 3; ++y) {
    want[y] = ref.at(0, 0)[y] * std::exp(mdp.reward[0][0][y] / eta);
    norm += want[y];
  }
  for (int y = 0; y < 3; ++y) REQUIRE(dist[y] == Catch::Approx(want[y] / norm));
}

TEST_CASE("emitted distributions are normalized and support-preserving") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto [mdp, ref] = build_random_mdp(3, 4, 4, RewardSparsity::TerminalOnly, seed);
    const ExactZTable table = exact_z_table(mdp, ref);
    for (const GuideRule rule : {GuideRule::QSharp, GuideRule::CD}) {
      const GuidedPolicy gp(ref, z_source(table), 0.07, rule);
      for (int h = 0; h < mdp.horizon; ++h)
        for (int x = 0; x < mdp.state_count(h); ++x) {
          const std::vector<double> dist = gp.action_distribution(h, x);
          double sum = 0.0;
          for (int y = 0; y < mdp.num_actions; ++y) {
            sum += dist[y];
            if (ref.at(h, x)[y] == 0.0) REQUIRE(dist[y] == 0.0);
          }
          REQUIRE(std::abs(sum - 1.0) <= 1e-12);
        }
    }
  }
}

TEST_CASE("one value model serves every temperature") {
  const ExactZTable table = exact_z_table(kTree, kTreeRef);
  const ZSource src = z_source(table);
  double prev = 0.0;
  for (const double eta : {1.0, 0.1, 0.01}) {
    const GuidedPolicy gp(kTreeRef, src, eta, GuideRule::QSharp);
    const double p_right = gp.action_distribution(0, 0)[counterexample::kRight];
    REQUIRE(p_right >= prev);  // colder policies bet harder on the lottery branch
    prev = p_right;
  }
}

TEST_CASE("top-k pruning keeps only the most likely reference actions") {
  DeterministicMdp mdp;
  mdp.horizon = 1;
  mdp.states_per_step = {1, 1};
  mdp.num_actions = 4;
  mdp.vmax = 1.0;
  mdp.initial_state = 0;
  mdp.next = {{{0, 0, 0, 0}}};
  mdp.reward = {{{0.0, 0.0, 1.0, 0.5}}};
  mdp.validate();
  RefPolicy ref;
  ref.probs = {{{0.4, 0.3, 0.2, 0.1}}};
  ref.validate(mdp);
  const ExactZTable table = exact_z_table(mdp, ref);
  const GuidedPolicy gp(ref, z_source(table), 0.1, GuideRule::QSharp, 2);
  const std::vector<double> dist = gp.action_distribution(0, 0);
  REQUIRE(dist[2] == 0.0);  // pruned despite the best reward
  REQUIRE(dist[3] == 0.0);
  REQUIRE(std::abs(dist[0] + dist[1] - 1.0) <= 1e-12);
}

TEST_CASE("greedy decoding breaks ties toward the lowest action index") {
  DeterministicMdp mdp;
  mdp.horizon = 1;
  mdp.states_per_step = {1, 1};
  mdp.num_actions = 3;
  mdp.vmax = 1.0;
  mdp.initial_state = 0;
  mdp.next = {{{0, 0, 0}}};
  mdp.reward = {{{0.5, 0.5, 0.5}}};
  mdp.validate();
  RefPolicy ref;
  ref.probs = {{{1.0 / 3, 1.0 / 3, 1.0 / 3}}};
  ref.validate(mdp);
  const ExactZTable table = exact_z_table(mdp, ref);
  const GuidedPolicy gp(ref, z_source(table), 0.1, GuideRule::QSharp);
  REQUIRE(gp.greedy_action(0, 0) == 0);
}

TEST_CASE("sampling follows the emitted distribution deterministically per seed") {
  const ExactZTable table = exact_z_table(kTree, kTreeRef);
  const GuidedPolicy gp(kTreeRef, z_source(table), 0.1, GuideRule::QSharp);
  Rng a(5, 2);
  Rng b(5, 2);
  for (int i = 0; i < 20; ++i) REQUIRE(gp.sample_action(0, 0, a) == gp.sample_action(0, 0, b));
}

TEST_CASE("invalid temperatures are rejected") {
  const ExactZTable table = exact_z_table(kTree, kTreeRef);
  REQUIRE_THROWS_AS(GuidedPolicy(kTreeRef, z_source(table), 0.0, GuideRule::QSharp),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(GuidedPolicy(kTreeRef, z_source(table), -1.0, GuideRule::CD),
                    std::invalid_argument);
}

TEST_CASE("completion scores: a sure win at the leaf scores exactly 1") {
  const ExactZTable table = exact_z_table(kTree, kTreeRef);
  Trajectory traj;
  traj.start_h = 0;
  traj.steps = {{0, counterexample::kRight, 0.0}, {counterexample::kStateRight, 0, 1.0}};
  traj.fill_rewards_to_go();
  for (const double eta : {0.01, 0.1, 1.0})
    REQUIRE(score_completion(z_source(table), eta, traj) == Catch::Approx(1.0));
}

TEST_CASE("completion scores are monotone in the terminal success chance") {
  Trajectory traj;
  traj.start_h = 0;
  traj.steps = {{0, 0, 0.0}};
  traj.fill_rewards_to_go();
  for (const double eta : {0.05, 0.5, 2.0}) {
    const ZSource hi = [](int, int, int) { return ReturnDistribution::bernoulli(0.9); };
    const ZSource lo = [](int, int, int) { return ReturnDistribution::bernoulli(0.1); };
    REQUIRE(score_completion(hi, eta, traj) > score_completion(lo, eta, traj));
  }
}

TEST_CASE("joint rescaling of rewards and temperature keeps the ranking") {
  Trajectory traj;
  traj.start_h = 0;
  traj.steps = {{0, 0, 0.0}};
  traj.fill_rewards_to_go();
  const std::vector<double> ps = {0.1, 0.7, 0.3, 0.9};
  for (const double scale : {0.5, 2.0, 10.0}) {
    std::vector<double> base, scaled;
    for (const double p : ps) {
      const ZSource z = [p](int, int, int) { return ReturnDistribution::bernoulli(p, 1.0); };
      const ZSource zs = [p, scale](int, int, int) {
        return ReturnDistribution::bernoulli(p, scale);
      };
      base.push_back(score_completion(z, 0.2, traj));
      scaled.push_back(score_completion(zs, 0.2 * scale, traj));
    }
    REQUIRE(best_of_n(base) == best_of_n(scaled));
  }
}

TEST_CASE("top-score selection and score-weighted voting") {
  REQUIRE(best_of_n({0.2, 0.9, 0.1}) == 1);
  REQUIRE(best_of_n({0.5}) == 0);
  REQUIRE(best_of_n({0.7, 0.7, 0.1}) == 0);  // ties go to the earliest
  REQUIRE_THROWS_AS(best_of_n({}), std::invalid_argument);

  const std::vector<int> answers = {0, 0, 1};
  REQUIRE(weighted_vote(answers, {0.3, 0.3, 0.5}) == 0);  // 0.6 beats 0.5
  REQUIRE(weighted_vote(answers, {0.1, 0.1, 0.5}) == 1);
  REQUIRE_THROWS_AS(weighted_vote(std::vector<int>{}, std::vector<double>{}),
                    std::invalid_argument);
}
