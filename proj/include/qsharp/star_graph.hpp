#pragma once

#include <algorithm>
#include <numeric>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "qsharp/mdp.hpp"

namespace qsharp {

/// A star graph G(d, l): d disjoint paths of l nodes hanging off a common
/// center. Exactly one path ends at the goal node.
struct StarGraphInstance {
  int degree = 0;
  int path_len = 0;
  int vocab_size = 0;
  int center = 0;
  std::vector<std::vector<int>> paths;  // paths[i][j] = j-th node label of path i
  int goal_path_index = 0;
  std::string prompt_encoding;          // canonical (edge list, start, goal) serialization

  int goal() const { return paths[goal_path_index].back(); }

  // Which path carries `token` at depth `pos`, or -1.
  int path_at(int token, int pos) const {
    for (int i = 0; i < degree; ++i)
      if (paths[i][pos] == token) return i;
    return -1;
  }
};

// State layout of the star-graph MDP: step 0 has the single root state;
// every later step has degree+1 states, where state i < degree means "on
// path i" and state degree is the absorbing off-graph sink.
inline int star_graph_sink(const StarGraphInstance& inst) { return inst.degree; }

/// Builds the instance together with its prefix MDP and the Clever-Hans
/// reference policy (uniform first node, deterministic path-following).
/// Terminal reward is 1 iff the emitted path ends at the goal.
inline std::tuple<StarGraphInstance, DeterministicMdp, RefPolicy> build_star_graph(
    int degree, int path_len, int vocab_size, std::uint64_t seed) {
  if (degree < 2 || path_len < 2)
    throw std::invalid_argument("build_star_graph: need degree>=2 and path_len>=2");
  if (vocab_size < degree * path_len + 1)
    throw std::invalid_argument("build_star_graph: vocab too small to label nodes distinctly");

  Rng rng(seed);
  std::vector<int> labels(vocab_size);
  std::iota(labels.begin(), labels.end(), 0);
  for (int i = vocab_size - 1; i > 0; --i)
    std::swap(labels[i], labels[rng.next_int(i + 1)]);

  StarGraphInstance inst;
  inst.degree = degree;
  inst.path_len = path_len;
  inst.vocab_size = vocab_size;
  inst.center = labels[0];
  inst.paths.assign(degree, std::vector<int>(path_len));
  int cursor = 1;
  for (int i = 0; i < degree; ++i)
    for (int j = 0; j < path_len; ++j) inst.paths[i][j] = labels[cursor++];
  inst.goal_path_index = rng.next_int(degree);

  // Serialized edges in a seeded shuffle so the goal's position in the
  // prompt is not a structural giveaway.
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < degree; ++i) {
    edges.emplace_back(inst.center, inst.paths[i][0]);
    for (int j = 0; j + 1 < path_len; ++j)
      edges.emplace_back(inst.paths[i][j], inst.paths[i][j + 1]);
  }
  for (int i = static_cast<int>(edges.size()) - 1; i > 0; --i)
    std::swap(edges[i], edges[rng.next_int(i + 1)]);
  std::ostringstream prompt;
  for (const auto& [a, b] : edges) prompt << a << '>' << b << ',';
  prompt << '|' << inst.center << '|' << inst.goal();
  inst.prompt_encoding = prompt.str();

  const int sink = star_graph_sink(inst);
  DeterministicMdp mdp;
  mdp.horizon = path_len;
  mdp.states_per_step.assign(path_len + 1, degree + 1);
  mdp.states_per_step[0] = 1;
  mdp.num_actions = vocab_size;
  mdp.vmax = 1.0;
  mdp.initial_state = 0;
  mdp.next.resize(path_len);
  mdp.reward.resize(path_len);
  for (int h = 0; h < path_len; ++h) {
    const int nstates = mdp.states_per_step[h];
    mdp.next[h].assign(nstates, std::vector<int>(vocab_size, sink));
    mdp.reward[h].assign(nstates, std::vector<double>(vocab_size, 0.0));
    for (int x = 0; x < nstates; ++x) {
      if (h > 0 && x == sink) continue;
      for (int i = 0; i < degree; ++i) {
        if (h > 0 && x != i) continue;
        const int tok = inst.paths[i][h];
        mdp.next[h][x][tok] = i;
        if (h == path_len - 1 && i == inst.goal_path_index) mdp.reward[h][x][tok] = 1.0;
      }
    }
  }
  mdp.validate();

  RefPolicy ref;
  ref.probs.resize(path_len);
  for (int h = 0; h < path_len; ++h) {
    const int nstates = mdp.states_per_step[h];
    ref.probs[h].assign(nstates, std::vector<double>(vocab_size, 0.0));
    for (int x = 0; x < nstates; ++x) {
      if (h == 0) {
        for (int i = 0; i < degree; ++i) ref.probs[h][x][inst.paths[i][0]] = 1.0 / degree;
      } else if (x == sink) {
        ref.probs[h][x][0] = 1.0;  // absorbing; never reached under valid play
      } else {
        ref.probs[h][x][inst.paths[x][h]] = 1.0;
      }
    }
  }
  ref.validate(mdp);
  return {std::move(inst), std::move(mdp), std::move(ref)};
}

/// Exact pass rate of a policy on one instance: probability the emitted
/// path ends at the goal, by enumerating the <= d first-step branches
/// (path-following makes every later step a point mass under the
/// reference; general policies are enumerated over reachable states).
template <typename Policy>
double star_graph_pass_rate(const StarGraphInstance& inst, const DeterministicMdp& mdp,
                            const Policy& policy) {
  // occupancy over the small per-step state space
  std::vector<double> occ(mdp.state_count(0), 0.0);
  occ[mdp.initial_state] = 1.0;
  double pass = 0.0;
  for (int h = 0; h < mdp.horizon; ++h) {
    std::vector<double> nxt(mdp.state_count(h + 1), 0.0);
    for (int x = 0; x < mdp.state_count(h); ++x) {
      if (occ[x] <= 0.0) continue;
      const std::vector<double> dist = policy(h, x);
      for (int y = 0; y < mdp.num_actions; ++y) {
        if (dist[y] <= 0.0) continue;
        pass += occ[x] * dist[y] * mdp.reward[h][x][y];
        nxt[mdp.next[h][x][y]] += occ[x] * dist[y];
      }
    }
    occ = std::move(nxt);
  }
  return pass;
}

}  // namespace qsharp
