#pragma once

#include <cstdio>
#include <sstream>
#include <string>

#include "qsharp/config.hpp"
#include "qsharp/dist_learn.hpp"
#include "qsharp/io.hpp"
#include "qsharp/mdp.hpp"
#include "qsharp/soft_solver.hpp"

namespace qsharp {

namespace detail {
inline std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

/// Checkpoint format: the flat key-value syntax from the config loader,
/// with full-precision floats so resumed runs match bitwise.
inline std::string save_z_model(const ZModel& model) {
  std::ostringstream out;
  const ModelSpec& spec = model.spec();
  const char* family = spec.family == LearnerFamily::TabularBernoulli ? "tabular_bernoulli"
                       : spec.family == LearnerFamily::TabularHistogram ? "tabular_histogram"
                                                                        : "logistic";
  out << "model.family = " << family << "\n";
  out << "model.vmax = " << detail::g17(spec.vmax) << "\n";
  out << "model.alpha = " << detail::g17(spec.alpha) << "\n";
  out << "model.bins = " << spec.bins << "\n";
  out << "model.feature_dim = " << spec.feature_dim << "\n";
  out << "model.learning_rate = " << detail::g17(spec.learning_rate) << "\n";
  out << "model.max_epochs = " << spec.max_epochs << "\n";
  out << "model.loss_tol = " << detail::g17(spec.loss_tol) << "\n";
  if (spec.family == LearnerFamily::Logistic) {
    out << "logistic.bias = " << detail::g17(model.bias()) << "\n";
    for (std::size_t i = 0; i < model.weights().size(); ++i)
      out << "logistic.w" << i << " = " << detail::g17(model.weights()[i]) << "\n";
    return out.str();
  }
  for (const auto& [key, cell] : model.cells()) {
    const auto h = key >> 44;
    const auto x = (key >> 22) & 0x3fffff;
    const auto y = key & 0x3fffff;
    const std::string prefix =
        "cell." + std::to_string(h) + "." + std::to_string(x) + "." + std::to_string(y);
    out << prefix << ".successes = " << detail::g17(cell.successes) << "\n";
    out << prefix << ".total = " << detail::g17(cell.total) << "\n";
    for (std::size_t i = 0; i < cell.bin_counts.size(); ++i)
      if (cell.bin_counts[i] != 0.0)
        out << prefix << ".bin" << i << " = " << detail::g17(cell.bin_counts[i]) << "\n";
  }
  return out.str();
}

inline ZModel load_z_model(const std::string& text) {
  const Config cfg = Config::parse_string(text);
  ModelSpec spec;
  const std::string family = cfg.get_string("model.family");
  if (family == "tabular_bernoulli")
    spec.family = LearnerFamily::TabularBernoulli;
  else if (family == "tabular_histogram")
    spec.family = LearnerFamily::TabularHistogram;
  else if (family == "logistic")
    spec.family = LearnerFamily::Logistic;
  else
    throw ConfigError("unknown model family '" + family + "'");
  spec.vmax = cfg.get_double("model.vmax");
  spec.alpha = cfg.get_double("model.alpha");
  spec.bins = static_cast<int>(cfg.get_int("model.bins"));
  spec.feature_dim = static_cast<int>(cfg.get_int("model.feature_dim"));
  spec.learning_rate = cfg.get_double("model.learning_rate");
  spec.max_epochs = static_cast<int>(cfg.get_int("model.max_epochs"));
  spec.loss_tol = cfg.get_double("model.loss_tol");

  ZModel model(spec);
  if (spec.family == LearnerFamily::Logistic) {
    std::vector<double> w(spec.feature_dim, 0.0);
    for (int i = 0; i < spec.feature_dim; ++i) w[i] = cfg.get_double("logistic.w" + std::to_string(i));
    model.set_logistic_params(std::move(w), cfg.get_double("logistic.bias"));
    return model;
  }

  // Cells are reconstructed through observe() so sufficient statistics
  // keep the same invariants as a fresh fit.
  struct Raw {
    double successes = 0.0;
    double total = 0.0;
    std::map<int, double> bins;
  };
  std::map<std::string, Raw> raw;
  for (const std::string& key : cfg.keys()) {
    if (key.rfind("cell.", 0) != 0) continue;
    const auto last_dot = key.rfind('.');
    const std::string cell_id = key.substr(5, last_dot - 5);
    const std::string field = key.substr(last_dot + 1);
    Raw& r = raw[cell_id];
    if (field == "successes")
      r.successes = cfg.get_double(key);
    else if (field == "total")
      r.total = cfg.get_double(key);
    else if (field.rfind("bin", 0) == 0)
      r.bins[std::stoi(field.substr(3))] = cfg.get_double(key);
    else
      throw ConfigError("unknown checkpoint field '" + key + "'");
  }
  for (const auto& [cell_id, r] : raw) {
    int h, x, y;
    if (std::sscanf(cell_id.c_str(), "%d.%d.%d", &h, &x, &y) != 3)
      throw ConfigError("malformed cell id '" + cell_id + "'");
    // replay as unit observations is impossible for fractional stats, so
    // poke the exact counts back in
    ZModel::Cell cell;
    cell.successes = r.successes;
    cell.total = r.total;
    if (spec.family == LearnerFamily::TabularHistogram) {
      cell.bin_counts.assign(spec.bins, 0.0);
      for (const auto& [i, c] : r.bins) cell.bin_counts.at(i) = c;
    }
    model.set_cell(h, x, y, std::move(cell));
  }
  return model;
}

inline CsvTable dataset_to_csv(const RolloutDataset& data) {
  CsvTable csv;
  csv.header = {"h", "state_id", "action", "reward_to_go", "round"};
  for (int h = 0; h < data.horizon(); ++h)
    for (const auto& rec : data.at(h))
      csv.add_row({std::to_string(rec.h), std::to_string(rec.state), std::to_string(rec.action),
                   format_g9(rec.reward_to_go), std::to_string(rec.round)});
  return csv;
}

/// Golden MDP dump: one row per (h, state, action).
inline CsvTable mdp_to_csv(const DeterministicMdp& mdp, const RefPolicy& ref) {
  CsvTable csv;
  csv.header = {"h", "state", "action", "next_state", "reward", "ref_prob"};
  for (int h = 0; h < mdp.horizon; ++h)
    for (int x = 0; x < mdp.state_count(h); ++x)
      for (int y = 0; y < mdp.num_actions; ++y)
        csv.add_row({std::to_string(h), std::to_string(x), std::to_string(y),
                     std::to_string(mdp.next[h][x][y]), format_g9(mdp.reward[h][x][y]),
                     format_g9(ref.at(h, x)[y])});
  return csv;
}

inline CsvTable solution_to_csv(const DeterministicMdp& mdp, const SoftSolution& sol) {
  CsvTable csv;
  csv.header = {"h", "state", "action", "q_value", "pi_star"};
  for (int h = 0; h < mdp.horizon; ++h)
    for (int x = 0; x < mdp.state_count(h); ++x)
      for (int y = 0; y < mdp.num_actions; ++y)
        csv.add_row({std::to_string(h), std::to_string(x), std::to_string(y),
                     format_g9(sol.q[h][x][y]), format_g9(sol.pi_star[h][x][y])});
  return csv;
}

inline CsvTable values_to_csv(const DeterministicMdp& mdp, const SoftSolution& sol) {
  CsvTable csv;
  csv.header = {"h", "state", "v_value"};
  for (int h = 0; h <= mdp.horizon; ++h)
    for (int x = 0; x < mdp.state_count(h); ++x)
      csv.add_row({std::to_string(h), std::to_string(x), format_g9(sol.v[h][x])});
  return csv;
}

inline CsvTable z_table_to_csv(const DeterministicMdp& mdp, const ExactZTable& table) {
  CsvTable csv;
  csv.header = {"h", "state", "action", "support", "prob"};
  for (int h = 0; h < mdp.horizon; ++h)
    for (int x = 0; x < mdp.state_count(h); ++x)
      for (int y = 0; y < mdp.num_actions; ++y) {
        const ReturnDistribution& d = table.at(h, x, y);
        for (std::size_t i = 0; i < d.values().size(); ++i)
          csv.add_row({std::to_string(h), std::to_string(x), std::to_string(y),
                       format_g9(d.values()[i]), format_g9(d.probs()[i])});
      }
  return csv;
}

}  // namespace qsharp
