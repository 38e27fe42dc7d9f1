#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

namespace qsharp {

constexpr double kProbClamp = 1e-7;     // probability clamp in both losses
constexpr double kSupportMergeTol = 1e-12;

enum class DistKind { Bernoulli, Categorical, Support };

/// A return distribution on [0, vmax]. Bernoulli lives on {0, vmax},
/// Categorical on uniform bins of [0, vmax] (bin centers as
/// representatives), and Support is an explicit finite (value, prob) list
/// used by the exact oracles.
class ReturnDistribution {
 public:
  static ReturnDistribution bernoulli(double p, double vmax = 1.0) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("Bernoulli p outside [0,1]");
    ReturnDistribution d;
    d.kind_ = DistKind::Bernoulli;
    d.vmax_ = vmax;
    d.p_ = p;
    return d;
  }

  static ReturnDistribution categorical(std::vector<double> bins, double vmax = 1.0) {
    double sum = 0.0;
    for (double b : bins) {
      if (b < 0.0) throw std::invalid_argument("negative bin probability");
      sum += b;
    }
    if (bins.empty() || std::abs(sum - 1.0) > 1e-12)
      throw std::invalid_argument("bin probabilities must sum to 1");
    ReturnDistribution d;
    d.kind_ = DistKind::Categorical;
    d.vmax_ = vmax;
    d.bins_ = std::move(bins);
    return d;
  }

  static ReturnDistribution point_mass(double value, double vmax = 1.0) {
    return support({value}, {1.0}, vmax);
  }

  static ReturnDistribution support(std::vector<double> values, std::vector<double> probs,
                                    double vmax = 1.0) {
    if (values.size() != probs.size() || values.empty())
      throw std::invalid_argument("support lists must be non-empty and aligned");
    ReturnDistribution d;
    d.kind_ = DistKind::Support;
    d.vmax_ = vmax;
    d.values_ = std::move(values);
    d.probs_ = std::move(probs);
    return d;
  }

  DistKind kind() const { return kind_; }
  double vmax() const { return vmax_; }
  double p() const { return p_; }
  const std::vector<double>& bins() const { return bins_; }
  const std::vector<double>& values() const { return values_; }
  const std::vector<double>& probs() const { return probs_; }

  int bin_index(double r) const {
    const int n = static_cast<int>(bins_.size());
    return std::min(static_cast<int>(std::floor(r * n / vmax_)), n - 1);
  }

  double bin_center(int i) const {
    return (i + 0.5) * vmax_ / static_cast<double>(bins_.size());
  }

  double mean() const {
    switch (kind_) {
      case DistKind::Bernoulli:
        return p_ * vmax_;
      case DistKind::Categorical: {
        double m = 0.0;
        for (std::size_t i = 0; i < bins_.size(); ++i)
          m += bins_[i] * bin_center(static_cast<int>(i));
        return m;
      }
      case DistKind::Support: {
        double m = 0.0;
        for (std::size_t i = 0; i < values_.size(); ++i) m += probs_[i] * values_[i];
        return m;
      }
    }
    return 0.0;
  }

  /// Probability mass assigned to the observation r (bin mass for the
  /// categorical variant, exact atom match otherwise).
  double prob_of(double r) const {
    switch (kind_) {
      case DistKind::Bernoulli:
        if (std::abs(r) <= 1e-9) return 1.0 - p_;
        if (std::abs(r - vmax_) <= 1e-9) return p_;
        throw std::domain_error("observation outside Bernoulli support");
      case DistKind::Categorical:
        if (r < 0.0 || r > vmax_) throw std::domain_error("observation outside [0, vmax]");
        return bins_[bin_index(r)];
      case DistKind::Support: {
        double mass = 0.0;
        for (std::size_t i = 0; i < values_.size(); ++i)
          if (std::abs(values_[i] - r) <= 1e-9) mass += probs_[i];
        return mass;
      }
    }
    return 0.0;
  }

 private:
  DistKind kind_ = DistKind::Bernoulli;
  double vmax_ = 1.0;
  double p_ = 0.0;
  std::vector<double> bins_;
  std::vector<double> values_;
  std::vector<double> probs_;
};

/// ln E[exp(z/eta)], computed in log domain so eta down to 1e-3 stays
/// finite on [0, vmax]-bounded supports.
inline double log_exp_moment(const ReturnDistribution& dist, double eta) {
  if (eta <= 0.0) throw std::invalid_argument("eta must be positive");
  switch (dist.kind()) {
    case DistKind::Bernoulli: {
      const double p = dist.p();
      const double scale = dist.vmax() / eta;
      if (p <= 0.0) return 0.0;  // all mass at z = 0
      return scale + std::log(p + (1.0 - p) * std::exp(-scale));
    }
    case DistKind::Categorical: {
      const auto& bins = dist.bins();
      double hi = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < bins.size(); ++i)
        if (bins[i] > 0.0) hi = std::max(hi, dist.bin_center(static_cast<int>(i)) / eta);
      double acc = 0.0;
      for (std::size_t i = 0; i < bins.size(); ++i)
        if (bins[i] > 0.0) acc += bins[i] * std::exp(dist.bin_center(static_cast<int>(i)) / eta - hi);
      return hi + std::log(acc);
    }
    case DistKind::Support: {
      const auto& vals = dist.values();
      const auto& probs = dist.probs();
      double hi = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < vals.size(); ++i)
        if (probs[i] > 0.0) hi = std::max(hi, vals[i] / eta);
      double acc = 0.0;
      for (std::size_t i = 0; i < vals.size(); ++i)
        if (probs[i] > 0.0) acc += probs[i] * std::exp(vals[i] / eta - hi);
      return hi + std::log(acc);
    }
  }
  return 0.0;
}

/// Rebins any return distribution onto B uniform bins of [0, vmax].
inline ReturnDistribution discretize(const ReturnDistribution& dist, int bins) {
  if (bins < 1) throw std::invalid_argument("bin count must be positive");
  std::vector<double> out(bins, 0.0);
  const double vmax = dist.vmax();
  const auto idx = [&](double r) {
    return std::min(static_cast<int>(std::floor(r * bins / vmax)), bins - 1);
  };
  switch (dist.kind()) {
    case DistKind::Bernoulli:
      out[idx(0.0)] += 1.0 - dist.p();
      out[idx(vmax)] += dist.p();
      break;
    case DistKind::Categorical:
      for (std::size_t i = 0; i < dist.bins().size(); ++i)
        out[idx(dist.bin_center(static_cast<int>(i)))] += dist.bins()[i];
      break;
    case DistKind::Support:
      for (std::size_t i = 0; i < dist.values().size(); ++i)
        out[idx(dist.values()[i])] += dist.probs()[i];
      break;
  }
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < out.size(); ++i) sum += out[i];
  out[bins - 1] = 1.0 - sum;
  if (out[bins - 1] < 0.0) out[bins - 1] = 0.0;
  return ReturnDistribution::categorical(std::move(out), vmax);
}

inline double bce_loss(double r, double p_hat, double vmax = 1.0) {
  const double rn = r / vmax;
  if (std::abs(rn) > 1e-9 && std::abs(rn - 1.0) > 1e-9)
    throw std::domain_error("bce_loss: observation not on {0, vmax}");
  const double p = std::clamp(p_hat, kProbClamp, 1.0 - kProbClamp);
  return -rn * std::log(p) - (1.0 - rn) * std::log(1.0 - p);
}

inline double mle_loss(double r, const ReturnDistribution& hist) {
  if (hist.kind() != DistKind::Categorical)
    throw std::invalid_argument("mle_loss expects a categorical histogram");
  if (r < 0.0 || r > hist.vmax()) throw std::domain_error("mle_loss: observation out of range");
  return -std::log(std::max(hist.bins()[hist.bin_index(r)], kProbClamp));
}

/// Squared Hellinger distance between two distributions on the same
/// support or binning.
inline double hellinger_sq(const ReturnDistribution& a, const ReturnDistribution& b) {
  if (a.kind() != b.kind()) throw std::invalid_argument("hellinger_sq: mismatched variants");
  auto sq = [](double x, double y) {
    const double d = std::sqrt(x) - std::sqrt(y);
    return d * d;
  };
  switch (a.kind()) {
    case DistKind::Bernoulli:
      return 0.5 * (sq(a.p(), b.p()) + sq(1.0 - a.p(), 1.0 - b.p()));
    case DistKind::Categorical: {
      if (a.bins().size() != b.bins().size())
        throw std::invalid_argument("hellinger_sq: mismatched binning");
      double acc = 0.0;
      for (std::size_t i = 0; i < a.bins().size(); ++i) acc += sq(a.bins()[i], b.bins()[i]);
      return 0.5 * acc;
    }
    case DistKind::Support: {
      if (a.values().size() != b.values().size())
        throw std::invalid_argument("hellinger_sq: mismatched support");
      double acc = 0.0;
      for (std::size_t i = 0; i < a.values().size(); ++i) {
        if (std::abs(a.values()[i] - b.values()[i]) > 1e-9)
          throw std::invalid_argument("hellinger_sq: mismatched support");
        acc += sq(a.probs()[i], b.probs()[i]);
      }
      return 0.5 * acc;
    }
  }
  return 0.0;
}

struct CvEnvelope {
  double cv = 0.0;
  double envelope = 1.0;
  bool envelope_infinite = false;
};

/// Coefficient of variation of exp(Z/eta) and the envelope
/// exp((1 - Q*)/eta) for a Bernoulli reward-to-go on {0, 1}, in the stable
/// form with everything scaled by exp(-1/eta).
inline CvEnvelope cv_and_envelope(double p, double eta) {
  if (eta <= 0.0) throw std::invalid_argument("eta must be positive");
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("p outside [0,1]");
  CvEnvelope out;
  if (p == 0.0) {
    out.cv = 0.0;
    out.envelope = std::numeric_limits<double>::infinity();
    out.envelope_infinite = true;
    return out;
  }
  const double t = std::exp(-1.0 / eta);
  const double denom = p + (1.0 - p) * t;
  out.cv = std::sqrt(p * (1.0 - p)) * (1.0 - t) / denom;
  out.envelope = 1.0 / denom;
  return out;
}

/// Per-step bags of (state, action, reward-to-go) samples; append-only
/// across aggregation rounds.
struct DatasetRecord {
  int h = 0;
  int state = 0;
  int action = 0;
  double reward_to_go = 0.0;
  int round = 0;
  std::vector<double> features;  // empty for tabular learners
};

class RolloutDataset {
 public:
  explicit RolloutDataset(int horizon = 0) : per_step_(horizon) {}

  void append(DatasetRecord rec) {
    if (rec.h < 0 || rec.h >= static_cast<int>(per_step_.size()))
      throw std::out_of_range("dataset step index out of range");
    per_step_[rec.h].push_back(std::move(rec));
  }

  int horizon() const { return static_cast<int>(per_step_.size()); }
  const std::vector<DatasetRecord>& at(int h) const { return per_step_.at(h); }
  std::size_t size(int h) const { return per_step_.at(h).size(); }
  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& bag : per_step_) n += bag.size();
    return n;
  }

 private:
  std::vector<std::vector<DatasetRecord>> per_step_;
};

enum class LearnerFamily { TabularBernoulli, TabularHistogram, Logistic };

struct ModelSpec {
  LearnerFamily family = LearnerFamily::TabularHistogram;
  double vmax = 1.0;
  double alpha = 0.5;      // Jeffreys-style pseudo-count
  int bins = 32;
  // logistic training (full-batch deterministic gradient descent)
  int feature_dim = 0;
  double learning_rate = 0.5;
  int max_epochs = 2000;
  double loss_tol = 1e-9;
};

/// Learned estimate of the reward-to-go distribution: either sufficient
/// statistics per (h, state, action) cell, or a logistic model over
/// features predicting a Bernoulli p. Unvisited tabular cells fall back
/// to the Bernoulli(1/2) prior so induced policies stay defined (and the
/// round-1 policy collapses to the reference exactly).
class ZModel {
 public:
  struct Cell {
    double successes = 0.0;  // sum of normalized rewards-to-go
    double total = 0.0;
    std::vector<double> bin_counts;
  };

  ZModel() = default;
  explicit ZModel(ModelSpec spec) : spec_(std::move(spec)) {
    if (spec_.family == LearnerFamily::Logistic)
      weights_.assign(static_cast<std::size_t>(spec_.feature_dim), 0.0);
  }

  const ModelSpec& spec() const { return spec_; }
  const std::map<std::uint64_t, Cell>& cells() const { return cells_; }
  const std::vector<double>& weights() const { return weights_; }
  double bias() const { return bias_; }
  void set_logistic_params(std::vector<double> w, double b) {
    weights_ = std::move(w);
    bias_ = b;
  }

  static std::uint64_t key(int h, int x, int y) {
    return (static_cast<std::uint64_t>(h) << 44) | (static_cast<std::uint64_t>(x) << 22) |
           static_cast<std::uint64_t>(y);
  }

  void observe(int h, int x, int y, double reward_to_go) {
    Cell& cell = cells_[key(h, x, y)];
    cell.successes += reward_to_go / spec_.vmax;
    cell.total += 1.0;
    if (spec_.family == LearnerFamily::TabularHistogram) {
      if (cell.bin_counts.empty()) cell.bin_counts.assign(spec_.bins, 0.0);
      const int idx = std::min(static_cast<int>(std::floor(reward_to_go * spec_.bins / spec_.vmax)),
                               spec_.bins - 1);
      cell.bin_counts[idx] += 1.0;
    }
  }

  bool has_cell(int h, int x, int y) const { return cells_.count(key(h, x, y)) > 0; }

  // checkpoint restore path
  void set_cell(int h, int x, int y, Cell cell) { cells_[key(h, x, y)] = std::move(cell); }

  ReturnDistribution predict(int h, int x, int y) const {
    if (spec_.family == LearnerFamily::Logistic)
      throw std::logic_error("logistic model predicts from features, not cell ids");
    const auto it = cells_.find(key(h, x, y));
    if (it == cells_.end() || it->second.total == 0.0) {
      if (spec_.family == LearnerFamily::TabularHistogram)
        return ReturnDistribution::categorical(
            std::vector<double>(spec_.bins, 1.0 / spec_.bins), spec_.vmax);
      return ReturnDistribution::bernoulli(0.5, spec_.vmax);
    }
    const Cell& cell = it->second;
    if (spec_.family == LearnerFamily::TabularBernoulli) {
      const double p = (cell.successes + spec_.alpha) / (cell.total + 2.0 * spec_.alpha);
      return ReturnDistribution::bernoulli(p, spec_.vmax);
    }
    std::vector<double> bins(spec_.bins);
    const double denom = cell.total + spec_.alpha * spec_.bins;
    double sum = 0.0;
    for (int i = 0; i < spec_.bins; ++i) {
      bins[i] = (cell.bin_counts[i] + spec_.alpha) / denom;
      sum += bins[i];
    }
    bins[spec_.bins - 1] += 1.0 - sum;  // absorb round-off
    return ReturnDistribution::categorical(std::move(bins), spec_.vmax);
  }

  double predict_p(const std::vector<double>& features) const {
    if (spec_.family != LearnerFamily::Logistic)
      throw std::logic_error("feature prediction requires a logistic model");
    if (static_cast<int>(features.size()) != spec_.feature_dim)
      throw std::invalid_argument("feature vector has wrong dimension");
    double z = bias_;
    for (int i = 0; i < spec_.feature_dim; ++i) z += weights_[i] * features[i];
    return 1.0 / (1.0 + std::exp(-z));
  }

  ReturnDistribution predict_from_features(const std::vector<double>& features) const {
    return ReturnDistribution::bernoulli(predict_p(features), spec_.vmax);
  }

 private:
  ModelSpec spec_;
  std::map<std::uint64_t, Cell> cells_;
  std::vector<double> weights_;
  double bias_ = 0.0;
};

/// Mean training loss of a fitted model over a dataset (BCE for
/// Bernoulli-style learners, histogram MLE otherwise).
inline double dataset_loss(const ZModel& model, const RolloutDataset& data) {
  double acc = 0.0;
  std::size_t n = 0;
  for (int h = 0; h < data.horizon(); ++h) {
    for (const auto& rec : data.at(h)) {
      switch (model.spec().family) {
        case LearnerFamily::TabularBernoulli:
          acc += bce_loss(rec.reward_to_go, model.predict(rec.h, rec.state, rec.action).p(),
                          model.spec().vmax);
          break;
        case LearnerFamily::TabularHistogram:
          acc += mle_loss(rec.reward_to_go, model.predict(rec.h, rec.state, rec.action));
          break;
        case LearnerFamily::Logistic:
          acc += bce_loss(rec.reward_to_go, model.predict_p(rec.features), model.spec().vmax);
          break;
      }
      ++n;
    }
  }
  return n == 0 ? 0.0 : acc / static_cast<double>(n);
}

/// Fits a model from scratch on the full aggregated dataset. Tabular
/// families are closed-form count updates; the logistic family runs
/// full-batch gradient descent on BCE with deterministic zero init.
inline ZModel fit_z_model(const RolloutDataset& data, const ModelSpec& spec) {
  if (data.total_size() == 0) throw std::invalid_argument("fit_z_model: empty dataset");
  ZModel model(spec);
  if (spec.family != LearnerFamily::Logistic) {
    for (int h = 0; h < data.horizon(); ++h)
      for (const auto& rec : data.at(h)) model.observe(rec.h, rec.state, rec.action, rec.reward_to_go);
    return model;
  }

  if (spec.feature_dim <= 0) throw std::invalid_argument("logistic learner needs feature_dim > 0");
  std::vector<double> w(spec.feature_dim, 0.0);
  double b = 0.0;
  const double n = static_cast<double>(data.total_size());
  double prev_loss = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < spec.max_epochs; ++epoch) {
    std::vector<double> gw(spec.feature_dim, 0.0);
    double gb = 0.0;
    double loss = 0.0;
    for (int h = 0; h < data.horizon(); ++h) {
      for (const auto& rec : data.at(h)) {
        double z = b;
        for (int i = 0; i < spec.feature_dim; ++i) z += w[i] * rec.features[i];
        const double p = 1.0 / (1.0 + std::exp(-z));
        const double target = rec.reward_to_go / spec.vmax;
        const double err = p - target;
        for (int i = 0; i < spec.feature_dim; ++i) gw[i] += err * rec.features[i];
        gb += err;
        loss += bce_loss(rec.reward_to_go, p, spec.vmax);
      }
    }
    loss /= n;
    if (!std::isfinite(loss)) throw std::runtime_error("fit_z_model: non-finite loss");
    for (int i = 0; i < spec.feature_dim; ++i) w[i] -= spec.learning_rate * gw[i] / n;
    b -= spec.learning_rate * gb / n;
    if (std::abs(prev_loss - loss) < spec.loss_tol) break;
    prev_loss = loss;
  }
  model.set_logistic_params(std::move(w), b);
  return model;
}

}  // namespace qsharp
