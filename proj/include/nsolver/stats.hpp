#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <nlohmann/json.hpp>

#include "nsolver/error.hpp"
#include "nsolver/rng.hpp"

namespace nsolver::stats {

struct ScoreSet {
  std::string label;
  std::vector<double> scores;  // one per seed

  void validate() const {
    if (scores.empty()) throw std::invalid_argument("score set '" + label + "' is empty");
    for (double s : scores)
      if (!std::isfinite(s)) throw std::invalid_argument("score set '" + label + "' has a non-finite score");
  }
};

enum class Dominance { stochastic, almost, none };
NLOHMANN_JSON_SERIALIZE_ENUM(Dominance, {{Dominance::stochastic, "stochastic"}, {Dominance::almost, "almost"}, {Dominance::none, "none"}})

struct AsoResult {
  double eps_min = 1.0;
  double eps_hat = 0.5;
  double sigma = 0.0;
  Dominance dominance = Dominance::none;
  double alpha_used = 0.05;
  std::size_t bootstrap_samples = 0;
  std::uint64_t seed = 0;
};

inline void to_json(nlohmann::json& j, const AsoResult& r) {
  j = {{"eps_min", r.eps_min}, {"eps_hat", r.eps_hat}, {"sigma", r.sigma}, {"dominance", r.dominance},
       {"alpha_used", r.alpha_used}, {"bootstrap_samples", r.bootstrap_samples}, {"seed", r.seed}};
}

inline Dominance classify(double eps_min) {
  if (eps_min == 0.0) return Dominance::stochastic;
  if (eps_min < 0.5) return Dominance::almost;
  return Dominance::none;
}

/// Right-continuous empirical quantile of a sorted sample:
/// the smallest x with F(x) >= t.
inline double empirical_quantile(const std::vector<double>& sorted, double t) {
  const std::size_t n = sorted.size();
  const double k = std::ceil(t * static_cast<double>(n) - 1e-12);
  const std::size_t idx = k < 1.0 ? 0 : std::min(n - 1, static_cast<std::size_t>(k) - 1);
  return sorted[idx];
}

/// Share of the squared quantile gap lying where B's quantile exceeds A's,
/// on a midpoint grid of `grid_points` levels. 0 when A dominates
/// everywhere; 0.5 when the gap vanishes identically.
inline double violation_ratio(std::vector<double> a, std::vector<double> b, std::size_t grid_points = 1000) {
  if (a.empty() || b.empty()) throw std::invalid_argument("violation_ratio needs non-empty samples");
  if (grid_points < 1) throw std::invalid_argument("grid_points must be >= 1");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double violation = 0.0, total = 0.0;
  for (std::size_t i = 0; i < grid_points; ++i) {
    const double t = (static_cast<double>(i) + 0.5) / static_cast<double>(grid_points);
    const double gap = empirical_quantile(b, t) - empirical_quantile(a, t);
    total += gap * gap;
    if (gap > 0) violation += gap * gap;
  }
  return total == 0.0 ? 0.5 : violation / total;
}

inline double bonferroni(double alpha, std::size_t comparisons) {
  if (comparisons < 1) throw std::invalid_argument("comparisons must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  return alpha / static_cast<double>(comparisons);
}

/// eps_min = clamp(eps_hat + z_{1-alpha} * sigma, 0, 1): a one-sided upper
/// confidence bound on the violation ratio of A over B, with sigma the
/// standard deviation of the ratio over bootstrap resamples of both sets.
inline AsoResult aso_epsilon_min(const ScoreSet& a, const ScoreSet& b, double alpha = 0.05,
                                 std::size_t bootstrap_samples = 1000, std::uint64_t seed = 0, std::size_t grid_points = 1000) {
  a.validate();
  b.validate();
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  if (bootstrap_samples < 100) throw std::invalid_argument("bootstrap_samples must be >= 100");
  AsoResult r;
  r.alpha_used = alpha;
  r.bootstrap_samples = bootstrap_samples;
  r.seed = seed;
  r.eps_hat = violation_ratio(a.scores, b.scores, grid_points);

  Rng rng(substream(seed, "bootstrap"));
  std::vector<double> ratios(bootstrap_samples);
  std::vector<double> ra(a.scores.size()), rb(b.scores.size());
  for (auto& v : ratios) {
    for (auto& x : ra) x = a.scores[uniform_index(rng, a.scores.size())];
    for (auto& x : rb) x = b.scores[uniform_index(rng, b.scores.size())];
    v = violation_ratio(ra, rb, grid_points);
  }
  double mean = 0.0;
  for (double v : ratios) mean += v;
  mean /= static_cast<double>(ratios.size());
  double var = 0.0;
  for (double v : ratios) var += (v - mean) * (v - mean);
  r.sigma = std::sqrt(var / static_cast<double>(ratios.size() - 1));

  const double z = boost::math::quantile(boost::math::normal_distribution<double>(), 1.0 - alpha);
  r.eps_min = std::clamp(r.eps_hat + z * r.sigma, 0.0, 1.0);
  r.dominance = classify(r.eps_min);
  return r;
}

struct PairwiseMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<double>> eps;  // row i vs column j; NaN on the diagonal
  double alpha = 0.05;
  double alpha_used = 0.05;

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(10);
    os << "model";
    for (const auto& l : labels) os << ',' << l;
    os << '\n';
    for (std::size_t i = 0; i < labels.size(); ++i) {
      os << labels[i];
      for (std::size_t j = 0; j < labels.size(); ++j) {
        os << ',';
        if (i != j) os << eps[i][j];
      }
      os << '\n';
    }
    return os.str();
  }

  nlohmann::json to_json() const {
    nlohmann::json m = nlohmann::json::array();
    for (std::size_t i = 0; i < labels.size(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t j = 0; j < labels.size(); ++j) row.push_back(i == j ? nlohmann::json(nullptr) : nlohmann::json(eps[i][j]));
      m.push_back(row);
    }
    return {{"labels", labels}, {"alpha", alpha}, {"alpha_used", alpha_used}, {"eps_min", m}};
  }
};

/// eps_min for every ordered pair, Bonferroni-corrected over n(n-1)
/// comparisons. Each cell bootstraps from its own derived seed.
inline PairwiseMatrix pairwise_matrix(const std::vector<ScoreSet>& sets, double alpha = 0.05, std::size_t bootstrap_samples = 1000,
                                      std::uint64_t seed = 0) {
  if (sets.size() < 2) throw std::invalid_argument("pairwise_matrix needs at least two score sets");
  PairwiseMatrix m;
  m.alpha = alpha;
  m.alpha_used = bonferroni(alpha, sets.size() * (sets.size() - 1));
  const double nan = std::numeric_limits<double>::quiet_NaN();
  m.eps.assign(sets.size(), std::vector<double>(sets.size(), nan));
  for (std::size_t i = 0; i < sets.size(); ++i) {
    m.labels.push_back(sets[i].label);
    for (std::size_t j = 0; j < sets.size(); ++j)
      if (i != j) m.eps[i][j] = aso_epsilon_min(sets[i], sets[j], m.alpha_used, bootstrap_samples, derive_seed(seed, {i, j})).eps_min;
  }
  return m;
}

/// Reads "model,seed,score" rows (header required) into score sets, in
/// order of first appearance.
inline std::vector<ScoreSet> read_scores_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("scores csv: empty input");
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ls(s);
    while (std::getline(ls, cell, ',')) {
      cell.erase(0, cell.find_first_not_of(" \t\r"));
      cell.erase(cell.find_last_not_of(" \t\r") + 1);
      out.push_back(cell);
    }
    return out;
  };
  const auto header = split(line);
  if (header != std::vector<std::string>{"model", "seed", "score"}) throw FormatError("scores csv: header must be model,seed,score");
  std::vector<ScoreSet> sets;
  std::map<std::string, std::size_t> index;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split(line);
    if (cells.size() != 3) throw FormatError("scores csv: row " + std::to_string(row) + " needs 3 fields");
    double score = 0.0;
    try {
      std::size_t used = 0;
      score = std::stod(cells[2], &used);
      if (used != cells[2].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw FormatError("scores csv: row " + std::to_string(row) + " has a bad score '" + cells[2] + "'");
    }
    auto [it, fresh] = index.emplace(cells[0], sets.size());
    if (fresh) sets.push_back({cells[0], {}});
    sets[it->second].scores.push_back(score);
  }
  for (const auto& s : sets) s.validate();
  return sets;
}

}  // namespace nsolver::stats
