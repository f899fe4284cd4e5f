#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace segbench {

/// Kendall rank correlation (tau-a) computed on raw score vectors.
/// Pairs tied in either vector contribute zero. Requires x.size() == y.size() >= 2.
double kendall_tau(const std::vector<double>& x, const std::vector<double>& y);

/// Numerator of kendall_tau: sum over i<j of sign(x_i-x_j)*sign(y_i-y_j).
long kendall_concordance(const std::vector<double>& x, const std::vector<double>& y);

struct SeedSummary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n-1), 0 for a single run
  std::size_t runs = 0;
};

SeedSummary aggregate_seeds(const std::vector<double>& scores);

/// Descending competition ranks ("1224"): tied scores share the best rank.
std::vector<int> rank_models(const std::vector<double>& scores);

/// Scores of every model under one setting. Per-seed scores are optional:
/// published results only carry mean and std.
struct ModelScore {
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> per_seed;  // indexed by seed order, may be empty
};

struct SettingScores {
  std::string name;
  std::map<std::string, ModelScore> models;
  std::optional<double> train_time;        // absolute seconds or relative units
  std::optional<double> trainable_params;  // millions
};

enum class TauMode { kSeedMeans, kMeanOfPerSeed };

struct TauResult {
  double tau = 0.0;
  long concordance = 0;
  std::size_t n = 0;
  TauMode mode = TauMode::kSeedMeans;
};

struct RankingComparison {
  std::vector<std::string> models;
  std::vector<double> x;
  std::vector<double> y;
};

/// Pairs the two settings' seed-mean scores in a common (sorted) model order.
/// Throws if the model sets differ, naming the models present on one side only.
RankingComparison pair_settings(const SettingScores& a, const SettingScores& b);

struct SettingComparison {
  TauResult seed_means;
  std::optional<TauResult> per_seed;  // only when both sides have aligned per-seed scores
};

/// Fewer than two shared models leave tau as NaN.
SettingComparison compare_settings(const SettingScores& a, const SettingScores& b);

const char* to_string(TauMode mode);

}  // namespace segbench
