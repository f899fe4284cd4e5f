#include "segbench/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "segbench/error.hpp"

namespace segbench {
namespace {

int sign(double v) { return (v > 0.0) - (v < 0.0); }

bool has_aligned_seeds(const SettingScores& a, const SettingScores& b) {
  std::size_t seeds = 0;
  for (const auto& [name, score] : a.models) {
    const auto& other = b.models.at(name);
    if (score.per_seed.empty() || score.per_seed.size() != other.per_seed.size()) return false;
    if (seeds != 0 && score.per_seed.size() != seeds) return false;
    seeds = score.per_seed.size();
  }
  return seeds > 0;
}

}  // namespace

long kendall_concordance(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) {
    throw Error("kendall_tau: length mismatch (" + std::to_string(x.size()) + " vs " +
                std::to_string(y.size()) + ")");
  }
  if (x.size() < 2) throw Error("kendall_tau: need at least 2 models");
  long sum = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      sum += sign(x[i] - x[j]) * sign(y[i] - y[j]);
    }
  }
  return sum;
}

double kendall_tau(const std::vector<double>& x, const std::vector<double>& y) {
  const long c = kendall_concordance(x, y);
  const double n = static_cast<double>(x.size());
  return 2.0 * static_cast<double>(c) / (n * (n - 1.0));
}

SeedSummary aggregate_seeds(const std::vector<double>& scores) {
  SeedSummary s;
  s.runs = scores.size();
  if (scores.empty()) return s;
  s.mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
  if (scores.size() > 1) {
    double ss = 0.0;
    for (double v : scores) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(scores.size() - 1));
  }
  return s;
}

std::vector<int> rank_models(const std::vector<double>& scores) {
  std::vector<int> ranks(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    int better = 0;
    for (double other : scores) better += other > scores[i];
    ranks[i] = better + 1;
  }
  return ranks;
}

RankingComparison pair_settings(const SettingScores& a, const SettingScores& b) {
  std::vector<std::string> only_a;
  std::vector<std::string> only_b;
  for (const auto& [name, _] : a.models) {
    if (!b.models.contains(name)) only_a.push_back(name);
  }
  for (const auto& [name, _] : b.models) {
    if (!a.models.contains(name)) only_b.push_back(name);
  }
  if (!only_a.empty() || !only_b.empty()) {
    std::ostringstream msg;
    msg << "model sets differ between '" << a.name << "' and '" << b.name << "':";
    for (const auto& m : only_a) msg << " " << m << " (only in " << a.name << ")";
    for (const auto& m : only_b) msg << " " << m << " (only in " << b.name << ")";
    throw Error(msg.str());
  }
  RankingComparison cmp;
  for (const auto& [name, score] : a.models) {
    cmp.models.push_back(name);
    cmp.x.push_back(score.mean);
    cmp.y.push_back(b.models.at(name).mean);
  }
  return cmp;
}

SettingComparison compare_settings(const SettingScores& a, const SettingScores& b) {
  const RankingComparison cmp = pair_settings(a, b);
  SettingComparison out;
  out.seed_means.n = cmp.models.size();
  if (cmp.models.size() < 2) {
    out.seed_means.tau = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  out.seed_means.concordance = kendall_concordance(cmp.x, cmp.y);
  out.seed_means.tau = kendall_tau(cmp.x, cmp.y);
  out.seed_means.n = cmp.models.size();
  out.seed_means.mode = TauMode::kSeedMeans;

  if (has_aligned_seeds(a, b)) {
    const std::size_t seeds = a.models.begin()->second.per_seed.size();
    double total = 0.0;
    long concordance = 0;
    for (std::size_t s = 0; s < seeds; ++s) {
      std::vector<double> x;
      std::vector<double> y;
      for (const auto& name : cmp.models) {
        x.push_back(a.models.at(name).per_seed[s]);
        y.push_back(b.models.at(name).per_seed[s]);
      }
      total += kendall_tau(x, y);
      concordance += kendall_concordance(x, y);
    }
    TauResult r;
    r.tau = total / static_cast<double>(seeds);
    r.concordance = concordance;
    r.n = cmp.models.size();
    r.mode = TauMode::kMeanOfPerSeed;
    out.per_seed = r;
  }
  return out;
}

const char* to_string(TauMode mode) {
  return mode == TauMode::kSeedMeans ? "on-seed-means" : "mean-of-per-seed";
}

}  // namespace segbench
