#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "segbench/analysis.hpp"
#include "segbench/store.hpp"

namespace segbench {

struct PublishedTau {
  std::string baseline;
  std::string setting;
  double tau = 0.0;
};

/// Scores of a model set across settings, from published data or a results store.
struct ScoreTable {
  std::vector<SettingScores> settings;  // display order
  std::vector<PublishedTau> published;

  const SettingScores* find(const std::string& name) const;
  std::optional<double> published_tau(const std::string& baseline, const std::string& setting) const;
};

ScoreTable load_fixture(const std::filesystem::path& path);
/// data_dir()/fixture.yaml
ScoreTable bundled_fixture();

/// Groups complete runs by setting label and model; scores in percent points,
/// per-seed vectors ordered by seed, train time in seconds, params in millions.
ScoreTable table_from_runs(const std::vector<RunResult>& runs);

struct AnalysisRow {
  std::string baseline;
  std::string setting;
  SettingComparison tau;
  std::optional<double> time_ratio;
  std::optional<double> params_m;
  std::optional<double> params_delta_m;
  std::optional<double> published_tau;
  /// Set when the seed-mean tau, rounded to two decimals, differs from the published value.
  bool deviates_from_published = false;
};

struct AnalysisReport {
  std::string baseline;
  std::vector<AnalysisRow> rows;
};

/// One row per non-baseline setting, plus one row per published comparison whose
/// baseline is some other setting present in the table.
/// Throws if the baseline is absent or a setting's model set differs from the baseline's.
AnalysisReport analyze(const ScoreTable& table, const std::string& baseline);

/// Tab-separated table with a header line.
std::string format_tsv(const AnalysisReport& report);
/// Human-readable table, one line per row, with deviation notes.
std::string format_text(const AnalysisReport& report);

}  // namespace segbench
