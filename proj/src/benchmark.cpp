#include "segbench/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "segbench/error.hpp"
#include "segbench/registry.hpp"

namespace segbench {
namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string opt(const std::optional<double>& v, const char* spec) { return v ? fmt(spec, *v) : "-"; }

double round2(double v) { return std::round(v * 100.0) / 100.0; }

std::string tau_or_na(double tau, const char* spec) { return std::isnan(tau) ? "n/a" : fmt(spec, tau); }

AnalysisRow make_row(const ScoreTable& table, const SettingScores& base, const SettingScores& s) {
  AnalysisRow row;
  row.baseline = base.name;
  row.setting = s.name;
  row.tau = compare_settings(base, s);
  if (s.train_time && base.train_time && *base.train_time > 0.0) row.time_ratio = *s.train_time / *base.train_time;
  if (s.trainable_params) {
    row.params_m = s.trainable_params;
    if (base.trainable_params) row.params_delta_m = *s.trainable_params - *base.trainable_params;
  }
  row.published_tau = table.published_tau(base.name, s.name);
  if (row.published_tau && !std::isnan(row.tau.seed_means.tau)) {
    row.deviates_from_published = std::abs(round2(row.tau.seed_means.tau) - *row.published_tau) > 0.005;
  }
  return row;
}

}  // namespace

const SettingScores* ScoreTable::find(const std::string& name) const {
  for (const auto& s : settings) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

std::optional<double> ScoreTable::published_tau(const std::string& baseline, const std::string& setting) const {
  for (const auto& p : published) {
    if (p.baseline == baseline && p.setting == setting) return p.tau;
  }
  return std::nullopt;
}

ScoreTable load_fixture(const std::filesystem::path& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::Exception& e) {
    throw Error("cannot read fixture '" + path.string() + "': " + e.what());
  }
  ScoreTable table;
  try {
    const auto models = root["models"].as<std::vector<std::string>>();
    for (const auto& node : root["settings"]) {
      SettingScores s;
      s.name = node["name"].as<std::string>();
      if (node["train_time"]) s.train_time = node["train_time"].as<double>();
      if (node["trainable_params"]) s.trainable_params = node["trainable_params"].as<double>();
      const auto scores = node["scores"];
      if (scores.size() != models.size()) {
        throw Error("fixture setting '" + s.name + "' has " + std::to_string(scores.size()) + " scores for " +
                    std::to_string(models.size()) + " models");
      }
      for (std::size_t i = 0; i < models.size(); ++i) {
        ModelScore m;
        m.mean = scores[i][0].as<double>();
        m.std = scores[i][1].as<double>();
        s.models[models[i]] = m;
      }
      table.settings.push_back(std::move(s));
    }
    for (const auto& node : root["published_tau"]) {
      table.published.push_back(
          {node["baseline"].as<std::string>(), node["setting"].as<std::string>(), node["tau"].as<double>()});
    }
  } catch (const YAML::Exception& e) {
    throw Error("fixture '" + path.string() + "': " + e.what());
  }
  return table;
}

ScoreTable bundled_fixture() { return load_fixture(data_dir() / "fixture.yaml"); }

ScoreTable table_from_runs(const std::vector<RunResult>& runs) {
  struct Acc {
    std::map<std::string, std::map<std::uint64_t, double>> per_model;  // model -> seed -> mIoU %
    double time = 0.0;
    double params = 0.0;
    int count = 0;
  };
  std::vector<std::string> order;
  std::map<std::string, Acc> acc;
  for (const auto& r : runs) {
    if (!r.complete()) continue;
    if (!acc.contains(r.setting)) order.push_back(r.setting);
    Acc& a = acc[r.setting];
    // Later records for the same (model, seed) replace earlier ones (forced re-runs).
    a.per_model[r.config.model][r.seed] = 100.0 * r.miou;
    a.time += r.train_time_s;
    a.params += static_cast<double>(r.trainable_params) / 1e6;
    ++a.count;
  }
  ScoreTable table;
  for (const auto& name : order) {
    const Acc& a = acc.at(name);
    SettingScores s;
    s.name = name;
    s.train_time = a.time / a.count;
    s.trainable_params = a.params / a.count;
    for (const auto& [model, seeds] : a.per_model) {
      ModelScore m;
      for (const auto& [seed, v] : seeds) m.per_seed.push_back(v);
      const SeedSummary sum = aggregate_seeds(m.per_seed);
      m.mean = sum.mean;
      m.std = sum.std;
      s.models[model] = std::move(m);
    }
    table.settings.push_back(std::move(s));
  }
  return table;
}

AnalysisReport analyze(const ScoreTable& table, const std::string& baseline) {
  const SettingScores* base = table.find(baseline);
  if (!base) {
    std::string known;
    for (const auto& s : table.settings) known += (known.empty() ? "" : ", ") + s.name;
    throw Error("baseline setting '" + baseline + "' not found (available: " + (known.empty() ? "none" : known) +
                ")");
  }
  AnalysisReport report;
  report.baseline = baseline;
  for (const auto& s : table.settings) {
    if (s.name != baseline) report.rows.push_back(make_row(table, *base, s));
  }
  for (const auto& p : table.published) {
    if (p.baseline == baseline) continue;
    const SettingScores* b = table.find(p.baseline);
    const SettingScores* s = table.find(p.setting);
    if (b && s) report.rows.push_back(make_row(table, *b, *s));
  }
  return report;
}

std::string format_tsv(const AnalysisReport& report) {
  std::ostringstream os;
  os << "baseline\tsetting\tn\ttau_seed_means\tconcordance\ttau_per_seed\tpublished_tau\tdeviates\ttime_ratio\t"
        "trainable_params_m\tparams_delta_m\n";
  for (const auto& r : report.rows) {
    os << r.baseline << '\t' << r.setting << '\t' << r.tau.seed_means.n << '\t'
       << tau_or_na(r.tau.seed_means.tau, "%.4f") << '\t' << r.tau.seed_means.concordance << '\t'
       << (r.tau.per_seed ? fmt("%.4f", r.tau.per_seed->tau) : "n/a") << '\t' << opt(r.published_tau, "%.2f")
       << '\t' << (r.deviates_from_published ? "yes" : "no") << '\t' << opt(r.time_ratio, "%.1f") << '\t'
       << opt(r.params_m, "%.1f") << '\t' << opt(r.params_delta_m, "%+.1f") << '\n';
  }
  return os.str();
}

std::string format_text(const AnalysisReport& report) {
  std::ostringstream os;
  if (report.rows.empty()) {
    os << "No settings to compare against baseline '" << report.baseline << "'.\n";
    return os.str();
  }
  for (const auto& r : report.rows) {
    const std::string label = r.baseline == report.baseline ? r.setting : r.setting + " vs. " + r.baseline;
    if (std::isnan(r.tau.seed_means.tau)) {
      os << label << ": tau n/a (" << r.tau.seed_means.n << " shared model" << (r.tau.seed_means.n == 1 ? "" : "s")
         << ")";
    } else {
      os << label << ": " << fmt("%.2f", r.tau.seed_means.tau) << " (" << r.tau.seed_means.concordance << "/"
         << r.tau.seed_means.n * (r.tau.seed_means.n - 1) / 2 << ", seed means)";
    }
    if (r.tau.per_seed) os << ", per-seed " << fmt("%.2f", r.tau.per_seed->tau);
    if (r.time_ratio) os << ", time x" << fmt("%.1f", *r.time_ratio);
    if (r.params_m) os << ", params " << fmt("%.1f", *r.params_m) << "M";
    if (r.params_delta_m) os << " (" << fmt("%+.1f", *r.params_delta_m) << ")";
    os << '\n';
    if (r.deviates_from_published) {
      os << "  note: published tau is " << fmt("%.2f", *r.published_tau)
         << "; the seed-mean tau differs, the published value was likely computed per seed and "
            "per-seed scores are unavailable for this data\n";
    }
  }
  return os.str();
}

}  // namespace segbench
