#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "segbench/analysis.hpp"
#include "segbench/benchmark.hpp"

namespace segbench {

struct Bar {
  std::string label;
  double value = 0.0;
  double error = 0.0;  // half-height of the error bar; 0 draws none
};

/// Vertical bar chart as a standalone SVG document. Byte-stable for equal inputs.
std::string render_bar_chart(const std::string& title, const std::string& y_label, const std::vector<Bar>& bars,
                             double y_min, double y_max, int decimals);

/// Writes report.md, tau.svg and one miou_<setting>.svg per setting into `out_dir`.
/// An empty table produces a report with a "no runs" placeholder. Returns the written files.
std::vector<std::filesystem::path> write_report(const ScoreTable& table, const std::string& baseline,
                                                const std::filesystem::path& out_dir);

/// Lower-case alphanumerics with '-' for everything else.
std::string slug(const std::string& name);

}  // namespace segbench
