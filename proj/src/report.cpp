#include "segbench/report.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "segbench/error.hpp"

namespace segbench {
namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

// Models sorted by descending mean; ties keep name order.
std::vector<std::pair<std::string, ModelScore>> ranked(const SettingScores& s) {
  std::vector<std::pair<std::string, ModelScore>> v(s.models.begin(), s.models.end());
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second.mean > b.second.mean; });
  return v;
}

}  // namespace

std::string slug(const std::string& name) {
  std::string out;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c))) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    else if (!out.empty() && out.back() != '-') out += '-';
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out.empty() ? "setting" : out;
}

std::string render_bar_chart(const std::string& title, const std::string& y_label, const std::vector<Bar>& bars,
                             double y_min, double y_max, int decimals) {
  const int left = 70, top = 40, plot_h = 300, bar_w = 36, gap = 18, bottom = 150;
  const int plot_w = std::max<int>(1, static_cast<int>(bars.size())) * (bar_w + gap) + gap;
  const int width = left + plot_w + 20;
  const int height = top + plot_h + bottom;
  const double span = y_max > y_min ? y_max - y_min : 1.0;
  auto y_of = [&](double v) { return top + plot_h - (std::clamp(v, y_min, y_max) - y_min) / span * plot_h; };
  const std::string value_spec = "%." + std::to_string(decimals) + "f";

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape_xml(title)
     << "</text>\n";
  os << "<text transform=\"translate(16," << top + plot_h / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << escape_xml(y_label) << "</text>\n";
  for (int t = 0; t <= 5; ++t) {
    const double v = y_min + span * t / 5.0;
    const double y = y_of(v);
    os << "<line x1=\"" << left << "\" x2=\"" << left + plot_w << "\" y1=\"" << fmt("%.1f", y) << "\" y2=\""
       << fmt("%.1f", y) << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << left - 6 << "\" y=\"" << fmt("%.1f", y + 4) << "\" text-anchor=\"end\">"
       << fmt(value_spec.c_str(), v) << "</text>\n";
  }
  os << "<line x1=\"" << left << "\" x2=\"" << left << "\" y1=\"" << top << "\" y2=\"" << top + plot_h
     << "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const Bar& b = bars[i];
    const double x = left + gap + static_cast<double>(i) * (bar_w + gap);
    const double y = y_of(b.value);
    const double base = y_of(std::max(y_min, 0.0));
    const double y_top = std::min(y, base);
    const double h = std::abs(base - y);
    std::string tip = b.label + ": " + fmt(value_spec.c_str(), b.value);
    if (b.error > 0.0) tip += " \xC2\xB1 " + fmt(value_spec.c_str(), b.error);
    os << "<g>\n<title>" << escape_xml(tip) << "</title>\n";
    os << "<rect x=\"" << fmt("%.1f", x) << "\" y=\"" << fmt("%.1f", y_top) << "\" width=\"" << bar_w
       << "\" height=\"" << fmt("%.1f", h) << "\" fill=\"#4c72b0\"/>\n";
    if (b.error > 0.0) {
      const double cx = x + bar_w / 2.0;
      const double e_hi = y_of(b.value + b.error);
      const double e_lo = y_of(b.value - b.error);
      os << "<line class=\"error-bar\" x1=\"" << fmt("%.1f", cx) << "\" x2=\"" << fmt("%.1f", cx) << "\" y1=\""
         << fmt("%.1f", e_hi) << "\" y2=\"" << fmt("%.1f", e_lo) << "\" stroke=\"black\"/>\n";
      for (double ey : {e_hi, e_lo}) {
        os << "<line x1=\"" << fmt("%.1f", cx - 5) << "\" x2=\"" << fmt("%.1f", cx + 5) << "\" y1=\""
           << fmt("%.1f", ey) << "\" y2=\"" << fmt("%.1f", ey) << "\" stroke=\"black\"/>\n";
      }
    }
    os << "<text x=\"" << fmt("%.1f", x + bar_w / 2.0) << "\" y=\"" << fmt("%.1f", y_top - 4)
       << "\" text-anchor=\"middle\">" << fmt(value_spec.c_str(), b.value) << "</text>\n";
    os << "<text transform=\"translate(" << fmt("%.1f", x + bar_w / 2.0) << "," << top + plot_h + 12
       << ") rotate(-40)\" text-anchor=\"end\">" << escape_xml(b.label) << "</text>\n</g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::vector<std::filesystem::path> write_report(const ScoreTable& table, const std::string& baseline,
                                                const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) throw Error("cannot create report directory '" + out_dir.string() + "'");

  std::vector<std::filesystem::path> written;
  std::ostringstream md;
  md << "# Segmentation benchmark report\n\n";
  if (table.settings.empty()) {
    md << "_No runs recorded._\n";
    write_file(out_dir / "report.md", md.str());
    written.push_back(out_dir / "report.md");
    return written;
  }

  const AnalysisReport analysis = analyze(table, baseline);
  md << "Baseline setting: **" << baseline << "**\n\n";
  md << "## Ranking stability (Kendall tau)\n\n";
  if (analysis.rows.empty()) {
    md << "_No other settings to compare._\n\n";
  } else {
    md << "| Setting | Compared to | tau (seed means) | tau (per seed) | Published | Time ratio | Trainable params (M) |\n";
    md << "|---|---|---|---|---|---|---|\n";
    for (const auto& r : analysis.rows) {
      md << "| " << r.setting << " | " << r.baseline << " | " << fmt("%.2f", r.tau.seed_means.tau) << " ("
         << r.tau.seed_means.concordance << "/" << r.tau.seed_means.n * (r.tau.seed_means.n - 1) / 2 << ") | "
         << (r.tau.per_seed ? fmt("%.2f", r.tau.per_seed->tau) : "n/a") << " | "
         << (r.published_tau ? fmt("%.2f", *r.published_tau) : "-") << (r.deviates_from_published ? " (!)" : "")
         << " | " << (r.time_ratio ? fmt("%.1f", *r.time_ratio) : "-") << " | "
         << (r.params_m ? fmt("%.1f", *r.params_m) : "-")
         << (r.params_delta_m ? " (" + fmt("%+.1f", *r.params_delta_m) + ")" : "") << " |\n";
    }
    md << "\n";
    for (const auto& r : analysis.rows) {
      if (!r.deviates_from_published) continue;
      md << "- (!) " << r.setting << " vs. " << r.baseline << ": tau on seed means is "
         << fmt("%.2f", r.tau.seed_means.tau) << " but the published value is " << fmt("%.2f", *r.published_tau)
         << ". The published value was likely computed per seed; per-seed scores are not available for this "
            "data, so that mode cannot be reproduced.\n";
    }
    md << "\n![tau](tau.svg)\n\n";

    std::vector<Bar> tau_bars;
    for (const auto& r : analysis.rows) {
      const std::string label = r.baseline == baseline ? r.setting : r.setting + " vs. " + r.baseline;
      tau_bars.push_back({label, r.tau.seed_means.tau, 0.0});
    }
    write_file(out_dir / "tau.svg", render_bar_chart("Kendall tau vs. " + baseline, "tau", tau_bars, -1.0, 1.0, 2));
    written.push_back(out_dir / "tau.svg");
  }

  md << "## Per-setting results (mIoU %, mean \xC2\xB1 std over seeds)\n\n";
  for (const auto& s : table.settings) {
    md << "### " << s.name << "\n\n| Rank | Model | mIoU | Std |\n|---|---|---|---|\n";
    const auto rows = ranked(s);
    std::vector<double> means;
    for (const auto& [_, m] : rows) means.push_back(m.mean);
    const auto ranks = rank_models(means);
    std::vector<Bar> bars;
    double hi = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      md << "| " << ranks[i] << " | " << rows[i].first << " | " << fmt("%.1f", rows[i].second.mean) << " | "
         << fmt("%.1f", rows[i].second.std) << " |\n";
      bars.push_back({rows[i].first, rows[i].second.mean, rows[i].second.std});
      hi = std::max(hi, rows[i].second.mean + rows[i].second.std);
    }
    const std::string file = "miou_" + slug(s.name) + ".svg";
    md << "\n![" << s.name << "](" << file << ")\n\n";
    const double y_max = std::max(10.0, std::ceil(hi / 10.0) * 10.0);
    write_file(out_dir / file, render_bar_chart(s.name, "Validation mIoU (%)", bars, 0.0, y_max, 1));
    written.push_back(out_dir / file);
  }
  write_file(out_dir / "report.md", md.str());
  written.push_back(out_dir / "report.md");
  return written;
}

}  // namespace segbench
