#include "itsc/report.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <iterator>
#include <optional>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "itsc/baselines.hpp"
#include "itsc/digest.hpp"
#include "itsc/error.hpp"
#include "itsc/pipeline.hpp"

namespace itsc::report {

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InputError("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw ParameterError("quantile: q must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double auroc(std::span<const double> negatives, std::span<const double> positives) {
  if (negatives.empty() || positives.empty()) throw InputError("auroc needs both classes");
  double wins = 0.0;
  for (double p : positives)
    for (double n : negatives) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  return wins / (static_cast<double>(negatives.size()) * static_cast<double>(positives.size()));
}

}  // namespace itsc::report

namespace itsc::pipeline {

using nlohmann::json;

namespace {

using Table = std::vector<std::vector<std::string>>;

Table read_table(const fs::path& path, std::vector<std::string>* header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Table rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (first) {
      if (header) *header = cells;
      first = false;
    } else {
      rows.push_back(std::move(cells));
    }
  }
  return rows;
}

double to_double(const std::string& s) {
  if (s == "nan" || s == "-nan") return NAN;
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw FormatError("not a number: '" + s + "'");
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
}

/// Checks every upstream output against its recorded digest.
void verify_upstream(const Manifest& manifest, const fs::path& out) {
  for (const char* stage : {"simulate", "image", "train", "score"}) {
    manifest.require_stage(stage, "report");
    for (const auto& [rel, digest] : manifest.stage_files(stage)) {
      const fs::path p = out / rel;
      if (!fs::exists(p))
        throw DependencyError("output of stage '" + std::string(stage) + "' is missing: " + rel);
      if (sha256_file(p) != digest)
        throw DependencyError("output of stage '" + std::string(stage) + "' was modified: " + rel);
    }
  }
}

const fs::path& listed(const Manifest& manifest, const fs::path& rel) {
  const auto files = manifest.all_files();
  if (!files.count(rel.generic_string()))
    throw DependencyError("stage 'score' did not record " + rel.generic_string());
  return rel;
}

const char* kPalette[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"};

struct Point {
  double x, y;
  std::size_t group;
};

/// One scatter panel drawn into an SVG group.
class Panel {
 public:
  Panel(double x0, double y0, double w, double h) : x0_(x0), y0_(y0), w_(w), h_(h) {}

  void draw(std::ostream& svg, const std::string& title, const std::vector<Point>& pts, bool log_y,
            std::optional<double> hline) const {
    auto ty = [&](double v) { return log_y ? std::log10(std::max(v, 1e-300)) : v; };
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    bool first = true;
    for (const auto& p : pts) {
      if (!std::isfinite(p.y)) continue;
      const double y = ty(p.y);
      if (first) {
        xmin = xmax = p.x;
        ymin = ymax = y;
        first = false;
      }
      xmin = std::min(xmin, p.x), xmax = std::max(xmax, p.x);
      ymin = std::min(ymin, y), ymax = std::max(ymax, y);
    }
    if (hline) ymin = std::min(ymin, ty(*hline)), ymax = std::max(ymax, ty(*hline));
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymin -= 0.5, ymax += 0.5;
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad, ymax += pad;

    const double l = x0_ + 50, r = x0_ + w_ - 10, t = y0_ + 25, b = y0_ + h_ - 25;
    auto px = [&](double x) { return l + (x - xmin) / (xmax - xmin) * (r - l); };
    auto py = [&](double y) { return b - (y - ymin) / (ymax - ymin) * (b - t); };

    svg << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
    svg << "<rect x=\"" << l << "\" y=\"" << t << "\" width=\"" << r - l << "\" height=\"" << b - t
        << "\" fill=\"none\" stroke=\"#444\"/>\n";
    svg << "<text x=\"" << l << "\" y=\"" << t - 8 << "\">" << title << "</text>\n";
    svg << "<text x=\"" << l - 4 << "\" y=\"" << t + 4 << "\" text-anchor=\"end\">"
        << (log_y ? "1e" : "") << std::llround(ymax * 100) / 100.0 << "</text>\n";
    svg << "<text x=\"" << l - 4 << "\" y=\"" << b << "\" text-anchor=\"end\">" << (log_y ? "1e" : "")
        << std::llround(ymin * 100) / 100.0 << "</text>\n";
    svg << "<text x=\"" << (l + r) / 2 << "\" y=\"" << b + 18 << "\" text-anchor=\"middle\">window</text>\n";
    for (const auto& p : pts) {
      if (!std::isfinite(p.y)) continue;
      svg << "<circle cx=\"" << px(p.x) << "\" cy=\"" << py(ty(p.y)) << "\" r=\"2\" fill=\""
          << kPalette[p.group % std::size(kPalette)] << "\"/>\n";
    }
    if (hline)
      svg << "<line x1=\"" << l << "\" x2=\"" << r << "\" y1=\"" << py(ty(*hline)) << "\" y2=\"" << py(ty(*hline))
          << "\" stroke=\"#c00\" stroke-dasharray=\"4 3\"/>\n";
    svg << "</g>\n";
  }

 private:
  double x0_, y0_, w_, h_;
};

void legend(std::ostream& svg, double x, double y, const std::vector<std::string>& labels) {
  svg << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    svg << "<rect x=\"" << x + 110.0 * static_cast<double>(i) << "\" y=\"" << y - 9
        << "\" width=\"10\" height=\"10\" fill=\"" << kPalette[i % std::size(kPalette)] << "\"/>";
    svg << "<text x=\"" << x + 110.0 * static_cast<double>(i) + 14 << "\" y=\"" << y << "\">" << labels[i]
        << "</text>\n";
  }
  svg << "</g>\n";
}

std::string svg_open(double w, double h) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
    << ' ' << h << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return s.str();
}

struct Group {
  std::string label;
  double fault_ratio = 0.0;
  std::vector<std::size_t> window;
  std::vector<double> md;
  std::vector<int> alarm;
  std::map<std::string, std::vector<double>> signals;  // feature / indicator name → per-window values
};

}  // namespace

void cmd_report(const RunConfig& cfg, const fs::path& out) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  Manifest manifest = Manifest::load(out);
  manifest.bind_config(cfg, false);
  verify_upstream(manifest, out);
  manifest.drop_stages_after("score");

  const json scores = json::parse(std::ifstream(out / listed(manifest, "scores/scores.json")));
  const double threshold = scores.at("threshold").get<double>();

  std::vector<Group> groups;
  std::map<std::string, std::size_t> by_label;
  for (const auto& entry : scores.at("series")) {
    Group g;
    g.label = entry.at("label").get<std::string>();
    g.fault_ratio = entry.at("fault_ratio").get<double>();
    for (const auto& row : read_table(out / listed(manifest, entry.at("file").get<std::string>()), nullptr)) {
      if (row.size() != 3) throw FormatError("health series row must have 3 fields");
      g.window.push_back(std::stoul(row[0]));
      g.md.push_back(to_double(row[1]));
      g.alarm.push_back(std::stoi(row[2]));
    }
    by_label[g.label] = groups.size();
    groups.push_back(std::move(g));
  }
  std::stable_sort(groups.begin(), groups.end(),
                   [](const Group& a, const Group& b) { return a.fault_ratio < b.fault_ratio; });
  for (std::size_t i = 0; i < groups.size(); ++i) by_label[groups[i].label] = i;

  std::vector<std::string> feature_header, indicator_header;
  const auto feature_rows = read_table(out / listed(manifest, "scores/features.csv"), &feature_header);
  const auto indicator_rows = read_table(out / listed(manifest, "scores/indicators.csv"), &indicator_header);
  auto absorb = [&](const Table& rows, const std::vector<std::string>& header) {
    for (const auto& row : rows) {
      if (row.size() != header.size()) throw FormatError("ragged row in feature table");
      auto it = by_label.find(row[1]);
      if (it == by_label.end()) throw FormatError("feature row for unknown label " + row[1]);
      for (std::size_t c = 2; c < header.size(); ++c) groups[it->second].signals[header[c]].push_back(to_double(row[c]));
    }
  };
  absorb(feature_rows, feature_header);
  absorb(indicator_rows, indicator_header);

  fs::create_directories(out / "report");
  std::vector<fs::path> files;

  // Chart data, windows concatenated in ascending severity.
  std::ostringstream hi, fc;
  hi.precision(17);
  fc.precision(17);
  hi << "x,label,fault_ratio,window_index,md_score,above_threshold,threshold\n";
  fc << "x,label,fault_ratio,window_index";
  for (auto n : features::FeatureVector::kNames) fc << ',' << n;
  fc << '\n';
  std::vector<Point> md_pts;
  std::array<std::vector<Point>, features::FeatureVector::kCount> feat_pts;
  std::size_t x = 0;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const Group& g = groups[gi];
    for (std::size_t k = 0; k < g.md.size(); ++k, ++x) {
      hi << x << ',' << g.label << ',' << g.fault_ratio << ',' << g.window[k] << ',' << g.md[k] << ',' << g.alarm[k]
         << ',' << threshold << '\n';
      md_pts.push_back({double(x), g.md[k], gi});
      fc << x << ',' << g.label << ',' << g.fault_ratio << ',' << g.window[k];
      for (std::size_t f = 0; f < features::FeatureVector::kCount; ++f) {
        const auto& col = g.signals.at(std::string(features::FeatureVector::kNames[f]));
        const double v = k < col.size() ? col[k] : NAN;
        fc << ',' << v;
        feat_pts[f].push_back({double(x), v, gi});
      }
      fc << '\n';
    }
  }
  write_text(out / "report" / "hi_chart.csv", hi.str());
  write_text(out / "report" / "feature_chart.csv", fc.str());
  files.insert(files.end(), {"report/hi_chart.csv", "report/feature_chart.csv"});

  // Severity-grouped summary: quartiles per signal, alarm rate and AUROC
  // against the healthy group.
  std::vector<std::string> signal_names = {"md_score"};
  for (auto n : features::FeatureVector::kNames) signal_names.emplace_back(n);
  signal_names.insert(signal_names.end(), {"third_harmonic_ratio", "clarke_eccentricity"});
  auto values_of = [](const Group& g, const std::string& name) {
    std::vector<double> v = name == "md_score" ? g.md : g.signals.at(name);
    std::erase_if(v, [](double d) { return !std::isfinite(d); });
    return v;
  };
  const Group* healthy = nullptr;
  for (const auto& g : groups)
    if (g.fault_ratio == 0.0) healthy = &g;

  std::ostringstream sum, md;
  sum.precision(17);
  sum << "label,fault_ratio,signal,count,q1,median,q3,alarm_rate,auroc_vs_healthy\n";
  md << "# Health indicator summary\n\nAlarm threshold (squared Mahalanobis distance): " << threshold << "\n\n"
     << "| severity | fault ratio | windows | MD q1 | MD median | MD q3 | alarm rate | AUROC vs healthy |\n"
     << "|---|---|---|---|---|---|---|---|\n";
  for (const auto& g : groups) {
    for (const auto& name : signal_names) {
      const auto v = values_of(g, name);
      sum << g.label << ',' << g.fault_ratio << ',' << name << ',' << v.size() << ',';
      if (v.empty()) {
        sum << ",,,";
      } else {
        sum << report::quantile(v, 0.25) << ',' << report::quantile(v, 0.5) << ',' << report::quantile(v, 0.75) << ',';
      }
      if (name == "md_score" && !g.alarm.empty()) {
        double fired = 0;
        for (int a : g.alarm) fired += a;
        sum << fired / double(g.alarm.size());
      }
      sum << ',';
      if (healthy && &g != healthy && !v.empty()) {
        const auto h = values_of(*healthy, name);
        if (!h.empty()) sum << report::auroc(h, v);
      }
      sum << '\n';
    }
    md << "| " << g.label << " | " << g.fault_ratio << " | " << g.md.size() << " | ";
    if (g.md.empty()) {
      md << "| | | | |\n";
      continue;
    }
    double fired = 0;
    for (int a : g.alarm) fired += a;
    md << report::quantile(g.md, 0.25) << " | " << report::quantile(g.md, 0.5) << " | "
       << report::quantile(g.md, 0.75) << " | " << fired / double(g.alarm.size()) << " | ";
    if (healthy && &g != healthy) md << report::auroc(healthy->md, g.md);
    md << " |\n";
  }
  write_text(out / "report" / "summary.csv", sum.str());
  write_text(out / "report" / "summary.md", md.str());
  files.insert(files.end(), {"report/summary.csv", "report/summary.md"});

  std::vector<std::string> labels;
  for (const auto& g : groups) labels.push_back(g.label);

  {
    std::ostringstream svg;
    svg << svg_open(640, 400);
    Panel(0, 20, 640, 360).draw(svg, "Squared Mahalanobis distance (log scale), dashed: threshold", md_pts, true,
                               threshold);
    legend(svg, 50, 395, labels);
    svg << "</svg>\n";
    write_text(out / "report" / "hi_proposed.svg", svg.str());
  }
  {
    std::ostringstream svg;
    svg << svg_open(960, 560);
    for (std::size_t f = 0; f < features::FeatureVector::kCount; ++f) {
      const double px = 320.0 * double(f % 3), py = 20 + 260.0 * double(f / 3);
      Panel(px, py, 320, 260).draw(svg, "normalized " + std::string(features::FeatureVector::kNames[f]), feat_pts[f],
                                  false, std::nullopt);
    }
    legend(svg, 50, 552, labels);
    svg << "</svg>\n";
    write_text(out / "report" / "hi_features.svg", svg.str());
  }
  {
    // Proposed indicator and knowledge features side by side.
    std::ostringstream svg;
    svg << svg_open(1280, 420);
    Panel(0, 20, 560, 380).draw(svg, "Proposed: squared MD (log scale)", md_pts, true, threshold);
    for (std::size_t f = 0; f < features::FeatureVector::kCount; ++f) {
      const double px = 560 + 240.0 * double(f % 3), py = 20 + 190.0 * double(f / 3);
      Panel(px, py, 240, 190).draw(svg, std::string(features::FeatureVector::kNames[f]), feat_pts[f], false,
                                  std::nullopt);
    }
    legend(svg, 50, 415, labels);
    svg << "</svg>\n";
    write_text(out / "report" / "comparison.svg", svg.str());
  }
  files.insert(files.end(), {"report/hi_proposed.svg", "report/hi_features.svg", "report/comparison.svg"});

  manifest.record_stage("report", out, files,
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  manifest.save(out);
}

}  // namespace itsc::pipeline
