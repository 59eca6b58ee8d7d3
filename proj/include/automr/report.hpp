#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "automr/error.hpp"
#include "automr/metrics.hpp"

namespace automr::report {

inline std::string fmt(double v, int digits = 4) {
  if (!std::isfinite(v)) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

struct EpochEvent {
  std::size_t epoch = 0;
  std::string split;
  double loss = NAN;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
};

inline std::vector<EpochEvent> read_events(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing event log: expected " + path.string());
  std::vector<EpochEvent> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      EpochEvent e;
      j.at("epoch").get_to(e.epoch);
      j.at("split").get_to(e.split);
      e.loss = j.at("loss").is_null() ? NAN : j.at("loss").get<double>();
      j.at("accuracy").get_to(e.accuracy);
      j.at("macro_f1").get_to(e.macro_f1);
      j.at("lr").get_to(e.lr);
      j.at("wall_ms").get_to(e.wall_ms);
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(n) + ": bad event record: " + e.what());
    }
  }
  return out;
}

// Accuracy / precision / recall / F1 rows, one per labelled report.
inline std::string metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows,
                                 const std::string& first_column = "Run") {
  std::ostringstream o;
  o << "| " << first_column << " | Accuracy | Precision | Recall | F1-score |\n|---|---|---|---|---|\n";
  for (const auto& [name, m] : rows)
    o << "| " << name << " | " << fmt(m.accuracy) << " | " << fmt(m.macro_precision) << " | " << fmt(m.macro_recall)
      << " | " << fmt(m.macro_f1) << " |\n";
  return o.str();
}

inline std::string per_class_table(const MetricsReport& m, const std::vector<std::string>& labels) {
  std::ostringstream o;
  o << "| Class | Precision | Recall | F1-score | Support |\n|---|---|---|---|---|\n";
  for (std::size_t c = 0; c < m.per_class.size(); ++c) {
    const auto& pc = m.per_class[c];
    o << "| " << (c < labels.size() ? labels[c] : std::to_string(c)) << " | " << fmt(pc.precision) << " | "
      << fmt(pc.recall) << " | " << fmt(pc.f1) << " | " << pc.support << " |\n";
  }
  return o.str();
}

inline std::string confusion_table(const MetricsReport& m, const std::vector<std::string>& labels) {
  auto name = [&](std::size_t c) { return c < labels.size() ? labels[c] : std::to_string(c); };
  std::ostringstream o;
  o << "| true \\ predicted |";
  for (std::size_t c = 0; c < m.num_classes(); ++c) o << ' ' << name(c) << " |";
  o << "\n|---|";
  for (std::size_t c = 0; c < m.num_classes(); ++c) o << "---|";
  o << '\n';
  for (std::size_t t = 0; t < m.num_classes(); ++t) {
    o << "| " << name(t) << " |";
    for (auto v : m.confusion[t]) o << ' ' << v << " |";
    o << '\n';
  }
  return o.str();
}

inline std::string epoch_table(const std::vector<EpochEvent>& events) {
  std::ostringstream o;
  o << "| Epoch | Split | Loss | Accuracy | Macro F1 | LR |\n|---|---|---|---|---|---|\n";
  for (const auto& e : events)
    o << "| " << e.epoch << " | " << e.split << " | " << fmt(e.loss) << " | " << fmt(e.accuracy) << " | "
      << fmt(e.macro_f1) << " | " << fmt(e.lr, 8) << " |\n";
  return o.str();
}

struct Series {
  std::string name;
  std::string color;
  std::vector<std::pair<double, double>> points;
};

// Static line chart with axes, ticks and a legend.
inline std::string svg_line_plot(const std::string& title, const std::string& y_label, const std::vector<Series>& series) {
  const double W = 640, H = 400, left = 70, right = 20, top = 40, bottom = 50;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series)
    for (auto [x, y] : s.points) {
      if (!std::isfinite(y)) continue;
      x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad, y1 += pad;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (W - left - right); };
  auto py = [&](double y) { return H - bottom - (y - y0) / (y1 - y0) * (H - top - bottom); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n"
    << "<line x1=\"" << left << "\" y1=\"" << H - bottom << "\" x2=\"" << W - right << "\" y2=\"" << H - bottom
    << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << H - bottom
    << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = y0 + (y1 - y0) * i / 4.0;
    o << "<text x=\"" << left - 6 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">" << fmt(y, 3) << "</text>\n"
      << "<line x1=\"" << left << "\" y1=\"" << py(y) << "\" x2=\"" << W - right << "\" y2=\"" << py(y)
      << "\" stroke=\"#ddd\"/>\n";
    const double x = x0 + (x1 - x0) * i / 4.0;
    o << "<text x=\"" << px(x) << "\" y=\"" << H - bottom + 18 << "\" text-anchor=\"middle\">" << fmt(x, 1)
      << "</text>\n";
  }
  o << "<text x=\"" << (left + W - right) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">epoch</text>\n"
    << "<text x=\"16\" y=\"" << (top + H - bottom) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << (top + H - bottom) / 2 << ")\">" << y_label << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    o << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\" points=\"";
    for (auto [x, y] : s.points)
      if (std::isfinite(y)) o << px(x) << ',' << py(y) << ' ';
    o << "\"/>\n";
    const double ly = top + 14 + 16 * static_cast<double>(k);
    o << "<line x1=\"" << W - right - 110 << "\" y1=\"" << ly - 4 << "\" x2=\"" << W - right - 90 << "\" y2=\"" << ly - 4
      << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n"
      << "<text x=\"" << W - right - 84 << "\" y=\"" << ly << "\">" << s.name << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

inline std::vector<Series> split_series(const std::vector<EpochEvent>& events, double EpochEvent::*field) {
  Series train{"train", "#1f77b4", {}}, test{"test", "#d62728", {}};
  for (const auto& e : events) (e.split == "train" ? train : test).points.emplace_back(static_cast<double>(e.epoch), e.*field);
  return {train, test};
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p);
  out << s;
  if (!out) throw IoError("cannot write " + p.string());
}

struct RunReport {
  std::filesystem::path markdown;
  std::filesystem::path loss_plot;
  std::filesystem::path accuracy_plot;
};

// Renders report.md, loss.svg and accuracy.svg for a training run directory
// (events.ndjson plus metrics.json) into `out_dir`.
inline RunReport render_run(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir) {
  const auto events = read_events(run_dir / "events.ndjson");
  std::ifstream mf(run_dir / "metrics.json");
  if (!mf) throw IoError("missing final metrics: expected " + (run_dir / "metrics.json").string());
  nlohmann::json mj;
  try {
    mj = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((run_dir / "metrics.json").string() + ": " + e.what());
  }
  const auto metrics = mj.at("metrics").get<MetricsReport>();
  const auto labels = mj.value("label_names", std::vector<std::string>{});

  std::filesystem::create_directories(out_dir);
  RunReport r{out_dir / "report.md", out_dir / "loss.svg", out_dir / "accuracy.svg"};
  write_text(r.loss_plot, svg_line_plot("Loss per epoch", "cross-entropy", split_series(events, &EpochEvent::loss)));
  write_text(r.accuracy_plot, svg_line_plot("Accuracy per epoch", "accuracy", split_series(events, &EpochEvent::accuracy)));

  std::ostringstream md;
  md << "# Run report: " << run_dir.filename().string() << "\n\n"
     << "## Final metrics (" << mj.value("split", "test") << " split, macro averages)\n\n"
     << metrics_table({{mj.value("split", "test"), metrics}}, "Split") << "\nLoss: " << fmt(metrics.loss) << "\n\n"
     << "## Per class\n\n" << per_class_table(metrics, labels) << "\n"
     << "## Confusion matrix\n\n" << confusion_table(metrics, labels) << "\n"
     << "## Training curve\n\n" << epoch_table(events) << "\n"
     << "![loss](" << r.loss_plot.filename().string() << ")\n![accuracy](" << r.accuracy_plot.filename().string()
     << ")\n";
  write_text(r.markdown, md.str());
  return r;
}

}  // namespace automr::report
