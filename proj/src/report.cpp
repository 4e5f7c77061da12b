#include "shiftbench/report.hpp"

#include <cstdio>
#include <map>
#include <set>

#include "shiftbench/csv.hpp"

namespace shiftbench {

namespace {

constexpr double kPanelW = 260, kPanelH = 200, kMarginL = 140, kMarginT = 60, kPad = 36;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_report_svg(const std::vector<RunRecord>& records, const std::vector<RegressionFit>& fits,
                              const std::string& metric) {
  std::set<std::string> experiments, shift_sets;
  for (const auto& r : records)
    if (r.metric_name == metric) {
      experiments.insert(r.experiment_id);
      shift_sets.insert(r.shift_set);
    }
  std::vector<std::string> shifts;
  if (shift_sets.count(kInDistribution)) shifts.push_back(kInDistribution);
  for (const auto& s : shift_sets)
    if (s != kInDistribution) shifts.push_back(s);
  std::map<std::string, const char*> color;
  for (std::size_t i = 0; i < shifts.size(); ++i) color[shifts[i]] = kPalette[i % std::size(kPalette)];

  std::vector<AggregatePoint> points;
  for (const auto& p : aggregate_replicas(records))
    if (p.key.metric_name == metric) points.push_back(p);

  double bmin = 0, bmax = 1;
  if (!points.empty()) {
    bmin = bmax = points.front().training_bias;
    for (const auto& p : points) {
      bmin = std::min(bmin, p.training_bias);
      bmax = std::max(bmax, p.training_bias);
    }
    if (bmax - bmin < 1e-12) {
      bmin -= 0.05;
      bmax += 0.05;
    }
  }

  const std::size_t cols = std::max<std::size_t>(experiments.size(), 1);
  const double width = kMarginL + cols * kPanelW + 20;
  const double height = kMarginT + 4 * kPanelH + 40 + 20.0 * static_cast<double>(shifts.size());
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(width) + "\" height=\"" + fmt(height) +
         "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + fmt(kMarginL) + "\" y=\"20\" font-size=\"14\">" + xml_escape(metric) +
         " vs training bias</text>\n";

  std::size_t col = 0;
  for (const auto& exp : experiments.empty() ? std::set<std::string>{""} : experiments) {
    const double x0 = kMarginL + col * kPanelW;
    svg += "<text x=\"" + fmt(x0 + kPanelW / 2) + "\" y=\"44\" text-anchor=\"middle\">" + xml_escape(exp) + "</text>\n";
    for (std::size_t row = 0; row < kAllScenarios.size(); ++row) {
      const Scenario sc = kAllScenarios[row];
      const double y0 = kMarginT + row * kPanelH;
      if (col == 0)
        svg += "<text x=\"10\" y=\"" + fmt(y0 + kPanelH / 2) + "\">" + std::string(to_string(sc)) + "</text>\n";
      const double px = x0 + kPad, py = y0 + 10, pw = kPanelW - kPad - 10, ph = kPanelH - kPad - 10;
      auto sx = [&](double b) { return px + (b - bmin) / (bmax - bmin) * pw; };
      auto sy = [&](double v) { return py + (1.0 - v) * ph; };
      svg += "<rect x=\"" + fmt(px) + "\" y=\"" + fmt(py) + "\" width=\"" + fmt(pw) + "\" height=\"" + fmt(ph) +
             "\" fill=\"none\" stroke=\"#888\"/>\n";

      bool any = false;
      std::size_t label_line = 0;
      for (const auto& shift : shifts) {
        const CurveKey key{exp, sc, shift, metric};
        std::string dots;
        for (const auto& p : points)
          if (p.key == key) {
            any = true;
            dots += "<circle cx=\"" + fmt(sx(p.training_bias)) + "\" cy=\"" + fmt(sy(std::clamp(p.mean, 0.0, 1.0))) +
                    "\" r=\"2.5\" fill=\"" + color[shift] + "\"/>\n";
          }
        svg += dots;
        for (const auto& f : fits) {
          if (!(f.key == key)) continue;
          std::string poly;
          for (int i = 0; i <= 20; ++i) {
            const double b = bmin + (bmax - bmin) * i / 20.0;
            poly += fmt(sx(b)) + "," + fmt(sy(inverse_logit(f.intercept + f.slope * b))) + " ";
          }
          poly.pop_back();
          svg += "<polyline points=\"" + poly + "\" fill=\"none\" stroke=\"" + color[shift] + "\"/>\n";
          svg += "<text x=\"" + fmt(px + 4) + "\" y=\"" + fmt(py + 12 + 12.0 * label_line++) + "\" fill=\"" +
                 color[shift] + "\">slope " + fmt(f.slope) + "</text>\n";
        }
      }
      if (!any) {
        svg += "<line x1=\"" + fmt(px) + "\" y1=\"" + fmt(py) + "\" x2=\"" + fmt(px + pw) + "\" y2=\"" + fmt(py + ph) +
               "\" stroke=\"#bbb\"/>\n";
        svg += "<line x1=\"" + fmt(px) + "\" y1=\"" + fmt(py + ph) + "\" x2=\"" + fmt(px + pw) + "\" y2=\"" + fmt(py) +
               "\" stroke=\"#bbb\"/>\n";
        svg += "<text x=\"" + fmt(px + pw / 2) + "\" y=\"" + fmt(py + ph / 2) +
               "\" text-anchor=\"middle\" fill=\"#666\">unavailable</text>\n";
      }
      svg += "<text x=\"" + fmt(px) + "\" y=\"" + fmt(py + ph + 14) + "\">" + fmt(bmin) + "</text>\n";
      svg += "<text x=\"" + fmt(px + pw) + "\" y=\"" + fmt(py + ph + 14) + "\" text-anchor=\"end\">" + fmt(bmax) +
             "</text>\n";
      svg += "<text x=\"" + fmt(px - 4) + "\" y=\"" + fmt(py + 8) + "\" text-anchor=\"end\">1.00</text>\n";
      svg += "<text x=\"" + fmt(px - 4) + "\" y=\"" + fmt(py + ph) + "\" text-anchor=\"end\">0.00</text>\n";
    }
    ++col;
  }

  double ly = kMarginT + 4 * kPanelH + 20;
  for (const auto& shift : shifts) {
    svg += "<rect x=\"" + fmt(kMarginL) + "\" y=\"" + fmt(ly - 9) + "\" width=\"10\" height=\"10\" fill=\"" +
           color[shift] + "\"/>\n";
    svg += "<text x=\"" + fmt(kMarginL + 16) + "\" y=\"" + fmt(ly) + "\">" + xml_escape(shift) + "</text>\n";
    ly += 20;
  }
  svg += "</svg>\n";
  return svg;
}

void render_report(const std::filesystem::path& results_csv, const std::filesystem::path& coefficients_csv,
                   const std::filesystem::path& out_path, const std::string& metric) {
  const auto records = parse_results_csv(results_csv);
  const auto fits = parse_coefficients_csv(coefficients_csv);
  csv::write_atomic(out_path, render_report_svg(records, fits, metric));
}

}  // namespace shiftbench
