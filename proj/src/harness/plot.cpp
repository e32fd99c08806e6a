#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "snrilab/common/errors.hpp"
#include "snrilab/harness/harness.hpp"

namespace snrilab::harness {

namespace {

constexpr const char* kSummaryHeader =
    "method,input_snr_db,target_snri_db,mean_db,ci99_lo_db,ci99_hi_db";

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                          "#9467bd", "#ff7f0e", "#8c564b"};

struct SummaryRow {
  std::string method;
  double input_snr_db = 0.0;
  double target_db = 0.0;
  double mean_db = 0.0;
  double ci_lo_db = 0.0;
  double ci_hi_db = 0.0;
};

double parse_number(const std::string& token, int line_no) {
  const char* begin = token.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0' || !std::isfinite(v)) {
    throw SchemaMismatch("line " + std::to_string(line_no) +
                         ": '" + token + "' is not a finite number");
  }
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) {
    throw SchemaMismatch("summary CSV is empty");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kSummaryHeader) {
    throw SchemaMismatch("summary CSV header mismatch; expected '" +
                         std::string(kSummaryHeader) + "'");
  }
  std::vector<SummaryRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 6) {
      throw SchemaMismatch("line " + std::to_string(line_no) +
                           ": expected 6 fields, got " + std::to_string(f.size()));
    }
    SummaryRow r;
    r.method = f[0];
    if (r.method.empty()) {
      throw SchemaMismatch("line " + std::to_string(line_no) + ": empty method");
    }
    r.input_snr_db = parse_number(f[1], line_no);
    r.target_db = parse_number(f[2], line_no);
    r.mean_db = parse_number(f[3], line_no);
    r.ci_lo_db = parse_number(f[4], line_no);
    r.ci_hi_db = parse_number(f[5], line_no);
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw SchemaMismatch("summary CSV has no data rows");
  return rows;
}

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

// Largest 1/2/5 * 10^k step giving at least `min_ticks` intervals.
double nice_step(double range, int min_ticks) {
  const double raw = range / min_ticks;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {5.0, 2.0, 1.0}) {
    if (m * mag <= raw) return m * mag;
  }
  return mag;
}

}  // namespace

void cmd_plot(const std::filesystem::path& in_csv,
              const std::filesystem::path& out_svg) {
  std::vector<SummaryRow> rows = read_summary_csv(in_csv);
  std::sort(rows.begin(), rows.end(), [](const SummaryRow& a, const SummaryRow& b) {
    if (a.method != b.method) return a.method < b.method;
    if (a.input_snr_db != b.input_snr_db) return a.input_snr_db < b.input_snr_db;
    return a.target_db < b.target_db;
  });

  // Series keyed by (method, input SNR), points already target-sorted.
  std::vector<std::pair<std::pair<std::string, double>, std::vector<const SummaryRow*>>>
      series;
  for (const SummaryRow& r : rows) {
    const std::pair<std::string, double> key{r.method, r.input_snr_db};
    if (series.empty() || series.back().first != key) {
      series.push_back({key, {}});
    }
    series.back().second.push_back(&r);
  }

  double x_min = rows.front().target_db, x_max = x_min;
  double y_min = rows.front().ci_lo_db, y_max = rows.front().ci_hi_db;
  for (const SummaryRow& r : rows) {
    x_min = std::min(x_min, r.target_db);
    x_max = std::max(x_max, r.target_db);
    y_min = std::min(y_min, r.ci_lo_db);
    y_max = std::max(y_max, r.ci_hi_db);
  }
  // Keep the ideal achieved = target diagonal in frame.
  y_min = std::min(y_min, x_min);
  y_max = std::max(y_max, x_max);
  if (x_max - x_min < 1e-9) { x_min -= 1.0; x_max += 1.0; }
  if (y_max - y_min < 1e-9) { y_min -= 1.0; y_max += 1.0; }
  const double x_pad = 0.05 * (x_max - x_min);
  const double y_pad = 0.08 * (y_max - y_min);
  x_min -= x_pad; x_max += x_pad;
  y_min -= y_pad; y_max += y_pad;

  const double width = 860, height = 520;
  const double px0 = 70, px1 = 620, py0 = 40, py1 = 460;
  auto sx = [&](double v) { return px0 + (v - x_min) / (x_max - x_min) * (px1 - px0); };
  auto sy = [&](double v) { return py1 - (v - y_min) / (y_max - y_min) * (py1 - py0); };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt2(width) +
         "\" height=\"" + fmt2(height) + "\" viewBox=\"0 0 " + fmt2(width) + " " +
         fmt2(height) + "\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + fmt2(width) + "\" height=\"" +
         fmt2(height) + "\" fill=\"white\"/>\n";

  // Axes, grid, ticks.
  const double xs = nice_step(x_max - x_min, 4);
  const double ys = nice_step(y_max - y_min, 4);
  svg += "<g font-family=\"sans-serif\" font-size=\"12\" fill=\"#333\">\n";
  for (double v = std::ceil(x_min / xs) * xs; v <= x_max + 1e-9; v += xs) {
    const double x = sx(v);
    svg += "<line x1=\"" + fmt2(x) + "\" y1=\"" + fmt2(py0) + "\" x2=\"" + fmt2(x) +
           "\" y2=\"" + fmt2(py1) + "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + fmt2(x) + "\" y=\"" + fmt2(py1 + 18) +
           "\" text-anchor=\"middle\">" + format_value(v) + "</text>\n";
  }
  for (double v = std::ceil(y_min / ys) * ys; v <= y_max + 1e-9; v += ys) {
    const double y = sy(v);
    svg += "<line x1=\"" + fmt2(px0) + "\" y1=\"" + fmt2(y) + "\" x2=\"" + fmt2(px1) +
           "\" y2=\"" + fmt2(y) + "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + fmt2(px0 - 8) + "\" y=\"" + fmt2(y + 4) +
           "\" text-anchor=\"end\">" + format_value(v) + "</text>\n";
  }
  svg += "<text x=\"" + fmt2((px0 + px1) / 2) + "\" y=\"" + fmt2(py1 + 42) +
         "\" text-anchor=\"middle\">target SNRi (dB)</text>\n";
  svg += "<text x=\"18\" y=\"" + fmt2((py0 + py1) / 2) +
         "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
         fmt2((py0 + py1) / 2) + ")\">achieved SNRi (dB)</text>\n";
  svg += "</g>\n";

  // Ideal achieved = target reference.
  {
    const double a = std::max(x_min, y_min);
    const double b = std::min(x_max, y_max);
    if (b > a) {
      svg += "<line x1=\"" + fmt2(sx(a)) + "\" y1=\"" + fmt2(sy(a)) + "\" x2=\"" +
             fmt2(sx(b)) + "\" y2=\"" + fmt2(sy(b)) +
             "\" stroke=\"#999\" stroke-width=\"1\" stroke-dasharray=\"5,4\"/>\n";
    }
  }

  // Confidence bands then lines, so lines stay on top.
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& pts = series[si].second;
    const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
    if (pts.size() < 2) continue;
    std::string d = "M";
    for (const SummaryRow* p : pts) {
      d += " " + fmt2(sx(p->target_db)) + " " + fmt2(sy(p->ci_hi_db));
    }
    for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
      d += " L " + fmt2(sx((*it)->target_db)) + " " + fmt2(sy((*it)->ci_lo_db));
    }
    d += " Z";
    svg += "<path d=\"" + d + "\" fill=\"" + color +
           "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
  }
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& pts = series[si].second;
    const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
    std::string points;
    for (const SummaryRow* p : pts) {
      if (!points.empty()) points += " ";
      points += fmt2(sx(p->target_db)) + "," + fmt2(sy(p->mean_db));
    }
    svg += "<polyline points=\"" + points + "\" fill=\"none\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    for (const SummaryRow* p : pts) {
      svg += "<circle cx=\"" + fmt2(sx(p->target_db)) + "\" cy=\"" +
             fmt2(sy(p->mean_db)) + "\" r=\"3\" fill=\"" + color + "\"/>\n";
    }
  }

  // Legend.
  svg += "<g font-family=\"sans-serif\" font-size=\"12\" fill=\"#333\">\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
    const double ly = py0 + 10 + 22 * static_cast<double>(si);
    svg += "<line x1=\"" + fmt2(px1 + 16) + "\" y1=\"" + fmt2(ly) + "\" x2=\"" +
           fmt2(px1 + 44) + "\" y2=\"" + fmt2(ly) + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + fmt2(px1 + 50) + "\" y=\"" + fmt2(ly + 4) + "\">" +
           series[si].first.first + " @ " + format_value(series[si].first.second) +
           " dB</text>\n";
  }
  svg += "</g>\n</svg>\n";

  std::ofstream out(out_svg, std::ios::binary);
  if (!out) throw IoError("cannot write '" + out_svg.string() + "'");
  out << svg;
}

}  // namespace snrilab::harness
