#include "statt/charts.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "statt/errors.hpp"

namespace statt::charts {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 60, kRight = 150, kTop = 30, kBottom = 50;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double number(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError("chart input: '" + s + "' in column " + what + " is not a number");
  }
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

class Svg {
 public:
  Svg() {
    out_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
         << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
         << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& stroke, double width = 1) {
    out_ << "<line x1=\"" << fmt(x1) << "\" y1=\"" << fmt(y1) << "\" x2=\"" << fmt(x2) << "\" y2=\"" << fmt(y2)
         << "\" stroke=\"" << stroke << "\" stroke-width=\"" << width << "\"/>\n";
  }
  void text(double x, double y, const std::string& s, const char* anchor = "middle") {
    out_ << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" text-anchor=\"" << anchor << "\">" << escape(s)
         << "</text>\n";
  }
  void raw(const std::string& s) { out_ << s; }
  std::string finish() {
    out_ << "</svg>\n";
    return out_.str();
  }

 private:
  std::ostringstream out_;
};

// Frame, y ticks at fifths of [0, ymax], axis titles.
void axes(Svg& svg, double ymax, const std::string& xlabel, const std::string& ylabel, const std::string& title) {
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  svg.line(x0, y0, x1, y0, "black");
  svg.line(x0, y0, x0, y1, "black");
  for (int i = 0; i <= 5; ++i) {
    const double v = ymax * i / 5, y = y0 - (y0 - y1) * i / 5;
    svg.line(x0 - 4, y, x0, y, "black");
    svg.text(x0 - 8, y + 4, fmt(v), "end");
  }
  svg.text((x0 + x1) / 2, kHeight - 12, xlabel);
  svg.raw("<text x=\"16\" y=\"" + fmt((y0 + y1) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
          fmt((y0 + y1) / 2) + ")\">" + escape(ylabel) + "</text>\n");
  svg.text((x0 + x1) / 2, 18, title);
}

void legend(Svg& svg, const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = kTop + 10 + 18 * static_cast<double>(i);
    svg.line(kWidth - kRight + 15, y, kWidth - kRight + 35, y, kColors[i % 6], 3);
    svg.text(kWidth - kRight + 40, y + 4, names[i], "start");
  }
}

}  // namespace

Csv parse_csv(const std::string& text) {
  Csv csv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (csv.header.empty()) {
      csv.header = std::move(cells);
      continue;
    }
    if (cells.size() != csv.header.size()) {
      throw IoError("chart input: row " + std::to_string(csv.rows.size() + 1) + " has " +
                    std::to_string(cells.size()) + " cells, header has " + std::to_string(csv.header.size()));
    }
    csv.rows.push_back(std::move(cells));
  }
  if (csv.header.empty()) throw IoError("chart input: empty CSV");
  return csv;
}

std::string sweep_svg(const std::string& sweep_csv) {
  const Csv csv = parse_csv(sweep_csv);
  if (csv.header.size() < 3 || csv.header[0] != "fraction" || csv.header[1] != "mode" || csv.header[2] != "mean_f1") {
    throw IoError("chart input: expected a fraction,mode,mean_f1 header");
  }
  struct Point {
    double x, y;
    std::string label;  // the CSV cells, verbatim
  };
  std::map<std::string, std::vector<Point>> series;
  std::vector<std::string> order;
  double xmax = 0;
  for (const auto& r : csv.rows) {
    if (!series.count(r[1])) order.push_back(r[1]);
    const double x = number(r[0], "fraction"), y = number(r[2], "mean_f1");
    series[r[1]].push_back({x, y, r[0] + ": " + r[2]});
    xmax = std::max(xmax, x);
  }
  if (xmax <= 0) xmax = 1;
  Svg svg;
  axes(svg, 1.0, "fraction of noisy time steps", "test mean F1", "Mean F1 under injected noise");
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  auto px = [&](double x) { return x0 + (x1 - x0) * x / xmax; };
  auto py = [&](double y) { return y0 - (y0 - y1) * std::clamp(y, 0.0, 1.0); };
  std::vector<double> ticks;
  for (const auto& r : csv.rows) ticks.push_back(number(r[0], "fraction"));
  std::sort(ticks.begin(), ticks.end());
  ticks.erase(std::unique(ticks.begin(), ticks.end()), ticks.end());
  for (double t : ticks) {
    svg.line(px(t), y0, px(t), y0 + 4, "black");
    svg.text(px(t), y0 + 18, fmt(t));
  }
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto pts = series[order[i]];
    std::stable_sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a.x < b.x; });
    std::string path;
    for (const auto& p : pts) path += fmt(px(p.x)) + "," + fmt(py(p.y)) + " ";
    svg.raw("<polyline fill=\"none\" stroke=\"" + std::string(kColors[i % 6]) + "\" stroke-width=\"2\" points=\"" +
            path + "\"/>\n");
    for (const auto& p : pts) {
      svg.raw("<circle cx=\"" + fmt(px(p.x)) + "\" cy=\"" + fmt(py(p.y)) + "\" r=\"3\" fill=\"" + kColors[i % 6] +
              "\"><title>" + escape(order[i]) + " " + p.label + "</title></circle>\n");
    }
  }
  legend(svg, order);
  return svg.finish();
}

std::string attention_svg(const std::string& attention_csv) {
  const Csv csv = parse_csv(attention_csv);
  if (csv.header.size() < 2 || csv.header[0] != "t") throw IoError("chart input: expected a t,alpha_mean header");
  const std::size_t groups = csv.rows.size(), bars = csv.header.size() - 1;
  double ymax = 0;
  for (const auto& r : csv.rows)
    for (std::size_t b = 1; b <= bars; ++b)
      if (!r[b].empty()) ymax = std::max(ymax, number(r[b], csv.header[b]));
  ymax = ymax > 0 ? std::ceil(ymax * 10 + 1e-9) / 10 : 1;
  Svg svg;
  axes(svg, ymax, "time step", "attention weight", "Attention weight per time step");
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  const double slot = (x1 - x0) / static_cast<double>(std::max<std::size_t>(groups, 1));
  const double bar = slot * 0.8 / static_cast<double>(bars);
  for (std::size_t g = 0; g < groups; ++g) {
    const auto& r = csv.rows[g];
    svg.text(x0 + slot * (static_cast<double>(g) + 0.5), y0 + 18, r[0]);
    for (std::size_t b = 0; b < bars; ++b) {
      if (r[b + 1].empty()) continue;
      const double v = number(r[b + 1], csv.header[b + 1]);
      const double h = (y0 - y1) * v / ymax;
      const double x = x0 + slot * static_cast<double>(g) + slot * 0.1 + bar * static_cast<double>(b);
      svg.raw("<rect x=\"" + fmt(x) + "\" y=\"" + fmt(y0 - h) + "\" width=\"" + fmt(bar) + "\" height=\"" + fmt(h) +
              "\" fill=\"" + kColors[b % 6] + "\"><title>" + escape(csv.header[b + 1]) + " t=" + r[0] + ": " +
              r[b + 1] + "</title></rect>\n");
    }
  }
  legend(svg, std::vector<std::string>(csv.header.begin() + 1, csv.header.end()));
  return svg.finish();
}

}  // namespace statt::charts
