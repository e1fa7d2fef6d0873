#include "wilson/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "wilson/artifacts.hpp"

namespace wilson {
namespace {

std::string escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
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

std::string num(double v) { return format_double(v); }

const char* kPalette[] = {"#3b6fb6", "#c23b22", "#3a923a", "#8450a8",
                          "#b07c26", "#4aa3a3"};
constexpr int kPaletteSize = 6;

std::string svg_open(double width, double height, const std::string& title) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width)
     << "\" height=\"" << num(height) << "\" viewBox=\"0 0 " << num(width)
     << " " << num(height) << "\" font-family=\"sans-serif\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << num(width / 2)
     << "\" y=\"18\" font-size=\"14\" text-anchor=\"middle\">" << escape(title)
     << "</text>\n";
  return os.str();
}

// white -> deep blue, t in [0, 1]
std::string heat_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  int r = static_cast<int>(std::lround(255.0 + t * (41.0 - 255.0)));
  int g = static_cast<int>(std::lround(255.0 + t * (80.0 - 255.0)));
  int b = static_cast<int>(std::lround(255.0 + t * (150.0 - 255.0)));
  std::ostringstream os;
  os << "rgb(" << r << "," << g << "," << b << ")";
  return os.str();
}

}  // namespace

std::string svg_heatmap(const Matd& values,
                        const std::vector<std::string>& labels,
                        const std::string& title) {
  const Index n = values.rows();
  if (n == 0) raise("insufficient-data", "svg_heatmap: empty matrix");
  if (values.cols() != n)
    raise("invalid-dimension", "svg_heatmap: matrix must be square");
  if (labels.size() != static_cast<std::size_t>(n))
    raise("invalid-dimension", "svg_heatmap: one label per row required");

  const double cell = 36.0;
  const double left = 110.0;
  const double top = 60.0;
  const double width = left + n * cell + 20.0;
  const double height = top + n * cell + 20.0;
  double vmax = 0.0;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      vmax = std::max(vmax, std::abs(values(i, j)));

  std::ostringstream os;
  os << svg_open(width, height, title);
  for (Index i = 0; i < n; ++i) {
    os << "<text x=\"" << num(left - 6) << "\" y=\""
       << num(top + i * cell + cell / 2 + 4)
       << "\" font-size=\"10\" text-anchor=\"end\">" << escape(labels[i])
       << "</text>\n";
    os << "<text x=\"" << num(left + i * cell + cell / 2) << "\" y=\""
       << num(top - 8) << "\" font-size=\"10\" text-anchor=\"middle\">"
       << escape(labels[i]) << "</text>\n";
  }
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      const double v = values(i, j);
      const double t = vmax > 0 ? std::abs(v) / vmax : 0.0;
      os << "<rect x=\"" << num(left + j * cell) << "\" y=\""
         << num(top + i * cell) << "\" width=\"" << num(cell) << "\" height=\""
         << num(cell) << "\" fill=\"" << heat_color(t)
         << "\" stroke=\"#999\"/>\n";
      if (n <= 12) {
        os << "<text x=\"" << num(left + j * cell + cell / 2) << "\" y=\""
           << num(top + i * cell + cell / 2 + 3) << "\" font-size=\"8\" "
           << "text-anchor=\"middle\" fill=\"" << (t > 0.6 ? "white" : "black")
           << "\">" << num(std::round(v * 100.0) / 100.0) << "</text>\n";
      }
    }
  }
  os << "</svg>\n";
  return os.str();
}

std::string svg_scatter(const std::vector<ScatterPoint>& points,
                        const std::string& title, const std::string& x_label,
                        const std::string& y_label) {
  if (points.empty()) raise("insufficient-data", "svg_scatter: no points");
  double xmin = points[0].x, xmax = points[0].x;
  double ymin = points[0].y, ymax = points[0].y;
  for (const auto& p : points) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  if (xmax == xmin) { xmin -= 1.0; xmax += 1.0; }
  if (ymax == ymin) { ymin -= 1.0; ymax += 1.0; }

  const double left = 70.0, top = 40.0, plot_w = 420.0, plot_h = 300.0;
  const double width = left + plot_w + 30.0;
  const double height = top + plot_h + 60.0;
  auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * plot_w; };
  auto sy = [&](double y) { return top + plot_h - (y - ymin) / (ymax - ymin) * plot_h; };

  std::ostringstream os;
  os << svg_open(width, height, title);
  os << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\""
     << num(plot_w) << "\" height=\"" << num(plot_h)
     << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double fx = xmin + (xmax - xmin) * k / 4.0;
    const double fy = ymin + (ymax - ymin) * k / 4.0;
    os << "<text x=\"" << num(sx(fx)) << "\" y=\"" << num(top + plot_h + 16)
       << "\" font-size=\"9\" text-anchor=\"middle\">"
       << num(std::round(fx * 1000.0) / 1000.0) << "</text>\n";
    os << "<text x=\"" << num(left - 6) << "\" y=\"" << num(sy(fy) + 3)
       << "\" font-size=\"9\" text-anchor=\"end\">"
       << num(std::round(fy * 1000.0) / 1000.0) << "</text>\n";
  }
  os << "<text x=\"" << num(left + plot_w / 2) << "\" y=\""
     << num(top + plot_h + 40) << "\" font-size=\"11\" text-anchor=\"middle\">"
     << escape(x_label) << "</text>\n";
  os << "<text x=\"16\" y=\"" << num(top + plot_h / 2)
     << "\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << num(top + plot_h / 2) << ")\">" << escape(y_label) << "</text>\n";
  for (const auto& p : points) {
    const int series = p.series >= 0 ? p.series % kPaletteSize : 0;
    os << "<circle cx=\"" << num(sx(p.x)) << "\" cy=\"" << num(sy(p.y))
       << "\" r=\"3\" fill=\"" << kPalette[series] << "\" fill-opacity=\"0.75\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string svg_roc(const std::vector<RocPoint>& roc, const std::string& title) {
  if (roc.empty()) raise("insufficient-data", "svg_roc: empty curve");
  const double left = 60.0, top = 40.0, side = 320.0;
  const double width = left + side + 30.0;
  const double height = top + side + 60.0;
  auto sx = [&](double v) { return left + v * side; };
  auto sy = [&](double v) { return top + side - v * side; };

  std::ostringstream os;
  os << svg_open(width, height, title);
  os << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\""
     << num(side) << "\" height=\"" << num(side)
     << "\" fill=\"none\" stroke=\"#333\"/>\n";
  os << "<line x1=\"" << num(sx(0)) << "\" y1=\"" << num(sy(0)) << "\" x2=\""
     << num(sx(1)) << "\" y2=\"" << num(sy(1))
     << "\" stroke=\"#aaa\" stroke-dasharray=\"4 3\"/>\n";
  os << "<polyline fill=\"none\" stroke=\"" << kPalette[0]
     << "\" stroke-width=\"2\" points=\"";
  for (const auto& p : roc) os << num(sx(p.fpr)) << "," << num(sy(p.tpr)) << " ";
  os << "\"/>\n";
  os << "<text x=\"" << num(left + side / 2) << "\" y=\""
     << num(top + side + 30)
     << "\" font-size=\"11\" text-anchor=\"middle\">false positive rate</text>\n";
  os << "<text x=\"16\" y=\"" << num(top + side / 2)
     << "\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << num(top + side / 2) << ")\">true positive rate</text>\n";
  os << "</svg>\n";
  return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) raise("io-error", "cannot open for writing: " + path);
  f << content;
  if (!f) raise("io-error", "write failed: " + path);
}

}  // namespace wilson
