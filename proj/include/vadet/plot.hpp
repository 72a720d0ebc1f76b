#pragma once

// Small SVG writers for report figures: grouped bar charts and a 2-D
// principal-component scatter of latent vectors.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace vadet::plot {

inline const std::vector<std::string>& palette() {
  static const std::vector<std::string> p{"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
                                          "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"};
  return p;
}

inline std::string escape(const std::string& s) {
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

inline void write_file(const std::string& path, const std::string& svg) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << svg;
}

inline std::string tick(double v) {
  std::ostringstream o;
  o << std::setprecision(3) << v;
  return o.str();
}

struct BarSeries {
  std::string name;
  std::vector<std::optional<double>> values;  // one per category; absent values draw no bar
};

/// Grouped bars: one group per category, one bar per series.
inline std::string bar_chart(const std::string& title, const std::vector<std::string>& categories, const std::vector<BarSeries>& series,
                             const std::string& y_label = "") {
  if (categories.empty() || series.empty()) throw std::invalid_argument("bar_chart: nothing to draw");
  const double W = 120.0 + 90.0 * static_cast<double>(categories.size()), H = 360, left = 70, right = 20, top = 40, bottom = 70;
  double vmax = 0;
  for (const auto& s : series) {
    if (s.values.size() != categories.size()) throw std::invalid_argument("bar_chart: series length differs from categories");
    for (const auto& v : s.values) {
      if (v) vmax = std::max(vmax, *v);
    }
  }
  if (vmax <= 0) vmax = 1;
  const double ph = H - top - bottom, pw = W - left - right;
  const double group = pw / static_cast<double>(categories.size());
  const double bw = group * 0.8 / static_cast<double>(series.size());
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title) << "</text>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = vmax * t / 4.0, y = top + ph - ph * t / 4.0;
    o << "<line x1=\"" << left << "\" x2=\"" << W - right << "\" y1=\"" << y << "\" y2=\"" << y << "\" stroke=\"#ddd\"/>\n";
    o << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << tick(v) << "</text>\n";
  }
  if (!y_label.empty()) {
    o << "<text transform=\"translate(16," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << escape(y_label) << "</text>\n";
  }
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const double gx = left + group * static_cast<double>(c) + group * 0.1;
    for (std::size_t s = 0; s < series.size(); ++s) {
      const auto& v = series[s].values[c];
      if (!v) continue;
      const double h = ph * std::max(0.0, *v) / vmax;
      o << "<rect x=\"" << gx + bw * static_cast<double>(s) << "\" y=\"" << top + ph - h << "\" width=\"" << bw * 0.95 << "\" height=\"" << h
        << "\" fill=\"" << palette()[s % palette().size()] << "\"><title>" << escape(series[s].name) << ": " << *v << "</title></rect>\n";
    }
    o << "<text x=\"" << gx + group * 0.4 << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">" << escape(categories[c]) << "</text>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const double x = left + 120.0 * static_cast<double>(s), y = H - 22;
    o << "<rect x=\"" << x << "\" y=\"" << y - 9 << "\" width=\"10\" height=\"10\" fill=\"" << palette()[s % palette().size()] << "\"/>\n";
    o << "<text x=\"" << x + 14 << "\" y=\"" << y << "\">" << escape(series[s].name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

/// Projection of centered rows onto the top two principal axes.
inline Eigen::MatrixXd pca2(const Eigen::MatrixXd& x) {
  if (x.rows() < 1) throw std::invalid_argument("pca2: no rows");
  const Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(c, Eigen::ComputeThinV);
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(x.cols(), 2);
  const Eigen::Index k = std::min<Eigen::Index>(2, svd.matrixV().cols());
  v.leftCols(k) = svd.matrixV().leftCols(k);
  // Fix the sign so the largest-magnitude loading of each axis is positive.
  for (Eigen::Index j = 0; j < k; ++j) {
    Eigen::Index i;
    v.col(j).cwiseAbs().maxCoeff(&i);
    if (v(i, j) < 0) v.col(j) *= -1;
  }
  return c * v;
}

/// Points coloured by label.
inline std::string scatter(const std::string& title, const Eigen::MatrixXd& xy, const std::vector<int>& labels,
                           const std::vector<std::string>& legend = {}) {
  if (xy.cols() != 2 || static_cast<std::size_t>(xy.rows()) != labels.size()) throw std::invalid_argument("scatter: need n x 2 points and n labels");
  const double W = 520, H = 520, m = 40;
  const double x0 = xy.rows() ? xy.col(0).minCoeff() : 0, x1 = xy.rows() ? xy.col(0).maxCoeff() : 1;
  const double y0 = xy.rows() ? xy.col(1).minCoeff() : 0, y1 = xy.rows() ? xy.col(1).maxCoeff() : 1;
  auto sx = [&](double v) { return m + (W - 2 * m) * (x1 > x0 ? (v - x0) / (x1 - x0) : 0.5); };
  auto sy = [&](double v) { return H - m - (H - 2 * m) * (y1 > y0 ? (v - y0) / (y1 - y0) : 0.5); };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title) << "</text>\n";
  o << "<rect x=\"" << m << "\" y=\"" << m << "\" width=\"" << W - 2 * m << "\" height=\"" << H - 2 * m << "\" fill=\"none\" stroke=\"#999\"/>\n";
  for (Eigen::Index i = 0; i < xy.rows(); ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    o << "<circle cx=\"" << sx(xy(i, 0)) << "\" cy=\"" << sy(xy(i, 1)) << "\" r=\"2.5\" fill-opacity=\"0.7\" fill=\""
      << palette()[static_cast<std::size_t>(std::max(0, l)) % palette().size()] << "\"/>\n";
  }
  for (std::size_t k = 0; k < legend.size(); ++k) {
    const double y = m + 14.0 * static_cast<double>(k) + 10;
    o << "<circle cx=\"" << W - m - 80 << "\" cy=\"" << y - 4 << "\" r=\"4\" fill=\"" << palette()[k % palette().size()] << "\"/>\n";
    o << "<text x=\"" << W - m - 72 << "\" y=\"" << y << "\">" << escape(legend[k]) << "</text>\n";
  }
  o << "<text x=\"" << W / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">PC1</text>\n";
  o << "<text transform=\"translate(14," << H / 2 << ") rotate(-90)\" text-anchor=\"middle\">PC2</text>\n";
  o << "</svg>\n";
  return o.str();
}

}  // namespace vadet::plot
