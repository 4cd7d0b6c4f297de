#include "rework/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace rework::svg {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 55;

std::string escape(const std::string& s) {
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

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

struct Frame {
  double x0, x1, y0, y1;

  double px(double x) const { return kLeft + (x1 > x0 ? (x - x0) / (x1 - x0) : 0.5) * (kWidth - kLeft - kRight); }
  double py(double y) const {
    return kHeight - kBottom - (y1 > y0 ? (y - y0) / (y1 - y0) : 0.5) * (kHeight - kTop - kBottom);
  }
};

class Doc {
 public:
  explicit Doc(const Labels& labels) {
    out_ << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
         << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
         << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
         << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n"
         << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(labels.title)
         << "</text>\n"
         << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">" << escape(labels.x)
         << "</text>\n"
         << "<text x=\"16\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << kHeight / 2
         << ")\">" << escape(labels.y) << "</text>\n";
  }

  std::ostringstream& raw() { return out_; }

  void axes(const Frame& f) {
    const double bx = kLeft, by = kHeight - kBottom;
    out_ << "<line x1=\"" << bx << "\" y1=\"" << by << "\" x2=\"" << kWidth - kRight << "\" y2=\"" << by
         << "\" stroke=\"black\"/>\n"
         << "<line x1=\"" << bx << "\" y1=\"" << kTop << "\" x2=\"" << bx << "\" y2=\"" << by << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
      const double xv = f.x0 + (f.x1 - f.x0) * k / 4.0;
      const double yv = f.y0 + (f.y1 - f.y0) * k / 4.0;
      out_ << "<text x=\"" << num(f.px(xv)) << "\" y=\"" << by + 16 << "\" text-anchor=\"middle\">" << tick(xv)
           << "</text>\n"
           << "<text x=\"" << bx - 6 << "\" y=\"" << num(f.py(yv) + 4) << "\" text-anchor=\"end\">" << tick(yv)
           << "</text>\n";
    }
  }

  void placeholder() {
    out_ << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" fill=\"gray\">no data</text>\n";
  }

  std::string finish() {
    out_ << "</svg>\n";
    return out_.str();
  }

 private:
  std::ostringstream out_;
};

std::pair<double, double> finite_range(std::initializer_list<const Eigen::VectorXd*> series) {
  double lo = INFINITY, hi = -INFINITY;
  for (const auto* s : series)
    for (Eigen::Index i = 0; i < s->size(); ++i)
      if (std::isfinite((*s)[i])) {
        lo = std::min(lo, (*s)[i]);
        hi = std::max(hi, (*s)[i]);
      }
  if (!(hi >= lo)) return {0.0, 1.0};
  if (hi == lo) return {lo - 0.5, hi + 0.5};
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

void cells(Doc& doc, const Frame& f, const std::vector<double>& xs, const std::vector<double>& ys,
           const Eigen::MatrixXd& values) {
  double lo = INFINITY, hi = -INFINITY;
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (std::isfinite(values.data()[i])) {
      lo = std::min(lo, values.data()[i]);
      hi = std::max(hi, values.data()[i]);
    }
  auto edge = [](const std::vector<double>& v, std::size_t i, bool upper) {
    if (v.size() == 1) return v[0] + (upper ? 0.5 : -0.5);
    if (upper) return i + 1 < v.size() ? 0.5 * (v[i] + v[i + 1]) : v[i] + 0.5 * (v[i] - v[i - 1]);
    return i > 0 ? 0.5 * (v[i - 1] + v[i]) : v[i] - 0.5 * (v[i + 1] - v[i]);
  };
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = 0; j < ys.size(); ++j) {
      const double v = values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      const double t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
      const double xa = f.px(edge(xs, i, false)), xb = f.px(edge(xs, i, true));
      const double ya = f.py(edge(ys, j, true)), yb = f.py(edge(ys, j, false));
      doc.raw() << "<rect x=\"" << num(xa) << "\" y=\"" << num(ya) << "\" width=\"" << num(xb - xa) << "\" height=\""
                << num(yb - ya) << "\" fill=\"" << (std::isfinite(v) ? ramp_color(t) : "#cccccc") << "\"/>\n";
    }
}

Frame grid_frame(const std::vector<double>& xs, const std::vector<double>& ys) {
  auto span = [](const std::vector<double>& v) {
    if (v.size() == 1) return std::pair{v[0] - 0.5, v[0] + 0.5};
    return std::pair{v.front() - 0.5 * (v[1] - v[0]), v.back() + 0.5 * (v.back() - v[v.size() - 2])};
  };
  const auto [x0, x1] = span(xs);
  const auto [y0, y1] = span(ys);
  return Frame{x0, x1, y0, y1};
}

}  // namespace

std::string ramp_color(double t) {
  t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0);
  // light yellow to dark blue; every channel is monotone in t
  const int r = static_cast<int>(std::lround(255 + (8 - 255) * t));
  const int g = static_cast<int>(std::lround(247 + (48 - 247) * t));
  const int b = static_cast<int>(std::lround(188 + (107 - 188) * t));
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

std::string line_band(const Labels& labels, const std::vector<double>& x, const Eigen::VectorXd& estimate,
                      const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
  Doc doc(labels);
  const auto n = static_cast<Eigen::Index>(x.size());
  if (x.empty() || estimate.size() != n || lower.size() != n || upper.size() != n) {
    doc.placeholder();
    return doc.finish();
  }
  const auto [y0, y1] = finite_range({&estimate, &lower, &upper});
  const Frame f{*std::min_element(x.begin(), x.end()), *std::max_element(x.begin(), x.end()), y0, y1};
  doc.axes(f);
  auto& o = doc.raw();
  o << "<polygon fill=\"#9ecae1\" fill-opacity=\"0.6\" stroke=\"none\" points=\"";
  for (Eigen::Index i = 0; i < n; ++i) o << num(f.px(x[static_cast<std::size_t>(i)])) << ',' << num(f.py(upper[i])) << ' ';
  for (Eigen::Index i = n - 1; i >= 0; --i) o << num(f.px(x[static_cast<std::size_t>(i)])) << ',' << num(f.py(lower[i])) << ' ';
  o << "\"/>\n<polyline fill=\"none\" stroke=\"#08519c\" stroke-width=\"2\" points=\"";
  for (Eigen::Index i = 0; i < n; ++i) o << num(f.px(x[static_cast<std::size_t>(i)])) << ',' << num(f.py(estimate[i])) << ' ';
  o << "\"/>\n";
  if (y0 < 0.0 && y1 > 0.0)
    o << "<line x1=\"" << kLeft << "\" y1=\"" << num(f.py(0)) << "\" x2=\"" << kWidth - kRight << "\" y2=\""
      << num(f.py(0)) << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  return doc.finish();
}

std::string heatmap(const Labels& labels, const std::vector<double>& xs, const std::vector<double>& ys,
                    const Eigen::MatrixXd& values) {
  Doc doc(labels);
  if (xs.empty() || ys.empty() || values.rows() != static_cast<Eigen::Index>(xs.size()) ||
      values.cols() != static_cast<Eigen::Index>(ys.size())) {
    doc.placeholder();
    return doc.finish();
  }
  const Frame f = grid_frame(xs, ys);
  cells(doc, f, xs, ys, values);
  doc.axes(f);
  return doc.finish();
}

std::string histograms(const Labels& labels, const std::vector<double>& edges, const std::vector<std::size_t>& treated,
                       const std::vector<std::size_t>& control, const std::vector<double>& markers) {
  Doc doc(labels);
  const std::size_t bins = treated.size();
  if (bins == 0 || control.size() != bins || edges.size() != bins + 1) {
    doc.placeholder();
    return doc.finish();
  }
  std::size_t top = 1;
  for (std::size_t b = 0; b < bins; ++b) top = std::max({top, treated[b], control[b]});
  const Frame f{edges.front(), edges.back(), 0.0, static_cast<double>(top)};
  doc.axes(f);
  auto& o = doc.raw();
  for (std::size_t b = 0; b < bins; ++b) {
    const double xa = f.px(edges[b]), xb = f.px(edges[b + 1]);
    const double mid = 0.5 * (xa + xb);
    o << "<rect x=\"" << num(xa) << "\" y=\"" << num(f.py(static_cast<double>(control[b]))) << "\" width=\""
      << num(mid - xa) << "\" height=\"" << num(f.py(0) - f.py(static_cast<double>(control[b])))
      << "\" fill=\"#fdae6b\"/>\n"
      << "<rect x=\"" << num(mid) << "\" y=\"" << num(f.py(static_cast<double>(treated[b]))) << "\" width=\""
      << num(xb - mid) << "\" height=\"" << num(f.py(0) - f.py(static_cast<double>(treated[b])))
      << "\" fill=\"#3182bd\"/>\n";
  }
  for (double m : markers)
    o << "<line x1=\"" << num(f.px(m)) << "\" y1=\"" << kTop << "\" x2=\"" << num(f.px(m)) << "\" y2=\""
      << kHeight - kBottom << "\" stroke=\"crimson\" stroke-dasharray=\"5 3\"/>\n";
  o << "<rect x=\"" << kWidth - 150 << "\" y=\"" << kTop << "\" width=\"10\" height=\"10\" fill=\"#3182bd\"/>"
    << "<text x=\"" << kWidth - 135 << "\" y=\"" << kTop + 9 << "\">treatment</text>\n"
    << "<rect x=\"" << kWidth - 150 << "\" y=\"" << kTop + 16 << "\" width=\"10\" height=\"10\" fill=\"#fdae6b\"/>"
    << "<text x=\"" << kWidth - 135 << "\" y=\"" << kTop + 25 << "\">no treatment</text>\n";
  return doc.finish();
}

std::string contour(const Labels& labels, const std::vector<double>& xs, const std::vector<double>& ys,
                    const Eigen::MatrixXd& values, const std::vector<double>& levels) {
  Doc doc(labels);
  if (xs.size() < 2 || ys.size() < 2 || values.rows() != static_cast<Eigen::Index>(xs.size()) ||
      values.cols() != static_cast<Eigen::Index>(ys.size())) {
    doc.placeholder();
    return doc.finish();
  }
  const Frame f = grid_frame(xs, ys);
  cells(doc, f, xs, ys, values);
  auto& o = doc.raw();
  for (double level : levels) {
    std::ostringstream seg;
    for (std::size_t i = 0; i + 1 < xs.size(); ++i)
      for (std::size_t j = 0; j + 1 < ys.size(); ++j) {
        // corners counter-clockwise from (i, j)
        const double cx[4] = {xs[i], xs[i + 1], xs[i + 1], xs[i]};
        const double cy[4] = {ys[j], ys[j], ys[j + 1], ys[j + 1]};
        const double v[4] = {values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)),
                             values(static_cast<Eigen::Index>(i + 1), static_cast<Eigen::Index>(j)),
                             values(static_cast<Eigen::Index>(i + 1), static_cast<Eigen::Index>(j + 1)),
                             values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j + 1))};
        std::vector<std::pair<double, double>> pts;
        for (int e = 0; e < 4; ++e) {
          const int a = e, b = (e + 1) % 4;
          if ((v[a] < level) != (v[b] < level)) {
            const double t = (level - v[a]) / (v[b] - v[a]);
            pts.emplace_back(cx[a] + t * (cx[b] - cx[a]), cy[a] + t * (cy[b] - cy[a]));
          }
        }
        for (std::size_t k = 0; k + 1 < pts.size(); k += 2)
          seg << 'M' << num(f.px(pts[k].first)) << ' ' << num(f.py(pts[k].second)) << 'L'
            << num(f.px(pts[k + 1].first)) << ' ' << num(f.py(pts[k + 1].second)) << ' ';
      }
    if (!seg.str().empty())
      o << "<path fill=\"none\" stroke=\"black\" stroke-width=\"1.2\" d=\"" << seg.str() << "\"/>\n";
  }
  doc.axes(f);
  return doc.finish();
}

}  // namespace rework::svg
