#include "spikectl/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <utility>

#include "spikectl/experiment.hpp"

namespace spikectl {

namespace fs = std::filesystem;

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

std::vector<double> CsvTable::numbers(int col) const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    double v = std::numeric_limits<double>::quiet_NaN();
    if (col >= 0 && col < static_cast<int>(r.size()) && !r[col].empty()) {
      char* end = nullptr;
      const double p = std::strtod(r[col].c_str(), &end);
      if (end && *end == '\0') v = p;
    }
    out.push_back(v);
  }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> f;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      f.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  f.push_back(cur);
  return f;
}

}  // namespace

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw PlotError("missing artifact '" + path.string() + "'");
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw PlotError("empty artifact '" + path.string() + "'");
  t.header = split_csv_line(line);
  while (std::getline(in, line))
    if (!line.empty()) t.rows.push_back(split_csv_line(line));
  return t;
}

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v == 0.0 ? 0.0 : v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string o;
  for (char ch : s) {
    if (ch == '<') o += "&lt;";
    else if (ch == '>') o += "&gt;";
    else if (ch == '&') o += "&amp;";
    else o += ch;
  }
  return o;
}

std::vector<double> nice_ticks(double lo, double hi) {
  if (!(hi > lo)) return {lo};
  const double raw = (hi - lo) / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0})
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  std::vector<double> t;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * step; v += step) t.push_back(std::abs(v) < 1e-12 * step ? 0.0 : v);
  return t;
}

std::pair<double, double> finite_range(const std::vector<std::vector<double>>& series) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : series)
    for (double v : s)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  if (!std::isfinite(lo)) return {0.0, 1.0};
  if (hi - lo < 1e-12 * std::max(1.0, std::abs(hi))) {
    const double pad = std::max(1e-3, 0.1 * std::abs(hi));
    return {lo - pad, hi + pad};
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

// One axes box inside an SVG document.
class Panel {
 public:
  Panel(double x, double y, double w, double h, std::pair<double, double> xr, std::pair<double, double> yr,
        bool log_x = false)
      : x_(x), y_(y), w_(w), h_(h), xr_(xr), yr_(yr), log_x_(log_x) {
    if (log_x_) {
      xr_.first = std::log10(xr.first);
      xr_.second = std::log10(xr.second);
    }
    if (!(xr_.second > xr_.first)) xr_.second = xr_.first + 1.0;
    if (!(yr_.second > yr_.first)) yr_.second = yr_.first + 1.0;
  }

  double px(double v) const {
    const double u = log_x_ ? std::log10(v) : v;
    return x_ + (u - xr_.first) / (xr_.second - xr_.first) * w_;
  }
  double py(double v) const { return y_ + h_ - (v - yr_.first) / (yr_.second - yr_.first) * h_; }

  void frame(std::ostringstream& o, const std::string& title, const std::string& xlabel, const std::string& ylabel,
             const std::vector<double>& xticks_override = {}) const {
    o << "<rect x=\"" << fmt(x_) << "\" y=\"" << fmt(y_) << "\" width=\"" << fmt(w_) << "\" height=\"" << fmt(h_)
      << "\" fill=\"none\" stroke=\"#333\"/>\n";
    std::vector<double> xt = xticks_override;
    if (xt.empty()) {
      if (log_x_) {
        for (int e = static_cast<int>(std::floor(xr_.first)); e <= static_cast<int>(std::ceil(xr_.second)); ++e)
          if (e >= xr_.first - 1e-9 && e <= xr_.second + 1e-9) xt.push_back(std::pow(10.0, e));
      } else {
        xt = nice_ticks(xr_.first, xr_.second);
      }
    }
    for (double t : xt) {
      const double X = px(t);
      if (X < x_ - 0.5 || X > x_ + w_ + 0.5) continue;
      o << "<line x1=\"" << fmt(X) << "\" y1=\"" << fmt(y_ + h_) << "\" x2=\"" << fmt(X) << "\" y2=\""
        << fmt(y_ + h_ + 4) << "\" stroke=\"#333\"/>\n";
      o << "<text x=\"" << fmt(X) << "\" y=\"" << fmt(y_ + h_ + 16) << "\" text-anchor=\"middle\">" << label(t)
        << "</text>\n";
    }
    for (double t : nice_ticks(yr_.first, yr_.second)) {
      const double Y = py(t);
      o << "<line x1=\"" << fmt(x_ - 4) << "\" y1=\"" << fmt(Y) << "\" x2=\"" << fmt(x_) << "\" y2=\"" << fmt(Y)
        << "\" stroke=\"#333\"/>\n";
      o << "<text x=\"" << fmt(x_ - 6) << "\" y=\"" << fmt(Y + 4) << "\" text-anchor=\"end\">" << label(t)
        << "</text>\n";
    }
    o << "<text x=\"" << fmt(x_ + w_ / 2) << "\" y=\"" << fmt(y_ - 8) << "\" text-anchor=\"middle\" font-weight=\"bold\">"
      << escape(title) << "</text>\n";
    o << "<text x=\"" << fmt(x_ + w_ / 2) << "\" y=\"" << fmt(y_ + h_ + 34) << "\" text-anchor=\"middle\">"
      << escape(xlabel) << "</text>\n";
    o << "<text transform=\"translate(" << fmt(x_ - 52) << "," << fmt(y_ + h_ / 2)
      << ") rotate(-90)\" text-anchor=\"middle\">" << escape(ylabel) << "</text>\n";
  }

  // Polyline, decimated to at most ~4000 vertices; NaN breaks the line.
  void line(std::ostringstream& o, const std::vector<double>& xs, const std::vector<double>& ys,
            const std::string& color, bool markers = false) const {
    const std::size_t n = std::min(xs.size(), ys.size());
    const std::size_t stride = std::max<std::size_t>(1, n / 4000);
    std::string d;
    bool pen = false;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; i += stride) idx.push_back(i);
    if (n > 0 && idx.back() != n - 1) idx.push_back(n - 1);
    for (std::size_t i : idx) {
      if (!std::isfinite(xs[i]) || !std::isfinite(ys[i]) || (log_x_ && !(xs[i] > 0.0))) {
        pen = false;
        continue;
      }
      d += (pen ? "L" : "M") + fmt(px(xs[i])) + " " + fmt(py(ys[i])) + " ";
      pen = true;
      if (markers)
        o << "<circle cx=\"" << fmt(px(xs[i])) << "\" cy=\"" << fmt(py(ys[i])) << "\" r=\"3\" fill=\"" << color
          << "\"/>\n";
    }
    if (!d.empty())
      o << "<path d=\"" << d << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
  }

  void hline(std::ostringstream& o, double v, const std::string& color) const {
    o << "<line x1=\"" << fmt(x_) << "\" y1=\"" << fmt(py(v)) << "\" x2=\"" << fmt(x_ + w_) << "\" y2=\""
      << fmt(py(v)) << "\" stroke=\"" << color << "\" stroke-dasharray=\"4 3\"/>\n";
  }

  double x() const { return x_; }
  double y() const { return y_; }
  double w() const { return w_; }
  double h() const { return h_; }

 private:
  double x_, y_, w_, h_;
  std::pair<double, double> xr_, yr_;
  bool log_x_;
};

std::string svg_open(int w, int h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) + "\" height=\"" +
         std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) + " " + std::to_string(h) +
         "\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

void legend(std::ostringstream& o, const Panel& p, const std::vector<std::pair<std::string, std::string>>& items) {
  double y = p.y() + 14;
  for (const auto& [name, color] : items) {
    o << "<line x1=\"" << fmt(p.x() + p.w() - 90) << "\" y1=\"" << fmt(y - 4) << "\" x2=\"" << fmt(p.x() + p.w() - 72)
      << "\" y2=\"" << fmt(y - 4) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << fmt(p.x() + p.w() - 68) << "\" y=\"" << fmt(y) << "\">" << escape(name) << "</text>\n";
    y += 14;
  }
}

fs::path write_svg(const fs::path& path, const std::string& body) {
  write_file_atomic(path, body + "</svg>\n");
  return path;
}

}  // namespace

std::vector<fs::path> render_run_plots(const fs::path& dir, const fs::path& out) {
  const CsvTable trace = read_csv(dir / "trace.csv");
  const CsvTable raster = read_csv(dir / "raster.csv");
  const int ct = trace.column("t"), cx = trace.column("x"), cu = trace.column("u");
  if (ct < 0 || cx < 0 || cu < 0) throw PlotError("trace.csv lacks the t, x or u column");
  std::vector<int> thetas;
  for (int i = 1; trace.column("theta_" + std::to_string(i)) >= 0; ++i)
    thetas.push_back(trace.column("theta_" + std::to_string(i)));
  const std::vector<double> t = trace.numbers(ct), x = trace.numbers(cx), u = trace.numbers(cu);
  const double t_end = t.empty() ? 1.0 : std::max(1e-9, t.back());
  std::vector<fs::path> files;

  // States: angles and cart position.
  {
    std::vector<std::vector<double>> ang;
    for (int c : thetas) ang.push_back(trace.numbers(c));
    std::ostringstream o;
    o << svg_open(720, 520);
    Panel pa(80, 30, 600, 190, {0.0, t_end}, finite_range(ang));
    pa.frame(o, "Link angles", "t (s)", "theta (rad)");
    std::vector<std::pair<std::string, std::string>> items;
    for (std::size_t i = 0; i < ang.size(); ++i) {
      pa.line(o, t, ang[i], kPalette[i % 8]);
      items.push_back({"theta_" + std::to_string(i + 1), kPalette[i % 8]});
    }
    legend(o, pa, items);
    Panel px(80, 290, 600, 190, {0.0, t_end}, finite_range({x}));
    px.frame(o, "Cart position", "t (s)", "x (m)");
    px.line(o, t, x, kPalette[0]);
    files.push_back(write_svg(out / "states.svg", o.str()));
  }

  // Control over the spike raster.
  {
    const std::vector<double> st = raster.numbers(raster.column("t"));
    const std::vector<double> sn = raster.numbers(raster.column("neuron_id"));
    double max_id = 0.0;
    for (double v : sn)
      if (std::isfinite(v)) max_id = std::max(max_id, v);
    std::ostringstream o;
    o << svg_open(720, 520);
    Panel pu(80, 30, 600, 190, {0.0, t_end}, finite_range({u}));
    pu.frame(o, "Control force", "t (s)", "u (N)");
    pu.line(o, t, u, kPalette[1]);
    Panel pr(80, 290, 600, 190, {0.0, t_end}, {-0.5, max_id + 0.5});
    pr.frame(o, "Spike raster", "t (s)", "neuron");
    // One tick per occupied pixel cell keeps the file size bounded.
    std::set<std::pair<int, int>> cells;
    for (std::size_t i = 0; i < std::min(st.size(), sn.size()); ++i)
      if (std::isfinite(st[i]) && std::isfinite(sn[i]))
        cells.insert({static_cast<int>(std::lround(pr.px(st[i]))), static_cast<int>(std::lround(pr.py(sn[i])))});
    if (!cells.empty()) {
      const double tick = std::clamp(pr.h() / (max_id + 1.0) * 0.8, 1.0, 8.0);
      std::string d;
      for (const auto& [X, Y] : cells)
        d += "M" + std::to_string(X) + " " + fmt(Y - tick / 2) + "v" + fmt(tick);
      o << "<path d=\"" << d << "\" stroke=\"#222\" stroke-width=\"1\"/>\n";
    }
    files.push_back(write_svg(out / "control.svg", o.str()));
  }

  // Phase portrait: angles against cart position.
  {
    std::vector<std::vector<double>> ang;
    for (int c : thetas) ang.push_back(trace.numbers(c));
    std::ostringstream o;
    o << svg_open(560, 480);
    Panel pp(80, 30, 440, 390, finite_range({x}), finite_range(ang));
    pp.frame(o, "Phase portrait", "x (m)", "theta (rad)");
    std::vector<std::pair<std::string, std::string>> items;
    for (std::size_t i = 0; i < ang.size(); ++i) {
      pp.line(o, x, ang[i], kPalette[i % 8]);
      items.push_back({"theta_" + std::to_string(i + 1), kPalette[i % 8]});
    }
    legend(o, pp, items);
    files.push_back(write_svg(out / "phase.svg", o.str()));
  }
  return files;
}

std::vector<fs::path> render_table_plots(const fs::path& csv, const fs::path& out) {
  const CsvTable table = read_csv(csv);
  if (table.header.empty()) throw PlotError("malformed table '" + csv.string() + "'");
  const std::string key = table.header[0];
  std::vector<double> xs = table.numbers(0);
  const bool numeric = !xs.empty() && std::all_of(xs.begin(), xs.end(), [](double v) { return std::isfinite(v); });
  std::vector<double> ticks;
  if (!numeric)
    for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = static_cast<double>(i);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : xs) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const bool log_x = numeric && lo > 0.0 && hi / lo > 10.0;
  if (xs.size() <= 12) ticks = xs;
  std::pair<double, double> xr = log_x ? std::pair{lo / 1.3, hi * 1.3} : std::pair{lo - 0.05 * (hi - lo + 1), hi + 0.05 * (hi - lo + 1)};

  std::vector<fs::path> files;
  for (const auto& metric : metric_columns()) {
    const int cm = table.column(metric + "_mean"), cs = table.column(metric + "_std");
    if (cm < 0) continue;
    const std::vector<double> m = table.numbers(cm);
    std::vector<double> s = cs >= 0 ? table.numbers(cs) : std::vector<double>(m.size(), 0.0);
    std::vector<double> up(m.size()), dn(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double e = std::isfinite(s[i]) ? s[i] : 0.0;
      up[i] = m[i] + e;
      dn[i] = m[i] - e;
    }
    std::ostringstream o;
    o << svg_open(640, 420);
    Panel p(90, 30, 510, 320, xr, finite_range({m, up, dn}), log_x);
    p.frame(o, metric + " vs " + key, key + (log_x ? " (log scale)" : ""), metric, ticks);
    for (std::size_t i = 0; i < m.size(); ++i)
      if (std::isfinite(up[i]) && std::isfinite(dn[i]) && up[i] != dn[i])
        o << "<line x1=\"" << fmt(p.px(xs[i])) << "\" y1=\"" << fmt(p.py(up[i])) << "\" x2=\"" << fmt(p.px(xs[i]))
          << "\" y2=\"" << fmt(p.py(dn[i])) << "\" stroke=\"#999\"/>\n";
    p.line(o, xs, m, kPalette[0], true);
    if (!numeric)
      for (std::size_t i = 0; i < xs.size(); ++i)
        o << "<text x=\"" << fmt(p.px(xs[i])) << "\" y=\"" << fmt(p.y() + p.h() + 28) << "\" text-anchor=\"middle\">"
          << escape(table.rows[i][0]) << "</text>\n";
    files.push_back(write_svg(out / ("metric_" + metric + ".svg"), o.str()));
  }
  if (files.empty()) throw PlotError("no metric columns in '" + csv.string() + "'");
  return files;
}

std::vector<fs::path> render_plots(const fs::path& dir, const fs::path& out) {
  if (!fs::is_directory(dir)) throw PlotError("missing artifact directory '" + dir.string() + "'");
  if (fs::exists(dir / "sweep.csv")) return render_table_plots(dir / "sweep.csv", out);
  if (fs::exists(dir / "compare.csv")) return render_table_plots(dir / "compare.csv", out);
  if (fs::exists(dir / "trace.csv")) return render_run_plots(dir, out);
  std::vector<fs::path> seeds;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && e.path().filename().string().rfind("seed_", 0) == 0 && fs::exists(e.path() / "trace.csv"))
      seeds.push_back(e.path());
  if (seeds.empty()) throw PlotError("no trace.csv, sweep.csv or compare.csv under '" + dir.string() + "'");
  std::sort(seeds.begin(), seeds.end());
  std::vector<fs::path> files;
  for (const auto& s : seeds) {
    auto f = render_run_plots(s, out / s.filename());
    files.insert(files.end(), f.begin(), f.end());
  }
  return files;
}

}  // namespace spikectl
