#include "hierwalk/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace hierwalk {

namespace {

namespace fs = std::filesystem;

struct Series {
  std::string label;
  std::string color;
  // x -> (mean, min, max)
  std::vector<std::array<double, 4>> points;
};

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

struct Axes {
  double x0, x1, y0, y1;       // data ranges
  double px0, px1, py0, py1;   // pixel box
  double sx(double x) const { return px0 + (x - x0) / (x1 - x0) * (px1 - px0); }
  double sy(double y) const { return py1 - (y - y0) / (y1 - y0) * (py1 - py0); }
};

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

void write_svg(const fs::path& path, const std::string& title, const std::string& x_label,
               const std::vector<Series>& series, const std::vector<std::array<double, 2>>& bound,
               const std::vector<double>& x_ticks) {
  Axes ax;
  ax.px0 = 70;
  ax.px1 = 620;
  ax.py0 = 40;
  ax.py1 = 380;
  ax.x0 = 1e300;
  ax.x1 = -1e300;
  for (const Series& s : series)
    for (const auto& p : s.points) {
      ax.x0 = std::min(ax.x0, p[0]);
      ax.x1 = std::max(ax.x1, p[0]);
    }
  for (const auto& p : bound) {
    ax.x0 = std::min(ax.x0, p[0]);
    ax.x1 = std::max(ax.x1, p[0]);
  }
  if (ax.x1 <= ax.x0) {
    ax.x0 -= 1.0;
    ax.x1 += 1.0;
  }
  ax.y0 = 0.4;
  ax.y1 = 1.02;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"470\" "
        "viewBox=\"0 0 640 470\">\n";
  os << "<rect width=\"640\" height=\"470\" fill=\"white\"/>\n";
  os << "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-size=\"16\" "
        "font-family=\"sans-serif\">"
     << title << "</text>\n";
  // frame
  os << "<rect x=\"" << ax.px0 << "\" y=\"" << ax.py0 << "\" width=\"" << ax.px1 - ax.px0
     << "\" height=\"" << ax.py1 - ax.py0 << "\" fill=\"none\" stroke=\"#444\"/>\n";
  // y ticks
  for (double y = 0.4; y <= 1.001; y += 0.1) {
    os << "<line x1=\"" << ax.px0 - 4 << "\" y1=\"" << ax.sy(y) << "\" x2=\"" << ax.px1
       << "\" y2=\"" << ax.sy(y) << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << ax.px0 - 8 << "\" y=\"" << ax.sy(y) + 4
       << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << fmt(y)
       << "</text>\n";
  }
  for (double x : x_ticks) {
    os << "<line x1=\"" << ax.sx(x) << "\" y1=\"" << ax.py1 << "\" x2=\"" << ax.sx(x) << "\" y2=\""
       << ax.py1 + 4 << "\" stroke=\"#444\"/>\n";
    os << "<text x=\"" << ax.sx(x) << "\" y=\"" << ax.py1 + 18
       << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" << fmt(x)
       << "</text>\n";
  }
  os << "<text x=\"" << (ax.px0 + ax.px1) / 2 << "\" y=\"" << ax.py1 + 38
     << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">" << x_label
     << "</text>\n";
  os << "<text x=\"18\" y=\"" << (ax.py0 + ax.py1) / 2
     << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\" "
        "transform=\"rotate(-90 18 "
     << (ax.py0 + ax.py1) / 2 << ")\">test accuracy</text>\n";

  // bound line
  if (!bound.empty()) {
    os << "<polyline fill=\"none\" stroke=\"#555\" stroke-dasharray=\"6 4\" points=\"";
    for (const auto& p : bound) os << ax.sx(p[0]) << "," << ax.sy(std::min(p[1], ax.y1)) << " ";
    os << "\"/>\n";
  }

  for (const Series& s : series) {
    if (s.points.size() > 1) {
      // min/max band over runs
      std::ostringstream band;
      for (const auto& p : s.points) band << ax.sx(p[0]) << "," << ax.sy(p[3]) << " ";
      for (auto it = s.points.rbegin(); it != s.points.rend(); ++it)
        band << ax.sx((*it)[0]) << "," << ax.sy((*it)[2]) << " ";
      os << "<polygon points=\"" << band.str() << "\" fill=\"" << s.color
         << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
    }
    os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\" points=\"";
    for (const auto& p : s.points) os << ax.sx(p[0]) << "," << ax.sy(p[1]) << " ";
    os << "\"/>\n";
    for (const auto& p : s.points)
      os << "<circle cx=\"" << ax.sx(p[0]) << "\" cy=\"" << ax.sy(p[1]) << "\" r=\"3.5\" fill=\""
         << s.color << "\"/>\n";
  }

  // legend
  double ly = 415;
  double lx = ax.px0;
  for (const Series& s : series) {
    os << "<line x1=\"" << lx << "\" y1=\"" << ly << "\" x2=\"" << lx + 22 << "\" y2=\"" << ly
       << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << lx + 27 << "\" y=\"" << ly + 4
       << "\" font-size=\"12\" font-family=\"sans-serif\">" << s.label << "</text>\n";
    lx += 27 + 8.5 * s.label.size() + 24;
  }
  if (!bound.empty()) {
    os << "<line x1=\"" << lx << "\" y1=\"" << ly << "\" x2=\"" << lx + 22 << "\" y2=\"" << ly
       << "\" stroke=\"#555\" stroke-dasharray=\"6 4\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << lx + 27 << "\" y=\"" << ly + 4
       << "\" font-size=\"12\" font-family=\"sans-serif\">bound 1/2 + L/2n</text>\n";
  }
  os << "</svg>\n";

  std::ofstream f(path);
  if (!f) throw FormatError("cannot open '" + path.string() + "' for writing");
  f << os.str();
}

struct Key {
  TopologyKind topology;
  PolicyMode policy;
  bool operator<(const Key& o) const {
    return std::make_pair(static_cast<int>(topology), static_cast<int>(policy)) <
           std::make_pair(static_cast<int>(o.topology), static_cast<int>(o.policy));
  }
};

std::string key_label(const Key& k) {
  return std::string(to_string(k.topology)) + " + " + to_string(k.policy);
}

}  // namespace

std::vector<fs::path> plot_results(const std::string& csv_path, const fs::path& out_dir) {
  std::vector<ResultRow> rows = read_results_csv(csv_path);
  if (rows.empty()) throw FormatError(csv_path + ": no data rows to plot");
  std::error_code ec;
  fs::create_directories(out_dir, ec);

  // Figure 1: accuracy vs walk length at the largest k_eval.
  int k_max = 0;
  for (const auto& r : rows) k_max = std::max(k_max, r.k_eval);
  std::map<Key, std::map<int, std::vector<double>>> by_wl;
  std::map<int, double> bound_by_wl;
  for (const auto& r : rows) {
    if (r.k_eval != k_max) continue;
    by_wl[{r.topology, r.policy}][r.walk_len].push_back(r.test_accuracy);
    bound_by_wl[r.walk_len] = r.bound;
  }
  auto build_series = [](const std::map<Key, std::map<int, std::vector<double>>>& grouped) {
    std::vector<Series> out;
    int color = 0;
    for (const auto& [key, pts] : grouped) {
      Series s;
      s.label = key_label(key);
      s.color = kPalette[color++ % 6];
      for (const auto& [x, accs] : pts) {
        double mean = 0.0, lo = 1e300, hi = -1e300;
        for (double a : accs) {
          mean += a;
          lo = std::min(lo, a);
          hi = std::max(hi, a);
        }
        mean /= static_cast<double>(accs.size());
        s.points.push_back({static_cast<double>(x), mean, lo, hi});
      }
      out.push_back(std::move(s));
    }
    return out;
  };

  std::vector<fs::path> written;
  {
    std::vector<std::array<double, 2>> bound;
    std::vector<double> ticks;
    for (const auto& [wl, b] : bound_by_wl) {
      bound.push_back({static_cast<double>(wl), b});
      ticks.push_back(wl);
    }
    fs::path p = out_dir / "accuracy_vs_walk_len.svg";
    write_svg(p, "PrefixSum accuracy vs walk length (k=" + std::to_string(k_max) + ")",
              "walk length", build_series(by_wl), bound, ticks);
    written.push_back(p);
  }

  // Figure 2: accuracy vs k_eval at the most frequent walk length.
  std::map<int, int> wl_counts;
  for (const auto& r : rows) wl_counts[r.walk_len]++;
  int wl_main = rows[0].walk_len;
  int best_count = 0;
  for (const auto& [wl, c] : wl_counts)
    if (c > best_count) {
      best_count = c;
      wl_main = wl;
    }
  std::map<Key, std::map<int, std::vector<double>>> by_k;
  double bound_main = 0.0;
  std::set<int> k_ticks;
  for (const auto& r : rows) {
    if (r.walk_len != wl_main) continue;
    by_k[{r.topology, r.policy}][r.k_eval].push_back(r.test_accuracy);
    bound_main = r.bound;
    k_ticks.insert(r.k_eval);
  }
  {
    std::vector<std::array<double, 2>> bound;
    std::vector<double> ticks;
    for (int k : k_ticks) {
      bound.push_back({static_cast<double>(k), bound_main});
      ticks.push_back(k);
    }
    fs::path p = out_dir / "accuracy_vs_k_eval.svg";
    write_svg(p, "PrefixSum accuracy vs walks per node (walk_len=" + std::to_string(wl_main) + ")",
              "walks per node at inference (k)", build_series(by_k), bound, ticks);
    written.push_back(p);
  }
  return written;
}

}  // namespace hierwalk
