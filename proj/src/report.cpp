#include "mmg/report.hpp"

#include "mmg/error.hpp"
#include "mmg/io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

namespace mmg {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double number(const std::string& s, std::string_view source, int line) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    fail(ErrorCode::ParseError, fmt::format("{} line {}: bad number '{}'", source, line, s));
  return v;
}

template <typename F>
void for_rows(std::string_view text, std::string_view source, std::size_t fields, F&& f) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    if (header) {
      header = false;
      continue;
    }
    auto cols = split_csv(line);
    if (cols.size() != fields)
      fail(ErrorCode::ParseError, fmt::format("{} line {}: expected {} fields, got {}", source, lineno, fields, cols.size()));
    f(cols, lineno);
  }
}

double pct(double baseline, double pretrain) {
  if (baseline == 0.0) fail(ErrorCode::InvalidArgument, "baseline error is zero");
  return (baseline - pretrain) / baseline * 100.0;
}

std::string esc(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Plot frame shared by both chart kinds.
struct Frame {
  double width = 640, height = 400;
  double left = 70, right = 20, top = 40, bottom = 60;
  double lo = 0, hi = 1;

  double y(double v) const { return top + (height - top - bottom) * (1.0 - (v - lo) / (hi - lo)); }
  double plot_w() const { return width - left - right; }
};

void nice_range(double& lo, double& hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
}

std::string frame_open(const Frame& f, std::string_view title, std::string_view xlabel, std::string_view ylabel) {
  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">{3}</text>\n",
      f.width, f.height, f.width / 2, esc(title));
  const double x0 = f.left, x1 = f.width - f.right, y0 = f.top, y1 = f.height - f.bottom;
  s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", x0, y0, y1);
  s += fmt::format("<line x1=\"{0}\" y1=\"{2}\" x2=\"{1}\" y2=\"{2}\" stroke=\"black\"/>\n", x0, x1, y1);
  for (int t = 0; t <= 4; ++t) {
    const double v = f.lo + (f.hi - f.lo) * t / 4.0;
    s += fmt::format(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{:.3g}</text>\n",
        x0 - 6, f.y(v) + 4, v);
    s += fmt::format("<line x1=\"{0}\" y1=\"{2}\" x2=\"{1}\" y2=\"{2}\" stroke=\"#ddd\"/>\n", x0, x1, f.y(v));
  }
  s += fmt::format(
      "<text x=\"16\" y=\"{0}\" transform=\"rotate(-90 16 {0})\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      "font-size=\"12\">{1}</text>\n",
      (y0 + y1) / 2, esc(ylabel));
  if (!xlabel.empty())
    s += fmt::format(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
        (x0 + x1) / 2, f.height - 12, esc(xlabel));
  return s;
}

constexpr const char* kColors[] = {"#9e9e9e", "#26a69a", "#5c6bc0", "#ef6c00", "#8d6e63", "#d81b60"};

}  // namespace

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = "trial,protocol,samples,MED_mean,MED_std,MIPE_mean,MIPE_std\n";
  for (const auto& r : rows)
    out += fmt::format("{},{},{},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.trial, r.protocol, r.samples, r.med_mean,
                       r.med_std, r.mipe_mean, r.mipe_std);
  return out;
}

std::vector<MetricsRow> parse_metrics_csv(std::string_view text, std::string_view source) {
  std::vector<MetricsRow> rows;
  for_rows(text, source, 7, [&](const std::vector<std::string>& c, int line) {
    rows.push_back({c[0], c[1], static_cast<int>(number(c[2], source, line)), number(c[3], source, line),
                    number(c[4], source, line), number(c[5], source, line), number(c[6], source, line)});
  });
  if (rows.empty()) fail(ErrorCode::EmptyInput, fmt::format("{} holds no metric rows", source));
  return rows;
}

std::vector<MetricsRow> read_metrics(const std::filesystem::path& path) {
  return parse_metrics_csv(read_file(path), path.string());
}

std::string per_sample_csv(const std::vector<SampleError>& rows) {
  std::string out = "id,split,med,mipe\n";
  for (const auto& r : rows) out += fmt::format("{},{},{:.17g},{:.17g}\n", r.id, r.split, r.med, r.mipe);
  return out;
}

std::vector<SampleError> parse_per_sample_csv(std::string_view text, std::string_view source) {
  std::vector<SampleError> rows;
  for_rows(text, source, 4, [&](const std::vector<std::string>& c, int line) {
    rows.push_back({c[0], c[1], number(c[2], source, line), number(c[3], source, line)});
  });
  if (rows.empty()) fail(ErrorCode::EmptyInput, fmt::format("{} holds no samples", source));
  return rows;
}

std::vector<SampleError> read_per_sample(const std::filesystem::path& path) {
  return parse_per_sample_csv(read_file(path), path.string());
}

std::vector<ImprovementRow> improvement_by_budget(const std::vector<MetricsRow>& pretrain,
                                                  const std::vector<MetricsRow>& baseline) {
  std::vector<ImprovementRow> out;
  for (const auto& p : pretrain) {
    const auto b = std::find_if(baseline.begin(), baseline.end(),
                                [&](const MetricsRow& r) { return r.trial == p.trial && r.samples == p.samples; });
    if (b == baseline.end()) continue;
    out.push_back({p.trial, p.samples, p.med_mean, b->med_mean, pct(b->med_mean, p.med_mean), p.mipe_mean,
                   b->mipe_mean, pct(b->mipe_mean, p.mipe_mean)});
  }
  if (out.empty()) fail(ErrorCode::EmptyInput, "no (trial, samples) pairs common to both metric sets");
  return out;
}

std::vector<ImprovementRow> improvement_by_trial(const std::vector<MetricsRow>& pretrain,
                                                 const std::vector<MetricsRow>& baseline) {
  const auto rows = improvement_by_budget(pretrain, baseline);
  std::vector<std::string> order;
  std::map<std::string, std::array<double, 5>> acc;  // sums of the four means, count
  for (const auto& r : rows) {
    if (!acc.count(r.trial)) order.push_back(r.trial);
    auto& a = acc[r.trial];
    a[0] += r.med_pretrain;
    a[1] += r.med_baseline;
    a[2] += r.mipe_pretrain;
    a[3] += r.mipe_baseline;
    a[4] += 1.0;
  }
  std::vector<ImprovementRow> out;
  for (const auto& t : order) {
    const auto& a = acc[t];
    const double mp = a[0] / a[4], mb = a[1] / a[4], ip = a[2] / a[4], ib = a[3] / a[4];
    out.push_back({t, -1, mp, mb, pct(mb, mp), ip, ib, pct(ib, ip)});
  }
  return out;
}

std::string improvement_csv(const std::vector<ImprovementRow>& rows) {
  std::string out = "trial,samples,MED_pretrain,MED_no_pretrain,MED_improvement,MIPE_pretrain,MIPE_no_pretrain,"
                    "MIPE_improvement\n";
  for (const auto& r : rows)
    out += fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.trial,
                       r.samples < 0 ? std::string("all") : std::to_string(r.samples), r.med_pretrain,
                       r.med_baseline, r.med_improvement, r.mipe_pretrain, r.mipe_baseline, r.mipe_improvement);
  return out;
}

std::string improvement_markdown(const std::vector<ImprovementRow>& rows) {
  std::string out =
      "| Trial | Samples | MED pretrain | MED no pretrain | MED improvement | MIPE pretrain | MIPE no pretrain | "
      "MIPE improvement |\n|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows)
    out += fmt::format("| {} | {} | {:.4f} | {:.4f} | {:.2f}% | {:.4f} | {:.4f} | {:.2f}% |\n", r.trial,
                       r.samples < 0 ? std::string("all") : std::to_string(r.samples), r.med_pretrain,
                       r.med_baseline, r.med_improvement, r.mipe_pretrain, r.mipe_baseline, r.mipe_improvement);
  return out;
}

std::array<double, 5> five_numbers(std::vector<double> v) {
  if (v.empty()) fail(ErrorCode::EmptyInput, "no values to summarise");
  std::sort(v.begin(), v.end());
  const auto q = [&](double p) {
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    const double f = pos - static_cast<double>(i);
    return i + 1 < v.size() ? v[i] * (1 - f) + v[i + 1] * f : v[i];
  };
  return {v.front(), q(0.25), q(0.5), q(0.75), v.back()};
}

std::string svg_boxplot(const std::vector<BoxGroup>& groups, std::string_view title, std::string_view ylabel) {
  if (groups.empty()) fail(ErrorCode::EmptyInput, "no groups to plot");
  Frame f;
  f.lo = std::numeric_limits<double>::infinity();
  f.hi = -f.lo;
  for (const auto& g : groups)
    for (const auto& [_, v] : g.boxes)
      for (double x : v) {
        f.lo = std::min(f.lo, x);
        f.hi = std::max(f.hi, x);
      }
  if (!std::isfinite(f.lo)) fail(ErrorCode::EmptyInput, "no values to plot");
  nice_range(f.lo, f.hi);
  std::string s = frame_open(f, title, "", ylabel);
  const double slot = f.plot_w() / static_cast<double>(groups.size());
  std::vector<std::string> legend;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& g = groups[gi];
    const double gx = f.left + slot * gi;
    const double bw = slot * 0.7 / std::max<std::size_t>(1, g.boxes.size());
    for (std::size_t bi = 0; bi < g.boxes.size(); ++bi) {
      const auto& [name, vals] = g.boxes[bi];
      if (std::find(legend.begin(), legend.end(), name) == legend.end()) legend.push_back(name);
      if (vals.empty()) continue;
      const auto c = kColors[(std::find(legend.begin(), legend.end(), name) - legend.begin()) % 6];
      const auto n = five_numbers(vals);
      const double x = gx + slot * 0.15 + bw * bi;
      const double mid = x + bw * 0.4;
      s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", mid, f.y(n[0]),
                       f.y(n[4]));
      s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\" stroke=\"black\"/>\n", x,
                       f.y(n[3]), bw * 0.8, std::max(0.5, f.y(n[1]) - f.y(n[3])), c);
      s += fmt::format("<line x1=\"{0}\" y1=\"{2}\" x2=\"{1}\" y2=\"{2}\" stroke=\"black\" stroke-width=\"2\"/>\n", x,
                       x + bw * 0.8, f.y(n[2]));
    }
    s += fmt::format(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
        gx + slot / 2, f.height - f.bottom + 18, esc(g.label));
  }
  for (std::size_t i = 0; i < legend.size(); ++i)
    s += fmt::format(
        "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\"/><text x=\"{}\" y=\"{}\" "
        "font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
        f.left + 10 + 90 * i, f.height - 22, kColors[i % 6], f.left + 26 + 90 * i, f.height - 12, esc(legend[i]));
  return s + "</svg>\n";
}

std::string svg_lines(const std::vector<Series>& series, std::string_view title, std::string_view xlabel,
                      std::string_view ylabel) {
  Frame f;
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo;
  f.lo = xlo;
  f.hi = xhi;
  for (const auto& sr : series)
    for (const auto& [x, y] : sr.points) {
      xlo = std::min(xlo, x);
      xhi = std::max(xhi, x);
      f.lo = std::min(f.lo, y);
      f.hi = std::max(f.hi, y);
    }
  if (!std::isfinite(xlo)) fail(ErrorCode::EmptyInput, "no points to plot");
  nice_range(f.lo, f.hi);
  if (!(xhi > xlo)) {
    xlo -= 0.5;
    xhi += 0.5;
  }
  const auto px = [&](double x) { return f.left + f.plot_w() * (x - xlo) / (xhi - xlo); };
  std::string s = frame_open(f, title, xlabel, ylabel);
  for (int t = 0; t <= 4; ++t) {
    const double v = xlo + (xhi - xlo) * t / 4.0;
    s += fmt::format(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{:.3g}</text>\n",
        px(v), f.height - f.bottom + 16, v);
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    auto pts = series[i].points;
    std::sort(pts.begin(), pts.end());
    std::string path;
    for (const auto& [x, y] : pts) path += fmt::format("{}{:.2f},{:.2f}", path.empty() ? "" : " ", px(x), f.y(y));
    const auto c = kColors[(i + 1) % 6];
    s += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n", path, c);
    for (const auto& [x, y] : pts)
      s += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"{}\"/>\n", px(x), f.y(y), c);
    s += fmt::format("<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{}\">{}</text>\n",
                     f.width - f.right - 120, f.top + 14 + 14 * i, c, esc(series[i].label));
  }
  return s + "</svg>\n";
}

}  // namespace mmg
