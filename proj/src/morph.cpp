#include "mmg/morph.hpp"

#include "mmg/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace mmg {

namespace {

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

Vec2 closest_on_segment(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 d = b - a;
  const double len2 = d.squaredNorm();
  if (len2 == 0) return a;
  const double t = std::clamp((p - a).dot(d) / len2, 0.0, 1.0);
  return a + t * d;
}

}  // namespace

UvLocator::UvLocator(const ShellMesh& mesh, const UvChart& chart)
    : tris_(mesh.triangles()), uv_(chart.uv) {
  if (chart.node_count() != mesh.node_count())
    fail(ErrorCode::ShapeMismatch, "chart and mesh node counts differ");

  Vec2 hi = Vec2::Constant(-std::numeric_limits<double>::infinity());
  lo_ = Vec2::Constant(std::numeric_limits<double>::infinity());
  for (const auto& p : uv_) {
    lo_ = lo_.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  if (chart.domain == DomainKind::Disk) {
    const auto& b = chart.boundary;
    double sagitta = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
      const double half = 0.5 * (uv_[b[i]] - uv_[b[(i + 1) % b.size()]]).norm();
      sagitta = std::max(sagitta, 1.0 - std::sqrt(std::max(0.0, 1.0 - half * half)));
    }
    snap_ += sagitta;
  }

  std::vector<double> len;
  len.reserve(mesh.edge_count());
  for (const auto& e : mesh.edges()) len.push_back((uv_[e.a] - uv_[e.b]).norm());
  double median = 0.0;
  if (!len.empty()) {
    std::nth_element(len.begin(), len.begin() + len.size() / 2, len.end());
    median = len[len.size() / 2];
  }
  const Vec2 ext = hi - lo_;
  cell_ = median > 0 ? 2.0 * median : std::max(ext.maxCoeff(), 1.0);
  nx_ = std::clamp(static_cast<int>(std::ceil(ext.x() / cell_)), 1, 4096);
  ny_ = std::clamp(static_cast<int>(std::ceil(ext.y() / cell_)), 1, 4096);

  // Bucket each triangle into every cell its bounding box touches (CSR).
  std::vector<std::array<int, 4>> spans(tris_.size());
  std::vector<int> counts(static_cast<std::size_t>(nx_) * ny_ + 1, 0);
  auto clampi = [](double v, int n) { return std::clamp(static_cast<int>(std::floor(v)), 0, n - 1); };
  for (std::size_t t = 0; t < tris_.size(); ++t) {
    Vec2 a = uv_[tris_[t][0]], b = a;
    for (int q = 1; q < 3; ++q) {
      a = a.cwiseMin(uv_[tris_[t][q]]);
      b = b.cwiseMax(uv_[tris_[t][q]]);
    }
    auto& s = spans[t];
    s = {clampi((a.x() - lo_.x()) / cell_, nx_), clampi((b.x() - lo_.x()) / cell_, nx_),
         clampi((a.y() - lo_.y()) / cell_, ny_), clampi((b.y() - lo_.y()) / cell_, ny_)};
    for (int y = s[2]; y <= s[3]; ++y)
      for (int x = s[0]; x <= s[1]; ++x) ++counts[y * nx_ + x + 1];
  }
  for (std::size_t c = 1; c < counts.size(); ++c) counts[c] += counts[c - 1];
  cell_start_ = counts;
  cell_items_.resize(counts.back());
  for (std::size_t t = 0; t < tris_.size(); ++t) {
    const auto& s = spans[t];
    for (int y = s[2]; y <= s[3]; ++y)
      for (int x = s[0]; x <= s[1]; ++x) cell_items_[counts[y * nx_ + x]++] = static_cast<int>(t);
  }
}

int UvLocator::cell_of(const Vec2& p) const {
  const int x = std::clamp(static_cast<int>(std::floor((p.x() - lo_.x()) / cell_)), 0, nx_ - 1);
  const int y = std::clamp(static_cast<int>(std::floor((p.y() - lo_.y()) / cell_)), 0, ny_ - 1);
  return y * nx_ + x;
}

bool UvLocator::barycentric(int t, const Vec2& p, std::array<double, 3>& w) const {
  const Vec2& a = uv_[tris_[t][0]];
  const Vec2 ab = uv_[tris_[t][1]] - a, ac = uv_[tris_[t][2]] - a, ap = p - a;
  const double det = cross2(ab, ac);
  if (det == 0) return false;
  const double s = cross2(ap, ac) / det;
  const double r = cross2(ab, ap) / det;
  w = {1.0 - s - r, s, r};
  return true;
}

UvLocation UvLocator::locate(const Vec2& p) const {
  UvLocation best;
  double best_min = -std::numeric_limits<double>::infinity();
  auto consider = [&](int t) {
    std::array<double, 3> w;
    if (!barycentric(t, p, w)) return;
    const double m = std::min({w[0], w[1], w[2]});
    if (m < -kClampTolerance) return;
    if (m > best_min || (m == best_min && t < best.triangle)) {
      best_min = m;
      best.triangle = t;
      best.weights = w;
    }
  };
  const int c = cell_of(p);
  for (int k = cell_start_[c]; k < cell_start_[c + 1]; ++k) consider(cell_items_[k]);
  if (best.triangle < 0)
    for (int t = 0; t < static_cast<int>(tris_.size()); ++t) consider(t);

  if (best.triangle >= 0) {
    auto& w = best.weights;
    if (best_min < 0) {
      for (double& x : w) x = std::max(x, 0.0);
      const double s = w[0] + w[1] + w[2];
      for (double& x : w) x /= s;
    }
    best.provenance = Provenance::Interior;
    return best;
  }

  // Outside every triangle: snap to the closest point of the nearest one.
  double dbest = std::numeric_limits<double>::infinity();
  Vec2 qbest = p;
  for (int t = 0; t < static_cast<int>(tris_.size()); ++t) {
    for (int e = 0; e < 3; ++e) {
      const Vec2 q = closest_on_segment(p, uv_[tris_[t][e]], uv_[tris_[t][(e + 1) % 3]]);
      const double d = (q - p).norm();
      if (d < dbest) {
        dbest = d;
        qbest = q;
        best.triangle = t;
      }
    }
  }
  if (best.triangle < 0 || dbest > snap_)
    fail(ErrorCode::OutsideDomain,
         fmt::format("UV point ({:.9g}, {:.9g}) is {:.3e} from the nearest triangle", p.x(), p.y(), dbest));
  std::array<double, 3> w{1.0, 0.0, 0.0};
  barycentric(best.triangle, qbest, w);
  for (double& x : w) x = std::max(x, 0.0);
  const double s = w[0] + w[1] + w[2];
  for (double& x : w) x /= s;
  best.weights = w;
  best.provenance = Provenance::BoundaryClamped;
  return best;
}

int MorphResult::clamped() const {
  return static_cast<int>(std::count(provenance.begin(), provenance.end(), Provenance::BoundaryClamped));
}

MorphResult morph_template(const UvChart& template_chart, const ShellMesh& target,
                           const UvLocator& target_locator, DomainKind target_domain) {
  if (template_chart.domain != target_domain)
    fail(ErrorCode::DomainMismatch, fmt::format("template chart uses {}, target uses {}",
                                                to_string(template_chart.domain), to_string(target_domain)));
  const auto& tris = target_locator.triangles();
  MorphResult out;
  out.coords.resize(template_chart.node_count());
  out.provenance.resize(template_chart.node_count());
  for (int i = 0; i < template_chart.node_count(); ++i) {
    const UvLocation loc = target_locator.locate(template_chart.uv[i]);
    const auto& t = tris[loc.triangle];
    out.coords[i] = loc.weights[0] * target.coord(t[0]) + loc.weights[1] * target.coord(t[1]) +
                    loc.weights[2] * target.coord(t[2]);
    out.provenance[i] = loc.provenance;
  }
  return out;
}

MorphResult morph_template(const UvChart& template_chart, const ShellMesh& target,
                           const UvChart& target_chart) {
  if (template_chart.domain != target_chart.domain)
    fail(ErrorCode::DomainMismatch, fmt::format("template chart uses {}, target uses {}",
                                                to_string(template_chart.domain),
                                                to_string(target_chart.domain)));
  return morph_template(template_chart, target, UvLocator(target, target_chart), target_chart.domain);
}

std::vector<Vec3> interpolate_alpha(const std::vector<Vec3>& template_coords,
                                    const std::vector<Vec3>& morphed_coords, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    fail(ErrorCode::AlphaOutOfRange, fmt::format("alpha {} outside [0, 1]", alpha));
  if (template_coords.size() != morphed_coords.size())
    fail(ErrorCode::ShapeMismatch, "template and morphed node counts differ");
  if (alpha == 0.0) return template_coords;
  if (alpha == 1.0) return morphed_coords;
  std::vector<Vec3> out(template_coords.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (1.0 - alpha) * template_coords[i] + alpha * morphed_coords[i];
  return out;
}

}  // namespace mmg
