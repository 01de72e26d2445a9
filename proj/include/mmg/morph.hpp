#pragma once

#include "mmg/mesh.hpp"
#include "mmg/param.hpp"

#include <array>
#include <vector>

namespace mmg {

inline constexpr double kSnapTolerance = 1e-6;
inline constexpr double kClampTolerance = 1e-12;

enum class Provenance : std::uint8_t { Interior, BoundaryClamped };

struct UvLocation {
  int triangle = -1;
  std::array<double, 3> weights{};
  Provenance provenance = Provenance::Interior;
};

/// Point location over a chart's UV triangulation. A uniform background grid
/// with cells about twice the median UV edge length narrows the candidates.
/// On the disk the boundary is a polygon inscribed in the circle, so the snap
/// tolerance grows by the largest chord sagitta of that polygon.
class UvLocator {
 public:
  UvLocator(const ShellMesh& mesh, const UvChart& chart);

  UvLocation locate(const Vec2& p) const;

  const std::vector<Triangle>& triangles() const { return tris_; }
  double snap_tolerance() const { return snap_; }

 private:
  bool barycentric(int t, const Vec2& p, std::array<double, 3>& w) const;
  int cell_of(const Vec2& p) const;

  std::vector<Triangle> tris_;
  std::vector<Vec2> uv_;
  Vec2 lo_ = Vec2::Zero();
  double cell_ = 1.0;
  double snap_ = kSnapTolerance;
  int nx_ = 1, ny_ = 1;
  std::vector<int> cell_start_;
  std::vector<int> cell_items_;
};

struct MorphResult {
  std::vector<Vec3> coords;
  std::vector<Provenance> provenance;

  int clamped() const;
};

/// Moves every template node to the target surface point that shares its UV.
MorphResult morph_template(const UvChart& template_chart, const ShellMesh& target,
                           const UvChart& target_chart);
MorphResult morph_template(const UvChart& template_chart, const ShellMesh& target,
                           const UvLocator& target_locator, DomainKind target_domain);

/// (1 - alpha) * template + alpha * morphed; the endpoints return copies.
std::vector<Vec3> interpolate_alpha(const std::vector<Vec3>& template_coords,
                                    const std::vector<Vec3>& morphed_coords, double alpha);

}  // namespace mmg
