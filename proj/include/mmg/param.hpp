#pragma once

#include "mmg/mesh.hpp"

#include <Eigen/SparseCore>

#include <span>
#include <string_view>
#include <vector>

namespace mmg {

enum class DomainKind { Disk, Square, Octagon };

std::string_view to_string(DomainKind d);
DomainKind parse_domain(std::string_view s);

/// 0 for the disk, 4 for the square, 8 for the octagon.
int anchor_count(DomainKind d);

/// Polygon vertices in clockwise order, first vertex at the bottom-left.
/// Square is the unit square [0,1]^2; the octagon is inscribed in the unit
/// circle. Empty for the disk.
std::vector<Vec2> domain_vertices(DomainKind d);

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Uniform graph Laplacian D - A.
SparseMatrix build_laplacian(const ShellMesh& mesh);
SparseMatrix build_laplacian(int node_count, const std::vector<Edge>& edges);

struct BoundaryUv {
  std::vector<int> nodes;  // loop order
  std::vector<Vec2> uv;
};

/// Pins the loop to the domain boundary. Disk placement is arc-length
/// proportional starting at -90 degrees, clockwise; polygon placement maps
/// anchors (loop positions) to the vertices and spaces the remaining nodes
/// evenly along each side by count.
BoundaryUv embed_boundary(const BoundaryLoop& loop, std::span<const int> anchors, DomainKind domain,
                          const ShellMesh& mesh);

/// Corner positions for a polygon domain, rotated so that the first anchor is
/// the corner cyclically closest to the loop start. Empty for the disk.
std::vector<int> domain_anchors(const BoundaryLoop& loop, const ShellMesh& mesh, DomainKind domain);

enum class SolverBackend { ConjugateGradient, Direct };

struct TutteOptions {
  SolverBackend backend = SolverBackend::ConjugateGradient;
  double tolerance = 1e-10;  // max-norm of the interior harmonic residual
  int max_iterations = 0;    // 0 means 10 * node count
};

struct UvChart {
  std::vector<Vec2> uv;
  std::vector<char> is_boundary;
  std::vector<int> boundary;  // loop order
  std::vector<int> interior;
  DomainKind domain = DomainKind::Disk;
  double residual = 0.0;
  int iterations = 0;

  int node_count() const { return static_cast<int>(uv.size()); }
};

UvChart solve_tutte(const ShellMesh& mesh, const BoundaryUv& boundary, DomainKind domain,
                    const TutteOptions& options = {});

/// Loop extraction, anchor detection, boundary placement and the interior solve.
UvChart parameterise(const ShellMesh& mesh, DomainKind domain, const TutteOptions& options = {});
UvChart parameterise(const ShellMesh& mesh, const BoundaryLoop& loop, DomainKind domain,
                     const TutteOptions& options = {});

/// max_i in I |(L U)_i|
double harmonic_residual(const ShellMesh& mesh, const UvChart& chart);

struct EmbeddingReport {
  int triangles = 0;
  int flipped = 0;  // non-positive area relative to the dominant orientation
  double min_area = 0.0;
  double max_area = 0.0;
  double residual = 0.0;
};

EmbeddingReport validate_embedding(const UvChart& chart, const ShellMesh& mesh);

/// `index,u,v,is_boundary`
std::string chart_csv(const UvChart& chart);

}  // namespace mmg
