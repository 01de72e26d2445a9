#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mmg {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

/// Triangle or quad, stored by vertex index.
struct Element {
  std::array<int, 4> v{};
  int size = 3;

  std::span<const int> nodes() const { return {v.data(), static_cast<std::size_t>(size)}; }
  static Element tri(int a, int b, int c) { return {{a, b, c, -1}, 3}; }
  static Element quad(int a, int b, int c, int d) { return {{a, b, c, d}, 4}; }
  bool operator==(const Element&) const = default;
};

/// Undirected edge, a < b.
struct Edge {
  int a = 0;
  int b = 0;
  auto operator<=>(const Edge&) const = default;
};

using Triangle = std::array<int, 3>;

/// Disk-like shell surface. Construction validates the element list and
/// derives the undirected edge set and node adjacency; instances are immutable.
class ShellMesh {
 public:
  ShellMesh() = default;
  ShellMesh(std::vector<Vec3> coords, std::vector<Element> elements);

  int node_count() const { return static_cast<int>(coords_.size()); }
  int edge_count() const { return static_cast<int>(edges_.size()); }
  int element_count() const { return static_cast<int>(elements_.size()); }

  const std::vector<Vec3>& coords() const { return coords_; }
  const Vec3& coord(int i) const { return coords_[i]; }
  const std::vector<Element>& elements() const { return elements_; }
  const std::vector<Edge>& edges() const { return edges_; }

  std::span<const int> neighbors(int i) const {
    return {adjacency_.data() + offsets_[i], static_cast<std::size_t>(offsets_[i + 1] - offsets_[i])};
  }
  int degree(int i) const { return offsets_[i + 1] - offsets_[i]; }

  /// Quads split along the diagonal through their lowest-index vertex.
  std::vector<Triangle> triangles() const;

  /// Same connectivity, new coordinates.
  ShellMesh with_coords(std::vector<Vec3> coords) const;

  double mean_edge_length() const;

  /// FNV-1a digest of node count, element list and edge list.
  std::uint64_t topology_digest() const;

 private:
  std::vector<Vec3> coords_;
  std::vector<Element> elements_;
  std::vector<Edge> edges_;
  std::vector<int> offsets_;
  std::vector<int> adjacency_;
};

/// Ordered outer boundary cycle.
struct BoundaryLoop {
  std::vector<int> nodes;
  bool clockwise = true;

  int size() const { return static_cast<int>(nodes.size()); }
};

enum class NodeRole : std::uint8_t { Free = 0, BoundaryConstrained = 1, Contact = 2 };

struct NodeRoles {
  std::vector<NodeRole> labels;

  int size() const { return static_cast<int>(labels.size()); }
  int count(NodeRole r) const;
  bool is_protected(int i) const { return labels[i] != NodeRole::Free; }
};

/// Boundary bands are fractions of the bounding-box extent along `axis`;
/// the contact region is a ball.
struct RoleSpec {
  int axis = 1;
  double bottom_band = 0.1;
  double top_band = 0.1;
  Vec3 contact_center = Vec3::Zero();
  double contact_radius = 0.0;
};

/// Orthonormal frame of the plane the mesh is projected onto for boundary
/// ordering and corner detection. `normal` is the area-weighted mean normal,
/// sign-normalised so that its dominant Cartesian component is positive.
struct PlaneFrame {
  Vec3 normal = Vec3::UnitZ();
  Vec3 e1 = Vec3::UnitX();
  Vec3 e2 = Vec3::UnitY();

  Vec2 project(const Vec3& p) const { return {p.dot(e1), p.dot(e2)}; }
};

PlaneFrame dominant_plane(const ShellMesh& mesh);

/// Single clockwise boundary cycle starting at the bottom-left node.
BoundaryLoop extract_boundary_loop(const ShellMesh& mesh);

/// Absolute exterior turning angle (radians) at every loop position.
std::vector<double> turning_angles(const BoundaryLoop& loop, const ShellMesh& mesh);

inline constexpr double kCornerTieTolerance = 1e-6;

/// Loop positions of the `count` sharpest boundary nodes, ascending.
std::vector<int> detect_corners(const BoundaryLoop& loop, const ShellMesh& mesh, int count);

NodeRoles classify_nodes(const ShellMesh& mesh, const RoleSpec& spec);

std::string_view to_string(NodeRole role);
NodeRole parse_role(std::string_view s);

struct MeshFile {
  ShellMesh mesh;
  std::optional<NodeRoles> roles;
};

MeshFile read_mesh_file(const std::filesystem::path& path);
ShellMesh load_mesh(const std::filesystem::path& path);
void save_mesh(const std::filesystem::path& path, const ShellMesh& mesh,
               const NodeRoles* roles = nullptr);

/// Role-only file in the mesh line format (`# role <i> <label>` lines).
NodeRoles load_roles(const std::filesystem::path& path, int node_count);
void save_roles(const std::filesystem::path& path, const NodeRoles& roles);

}  // namespace mmg
