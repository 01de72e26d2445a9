#pragma once

#include "mmg/mesh.hpp"
#include "mmg/morph.hpp"
#include "mmg/param.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace mmg {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Directed edges. Messages flow src -> dst.
struct DirectedEdges {
  std::vector<int> src;
  std::vector<int> dst;

  int size() const { return static_cast<int>(src.size()); }
  void push(int s, int d) {
    src.push_back(s);
    dst.push_back(d);
  }
  /// Same edges with the direction flipped, in the same order.
  DirectedEdges reversed() const { return {dst, src}; }
};

/// Both directions of every mesh edge: (a -> b) then (b -> a), in edge order.
DirectedEdges directed_edges(const ShellMesh& mesh);

/// Edge features [x_dst - x_src, |x_dst - x_src|], one row per edge. Self
/// loops carry no feature and are dropped from the returned edge list.
struct EdgeTable {
  DirectedEdges edges;
  RowMatrix features;  // edges x 4
};

EdgeTable compute_edge_features(const std::vector<Vec3>& coords, const DirectedEdges& edges);
EdgeTable compute_edge_features(const std::vector<Vec3>& src_coords,
                                const std::vector<Vec3>& dst_coords, const DirectedEdges& edges);

/// k nearest `to` nodes of every `from` node by Euclidean distance, ties to
/// the lower `to` index. Edges run from -> to, grouped by `from` node, nearest first.
DirectedEdges connect_cross_graph(const std::vector<Vec3>& from, const std::vector<Vec3>& to, int k);

/// Sample-independent part of the hierarchy: template connectivity, reference
/// coordinates, their charts, and the fixed coarse-to-coarser cross edges.
struct HierarchySkeleton {
  DomainKind domain = DomainKind::Octagon;
  int k = 3;
  std::vector<ShellMesh> templates;  // [0] fine reference, [1..L] coarse levels
  std::vector<UvChart> charts;
  std::vector<DirectedEdges> level_edges;  // [l] for l = 0..L, [0] from the reference
  std::vector<DirectedEdges> down_edges;   // [l] links level l+1 -> l+2, for l = 0..L-2

  int levels() const { return static_cast<int>(templates.size()) - 1; }
  int level_size(int l) const { return templates[l].node_count(); }
  std::uint64_t topology_digest() const;
};

HierarchySkeleton build_coarse_hierarchy(std::vector<ShellMesh> templates, DomainKind domain, int k = 3);

/// Per-level coordinates for the coarse levels, each morphed onto the fine
/// mesh's chart. Index l-1 holds level l.
std::vector<std::vector<Vec3>> morph_hierarchy(const HierarchySkeleton& skeleton, const ShellMesh& fine,
                                               const UvChart& fine_chart);

struct GraphHierarchy {
  int levels = 0;  // coarse levels L
  int k = 3;
  std::vector<std::vector<Vec3>> coords;  // [0..L]
  std::vector<EdgeTable> level;           // [0..L] in-level edges
  std::vector<EdgeTable> down;            // [l] links level l -> l+1, for l = 0..L-1
  std::uint64_t coarse_digest = 0;

  int node_count(int l) const { return static_cast<int>(coords[l].size()); }
};

enum class CoarsePlacement { Morphed, Reference };

/// Parameterises the fine mesh on the skeleton's domain, places the coarse
/// levels (morphed or at template reference coordinates), connects fine nodes
/// to level 1 and computes every feature table.
GraphHierarchy build_sample_hierarchy(const HierarchySkeleton& skeleton, const ShellMesh& fine,
                                      CoarsePlacement placement = CoarsePlacement::Morphed,
                                      const UvChart* fine_chart = nullptr);

/// Mean length of the fine -> level-1 cross edges.
double mean_cross_distance(const GraphHierarchy& h);

void save_hierarchy(const std::filesystem::path& path, const GraphHierarchy& h);
GraphHierarchy load_hierarchy(const std::filesystem::path& path);
std::string serialize_hierarchy(const GraphHierarchy& h);
GraphHierarchy deserialize_hierarchy(std::string_view bytes);

}  // namespace mmg
