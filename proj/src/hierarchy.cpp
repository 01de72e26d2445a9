#include "mmg/hierarchy.hpp"

#include "mmg/error.hpp"
#include "mmg/io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>

namespace mmg {

namespace {

constexpr char kMagic[4] = {'M', 'M', 'G', 'H'};
constexpr std::uint32_t kVersion = 1;

void hash_edges(Fnv1a& h, const DirectedEdges& e) {
  h.value(e.size());
  h.span(std::span<const int>(e.src));
  h.span(std::span<const int>(e.dst));
}

}  // namespace

DirectedEdges directed_edges(const ShellMesh& mesh) {
  DirectedEdges out;
  out.src.reserve(2 * mesh.edge_count());
  out.dst.reserve(2 * mesh.edge_count());
  for (const auto& e : mesh.edges()) {
    out.push(e.a, e.b);
    out.push(e.b, e.a);
  }
  return out;
}

EdgeTable compute_edge_features(const std::vector<Vec3>& src_coords, const std::vector<Vec3>& dst_coords,
                                const DirectedEdges& edges) {
  const bool same = &src_coords == &dst_coords;
  EdgeTable t;
  std::vector<int> keep;
  keep.reserve(edges.size());
  for (int e = 0; e < edges.size(); ++e) {
    const int s = edges.src[e], d = edges.dst[e];
    if (s < 0 || s >= static_cast<int>(src_coords.size()) || d < 0 ||
        d >= static_cast<int>(dst_coords.size()))
      fail(ErrorCode::IndexOutOfRange, fmt::format("edge {} ({} -> {}) out of range", e, s, d));
    if (same && s == d) continue;
    keep.push_back(e);
  }
  t.features.resize(static_cast<Eigen::Index>(keep.size()), 4);
  t.edges.src.reserve(keep.size());
  t.edges.dst.reserve(keep.size());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    const int e = keep[r];
    const Vec3 d = dst_coords[edges.dst[e]] - src_coords[edges.src[e]];
    t.features.row(r) << d.x(), d.y(), d.z(), d.norm();
    t.edges.push(edges.src[e], edges.dst[e]);
  }
  return t;
}

EdgeTable compute_edge_features(const std::vector<Vec3>& coords, const DirectedEdges& edges) {
  return compute_edge_features(coords, coords, edges);
}

DirectedEdges connect_cross_graph(const std::vector<Vec3>& from, const std::vector<Vec3>& to, int k) {
  const int m = static_cast<int>(to.size());
  if (k < 1) fail(ErrorCode::InvalidArgument, fmt::format("k must be positive, got {}", k));
  if (k > m) fail(ErrorCode::KTooLarge, fmt::format("k = {} exceeds {} target nodes", k, m));
  DirectedEdges out;
  out.src.reserve(from.size() * k);
  out.dst.reserve(from.size() * k);
  std::vector<std::pair<double, int>> cand(m);
  for (int i = 0; i < static_cast<int>(from.size()); ++i) {
    for (int j = 0; j < m; ++j) cand[j] = {(from[i] - to[j]).squaredNorm(), j};
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    for (int q = 0; q < k; ++q) out.push(i, cand[q].second);
  }
  return out;
}

std::uint64_t HierarchySkeleton::topology_digest() const {
  Fnv1a h;
  h.value(levels());
  for (int l = 1; l <= levels(); ++l) {
    h.value(level_size(l));
    hash_edges(h, level_edges[l]);
  }
  for (const auto& d : down_edges) hash_edges(h, d);
  return h.digest();
}

HierarchySkeleton build_coarse_hierarchy(std::vector<ShellMesh> templates, DomainKind domain, int k) {
  if (templates.empty()) fail(ErrorCode::EmptyInput, "no template meshes");
  for (std::size_t l = 1; l < templates.size(); ++l)
    if (templates[l].node_count() >= templates[l - 1].node_count())
      fail(ErrorCode::NonDecreasingSizes,
           fmt::format("template {} has {} nodes, not fewer than the {} of template {}", l,
                       templates[l].node_count(), templates[l - 1].node_count(), l - 1));
  HierarchySkeleton s;
  s.domain = domain;
  s.k = k;
  s.templates = std::move(templates);
  for (const auto& t : s.templates) {
    s.charts.push_back(parameterise(t, domain));
    s.level_edges.push_back(directed_edges(t));
  }
  if (s.levels() >= 1 && k > s.level_size(1))
    fail(ErrorCode::KTooLarge, fmt::format("k = {} exceeds level-1 size {}", k, s.level_size(1)));
  for (int l = 1; l < s.levels(); ++l)
    s.down_edges.push_back(connect_cross_graph(s.templates[l].coords(), s.templates[l + 1].coords(), k));
  return s;
}

std::vector<std::vector<Vec3>> morph_hierarchy(const HierarchySkeleton& skeleton, const ShellMesh& fine,
                                               const UvChart& fine_chart) {
  const UvLocator locator(fine, fine_chart);
  std::vector<std::vector<Vec3>> out;
  for (int l = 1; l <= skeleton.levels(); ++l)
    out.push_back(morph_template(skeleton.charts[l], fine, locator, fine_chart.domain).coords);
  return out;
}

GraphHierarchy build_sample_hierarchy(const HierarchySkeleton& skeleton, const ShellMesh& fine,
                                      CoarsePlacement placement, const UvChart* fine_chart) {
  GraphHierarchy h;
  h.levels = skeleton.levels();
  h.k = skeleton.k;
  h.coords.push_back(fine.coords());
  if (placement == CoarsePlacement::Morphed && h.levels > 0) {
    std::vector<std::vector<Vec3>> morphed;
    if (fine_chart) {
      morphed = morph_hierarchy(skeleton, fine, *fine_chart);
    } else {
      const UvChart chart = parameterise(fine, skeleton.domain);
      morphed = morph_hierarchy(skeleton, fine, chart);
    }
    for (auto& c : morphed) h.coords.push_back(std::move(c));
  } else {
    for (int l = 1; l <= h.levels; ++l) h.coords.push_back(skeleton.templates[l].coords());
  }

  h.level.push_back(compute_edge_features(h.coords[0], directed_edges(fine)));
  for (int l = 1; l <= h.levels; ++l)
    h.level.push_back(compute_edge_features(h.coords[l], skeleton.level_edges[l]));
  if (h.levels > 0) {
    const auto cross = connect_cross_graph(h.coords[0], h.coords[1], skeleton.k);
    h.down.push_back(compute_edge_features(h.coords[0], h.coords[1], cross));
  }
  for (int l = 1; l < h.levels; ++l)
    h.down.push_back(compute_edge_features(h.coords[l], h.coords[l + 1], skeleton.down_edges[l - 1]));

  Fnv1a dig;
  dig.value(h.levels);
  for (int l = 1; l <= h.levels; ++l) {
    dig.value(h.node_count(l));
    hash_edges(dig, h.level[l].edges);
  }
  for (int l = 1; l < h.levels; ++l) hash_edges(dig, h.down[l].edges);
  h.coarse_digest = dig.digest();
  return h;
}

double mean_cross_distance(const GraphHierarchy& h) {
  if (h.down.empty() || h.down[0].features.rows() == 0) return 0.0;
  return h.down[0].features.col(3).mean();
}

namespace {

void put_table(ByteWriter& w, const EdgeTable& t) {
  w.put(static_cast<std::uint32_t>(t.edges.size()));
  for (int e = 0; e < t.edges.size(); ++e) {
    w.put(static_cast<std::int32_t>(t.edges.src[e]));
    w.put(static_cast<std::int32_t>(t.edges.dst[e]));
  }
  w.put_array(std::span<const double>(t.features.data(), t.features.size()));
}

EdgeTable get_table(ByteReader& r) {
  EdgeTable t;
  const auto n = r.get<std::uint32_t>();
  for (std::uint32_t e = 0; e < n; ++e) {
    const int s = r.get<std::int32_t>();
    const int d = r.get<std::int32_t>();
    t.edges.push(s, d);
  }
  t.features.resize(n, 4);
  for (Eigen::Index i = 0; i < t.features.size(); ++i) t.features.data()[i] = r.get<double>();
  return t;
}

}  // namespace

std::string serialize_hierarchy(const GraphHierarchy& h) {
  ByteWriter w;
  w.put_raw(std::string_view(kMagic, 4));
  w.put(kVersion);
  w.put(static_cast<std::uint32_t>(h.levels));
  w.put(static_cast<std::uint32_t>(h.k));
  w.put(h.coarse_digest);
  for (int l = 0; l <= h.levels; ++l) {
    w.put(static_cast<std::uint32_t>(h.coords[l].size()));
    for (const auto& p : h.coords[l]) {
      w.put(p.x());
      w.put(p.y());
      w.put(p.z());
    }
    put_table(w, h.level[l]);
  }
  for (const auto& d : h.down) put_table(w, d);
  return w.str();
}

GraphHierarchy deserialize_hierarchy(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.get_raw(4) != std::string_view(kMagic, 4)) fail(ErrorCode::ParseError, "not a hierarchy file");
  if (const auto v = r.get<std::uint32_t>(); v != kVersion)
    fail(ErrorCode::ParseError, fmt::format("unsupported hierarchy version {}", v));
  GraphHierarchy h;
  h.levels = static_cast<int>(r.get<std::uint32_t>());
  h.k = static_cast<int>(r.get<std::uint32_t>());
  h.coarse_digest = r.get<std::uint64_t>();
  for (int l = 0; l <= h.levels; ++l) {
    const auto n = r.get<std::uint32_t>();
    std::vector<Vec3> c(n);
    for (auto& p : c) {
      p.x() = r.get<double>();
      p.y() = r.get<double>();
      p.z() = r.get<double>();
    }
    h.coords.push_back(std::move(c));
    h.level.push_back(get_table(r));
  }
  for (int l = 0; l < h.levels; ++l) h.down.push_back(get_table(r));
  if (!r.done()) fail(ErrorCode::ParseError, "trailing bytes in hierarchy file");
  return h;
}

void save_hierarchy(const std::filesystem::path& path, const GraphHierarchy& h) {
  write_file_atomic(path, serialize_hierarchy(h));
}

GraphHierarchy load_hierarchy(const std::filesystem::path& path) {
  return deserialize_hierarchy(read_file(path));
}

}  // namespace mmg
