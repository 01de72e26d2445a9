#include "mmg/datagen.hpp"
#include "mmg/error.hpp"
#include "mmg/hierarchy.hpp"
#include "support.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

using namespace mmg;
using mmg::test::grid;

TEST_CASE("edge features") {
  const std::vector<Vec3> c{{1, 0, 0}, {0, 0, 0}, {3, 4, 0}};
  DirectedEdges e;
  e.push(1, 0);  // messages into node 0 from node 1
  e.push(1, 2);
  e.push(2, 2);
  const EdgeTable t = compute_edge_features(c, e);
  REQUIRE(t.edges.size() == 2);
  CHECK(t.features.row(0) == Eigen::RowVector4d(1, 0, 0, 1));
  CHECK(t.features.row(1) == Eigen::RowVector4d(3, 4, 0, 5));
}

TEST_CASE("directed edges come in both directions with antisymmetric features") {
  const GeneratedPart part = gen_bpillar_like({2.0, 10.0, 1.0, 2}, {8, 24});
  const DirectedEdges de = directed_edges(part.mesh);
  CHECK(de.size() == 2 * part.mesh.edge_count());
  const EdgeTable t = compute_edge_features(part.mesh.coords(), de);
  std::map<std::pair<int, int>, int> row;
  for (int r = 0; r < t.edges.size(); ++r) row[{t.edges.src[r], t.edges.dst[r]}] = r;
  for (const auto& [key, r] : row) {
    auto it = row.find({key.second, key.first});
    REQUIRE(it != row.end());
    const int q = it->second;
    CHECK((t.features.row(r).head<3>() + t.features.row(q).head<3>()).norm() == 0.0);
    CHECK(t.features(r, 3) == t.features(q, 3));
    CHECK(t.features(r, 3) >= 0.0);
  }
}

TEST_CASE("cross graph: trivial cases") {
  const std::vector<Vec3> fine{{0, 0, 0}, {1, 2, 3}, {-4, 0, 1}};
  const auto one = connect_cross_graph(fine, {{9, 9, 9}}, 1);
  CHECK(one.src == std::vector<int>{0, 1, 2});
  CHECK(one.dst == std::vector<int>{0, 0, 0});
  const auto co = connect_cross_graph(fine, {{5, 5, 5}, {1, 2, 3}, {0, 0, 0}}, 1);
  CHECK(co.dst[1] == 1);
  CHECK(co.dst[0] == 2);
  CHECK_ERROR_CODE(connect_cross_graph(fine, {{0, 0, 0}}, 2), ErrorCode::KTooLarge);
}

TEST_CASE("cross graph matches brute-force ranking on a 4x4 over 2x2 grid") {
  const ShellMesh fine = grid(3, 3);
  std::vector<Vec3> coarse;
  for (double y : {0.25, 0.75})
    for (double x : {0.25, 0.75}) coarse.emplace_back(x, y, 0.1);
  const auto ce = connect_cross_graph(fine.coords(), coarse, 3);
  REQUIRE(ce.size() == 3 * fine.node_count());
  for (int i = 0; i < fine.node_count(); ++i) {
    std::vector<int> order(coarse.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return (fine.coord(i) - coarse[a]).norm() < (fine.coord(i) - coarse[b]).norm();
    });
    for (int q = 0; q < 3; ++q) {
      CHECK(ce.src[3 * i + q] == i);
      CHECK(ce.dst[3 * i + q] == order[q]);
    }
  }
}

TEST_CASE("skeleton levels and size checks") {
  const auto templates = case_templates(CaseKind::BPillarA3);
  REQUIRE(templates.size() == 4);
  const HierarchySkeleton sk = build_coarse_hierarchy(templates, DomainKind::Octagon, 3);
  CHECK(sk.levels() == 3);
  CHECK(sk.down_edges.size() == 2);
  for (int l = 0; l + 1 < 3; ++l) CHECK(sk.down_edges[l].size() == 3 * sk.level_size(l + 1));

  const HierarchySkeleton flat = build_coarse_hierarchy({templates[0]}, DomainKind::Octagon, 3);
  CHECK(flat.levels() == 0);
  const GraphHierarchy h0 = build_sample_hierarchy(flat, templates[0]);
  CHECK(h0.levels == 0);
  CHECK(h0.down.empty());

  CHECK_ERROR_CODE(build_coarse_hierarchy({templates[2], templates[1]}, DomainKind::Octagon, 3),
                   ErrorCode::NonDecreasingSizes);
}

TEST_CASE("morph_hierarchy: identity and scaling") {
  const auto templates = case_templates(CaseKind::BPillarA3);
  const HierarchySkeleton sk = build_coarse_hierarchy(templates, DomainKind::Octagon, 3);

  const ShellMesh& level1 = templates[1];
  const auto same = morph_hierarchy(sk, level1, parameterise(level1, DomainKind::Octagon));
  double d = 0.0;
  for (int i = 0; i < level1.node_count(); ++i) d = std::max(d, (same[0][i] - level1.coord(i)).cwiseAbs().maxCoeff());
  CHECK(d <= 1e-9);

  const ShellMesh& fine = templates[0];
  auto c2 = fine.coords();
  for (auto& p : c2) p *= 2.0;
  const ShellMesh big = fine.with_coords(c2);
  const auto a = morph_hierarchy(sk, fine, parameterise(fine, DomainKind::Octagon));
  const auto b = morph_hierarchy(sk, big, parameterise(big, DomainKind::Octagon));
  for (std::size_t l = 0; l < a.size(); ++l)
    for (std::size_t i = 0; i < a[l].size(); ++i) CHECK((2.0 * a[l][i] - b[l][i]).norm() <= 1e-9);
}

TEST_CASE("morph_hierarchy: coarse corners follow a z-morphed pillar") {
  const auto templates = case_templates(CaseKind::BPillarA3);
  const HierarchySkeleton sk = build_coarse_hierarchy(templates, DomainKind::Octagon, 3);
  const BPillarDims dims;
  const GeneratedPart part = gen_bpillar_like({0.0, 0.0, 0.1 * dims.z_extent(), 2});
  const auto morphed = morph_hierarchy(sk, part.mesh, parameterise(part.mesh, DomainKind::Octagon));
  const BoundaryLoop fl = extract_boundary_loop(part.mesh);
  const auto fa = domain_anchors(fl, part.mesh, DomainKind::Octagon);
  const double h = part.mesh.mean_edge_length();
  for (int l = 1; l <= sk.levels(); ++l) {
    const ShellMesh& t = sk.templates[l];
    const BoundaryLoop tl = extract_boundary_loop(t);
    const auto ta = domain_anchors(tl, t, DomainKind::Octagon);
    for (int k = 0; k < 8; ++k)
      CHECK((morphed[l - 1][tl.nodes[ta[k]]] - part.mesh.coord(fl.nodes[fa[k]])).norm() <= h);
  }
}

TEST_CASE("sample hierarchies: fixed coarse topology, k cross edges per node, better cross distances") {
  const auto templates = case_templates(CaseKind::BPillarA3);
  const HierarchySkeleton sk = build_coarse_hierarchy(templates, DomainKind::Octagon, 3);
  std::set<std::uint64_t> digests;
  const std::vector<BPillarParams> params{{5, 10, 2, 1}, {-9, 35, -3, 3}, {0, 0, 4, 2}, {13, 39, 0, 1}};
  for (const auto& p : params) {
    const GeneratedPart part = gen_bpillar_like(p);
    const GraphHierarchy hm = build_sample_hierarchy(sk, part.mesh, CoarsePlacement::Morphed);
    const GraphHierarchy hr = build_sample_hierarchy(sk, part.mesh, CoarsePlacement::Reference);
    digests.insert(hm.coarse_digest);
    CHECK(hm.coarse_digest == hr.coarse_digest);
    std::vector<int> out_degree(part.mesh.node_count(), 0);
    for (int s : hm.down[0].edges.src) out_degree[s]++;
    CHECK(std::all_of(out_degree.begin(), out_degree.end(), [](int d) { return d == 3; }));
    CHECK(mean_cross_distance(hm) <= mean_cross_distance(hr));
  }
  CHECK(digests.size() == 1);
}

TEST_CASE("hierarchy container round trip") {
  const auto templates = case_templates(CaseKind::BPillarA3, {8, 24});
  const HierarchySkeleton sk = build_coarse_hierarchy(templates, DomainKind::Octagon, 3);
  const GeneratedPart part = gen_bpillar_like({1, 2, 3, 1}, {8, 24});
  const GraphHierarchy h = build_sample_hierarchy(sk, part.mesh);
  const GraphHierarchy back = deserialize_hierarchy(serialize_hierarchy(h));
  CHECK(back.levels == h.levels);
  CHECK(back.coarse_digest == h.coarse_digest);
  for (int l = 0; l <= h.levels; ++l) {
    CHECK(back.coords[l] == h.coords[l]);
    CHECK(back.level[l].edges.src == h.level[l].edges.src);
    CHECK(back.level[l].features == h.level[l].features);
  }
  for (std::size_t l = 0; l < h.down.size(); ++l) CHECK(back.down[l].features == h.down[l].features);
  std::string bytes = serialize_hierarchy(h);
  bytes[0] = 'X';
  CHECK_ERROR_CODE(deserialize_hierarchy(bytes), ErrorCode::ParseError);
  CHECK_ERROR_CODE(deserialize_hierarchy(serialize_hierarchy(h).substr(0, 40)), ErrorCode::ParseError);
}
