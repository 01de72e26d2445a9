#include "mmg/error.hpp"
#include "mmg/mesh.hpp"
#include "support.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <map>
#include <set>

using namespace mmg;
using mmg::test::grid;

namespace {

// Edges on exactly one element, counted from the element lists directly.
std::set<int> boundary_nodes_brute(const ShellMesh& m) {
  std::map<std::pair<int, int>, int> uses;
  for (const auto& el : m.elements()) {
    auto n = el.nodes();
    for (std::size_t k = 0; k < n.size(); ++k) {
      int a = n[k], b = n[(k + 1) % n.size()];
      uses[{std::min(a, b), std::max(a, b)}]++;
    }
  }
  std::set<int> out;
  for (const auto& [e, c] : uses)
    if (c == 1) {
      out.insert(e.first);
      out.insert(e.second);
    }
  return out;
}

}  // namespace

TEST_CASE("mesh file: 2x2 quad grid has 9 nodes and 12 edges") {
  test::TempDir dir("mesh");
  test::write_text(dir / "g.mesh",
                   "v 0 0 0\nv 1 0 0\nv 2 0 0\nv 0 1 0\nv 1 1 0\nv 2 1 0\nv 0 2 0\nv 1 2 0\nv 2 2 0\n"
                   "f 0 1 4 3\nf 1 2 5 4\nf 3 4 7 6\nf 4 5 8 7\n");
  const ShellMesh m = load_mesh(dir / "g.mesh");
  CHECK(m.node_count() == 9);
  CHECK(m.edge_count() == 12);
}

TEST_CASE("mesh file: single triangle") {
  test::TempDir dir("mesh");
  test::write_text(dir / "t.mesh", "# a comment\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n");
  const ShellMesh m = load_mesh(dir / "t.mesh");
  CHECK(m.node_count() == 3);
  CHECK(m.edge_count() == 3);
  const BoundaryLoop loop = extract_boundary_loop(m);
  CHECK(loop.size() == 3);
}

TEST_CASE("mesh file: element referencing a missing node is a parse error") {
  test::TempDir dir("mesh");
  std::string s;
  for (int i = 0; i < 9; ++i) s += "v " + std::to_string(i) + " 0 " + std::to_string(i % 2) + "\n";
  s += "f 0 1 99\n";
  test::write_text(dir / "bad.mesh", s);
  CHECK_ERROR_CODE(load_mesh(dir / "bad.mesh"), ErrorCode::ParseError);
  test::write_text(dir / "bad2.mesh", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 x\n");
  CHECK_ERROR_CODE(load_mesh(dir / "bad2.mesh"), ErrorCode::ParseError);
  test::write_text(dir / "bad3.mesh", "v 0 0\n");
  CHECK_ERROR_CODE(load_mesh(dir / "bad3.mesh"), ErrorCode::ParseError);
}

TEST_CASE("mesh file: save and load round trip keeps coordinates, elements and roles") {
  test::TempDir dir("mesh");
  const ShellMesh m = grid(3, 2, 1.0 / 3.0, 0.7);
  NodeRoles r;
  r.labels.assign(m.node_count(), NodeRole::Free);
  r.labels[0] = NodeRole::BoundaryConstrained;
  r.labels[5] = NodeRole::Contact;
  save_mesh(dir / "m.mesh", m, &r);
  const MeshFile f = read_mesh_file(dir / "m.mesh");
  CHECK(f.mesh.coords() == m.coords());
  CHECK(f.mesh.elements() == m.elements());
  REQUIRE(f.roles.has_value());
  CHECK(f.roles->labels == r.labels);
  save_roles(dir / "m.roles", r);
  CHECK(load_roles(dir / "m.roles", m.node_count()).labels == r.labels);
}

TEST_CASE("mesh construction rejects degenerate and disconnected input") {
  std::vector<Vec3> c{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {5, 5, 0}, {6, 5, 0}, {5, 6, 0}};
  CHECK_ERROR_CODE(ShellMesh(c, {Element::tri(0, 1, 1)}), ErrorCode::DegenerateElement);
  CHECK_ERROR_CODE(ShellMesh(c, {Element::tri(0, 1, 2), Element::tri(3, 4, 5)}), ErrorCode::DisconnectedMesh);
}

TEST_CASE("edge set is the union of element sides, each pair once") {
  const ShellMesh m = grid(3, 4, 1.0, 1.0, true);
  std::set<std::pair<int, int>> brute;
  for (const auto& el : m.elements())
    for (int k = 0; k < 3; ++k) {
      int a = el.v[k], b = el.v[(k + 1) % 3];
      brute.insert({std::min(a, b), std::max(a, b)});
    }
  std::set<std::pair<int, int>> got;
  for (const auto& e : m.edges()) {
    CHECK(e.a < e.b);
    got.insert({e.a, e.b});
  }
  CHECK(got == brute);
  CHECK(static_cast<std::size_t>(m.edge_count()) == brute.size());
}

TEST_CASE("boundary loop of a 3x3 node grid runs clockwise from the bottom-left corner") {
  const ShellMesh m = grid(2, 2);
  const BoundaryLoop loop = extract_boundary_loop(m);
  CHECK(loop.nodes == std::vector<int>{0, 3, 6, 7, 8, 5, 2, 1});
  CHECK(loop.clockwise);
}

TEST_CASE("two quads sharing one vertex are rejected") {
  std::vector<Vec3> c{{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {2, 1, 0}, {2, 2, 0}, {1, 2, 0}};
  std::vector<Element> e{Element::quad(0, 1, 2, 3), Element::quad(2, 4, 5, 6)};
  // brute force: the shared vertex touches four boundary edges, so no single simple cycle exists
  std::map<int, int> degree;
  for (const auto& el : e)
    for (int k = 0; k < 4; ++k) {
      degree[el.v[k]]++;
      degree[el.v[(k + 1) % 4]]++;
    }
  CHECK(degree[2] == 4);
  bool thrown = false;
  try {
    extract_boundary_loop(ShellMesh(c, e));
  } catch (const Error& err) {
    thrown = true;
    CHECK((err.code() == ErrorCode::NonManifoldEdge || err.code() == ErrorCode::DisconnectedMesh));
  }
  CHECK(thrown);
}

TEST_CASE("boundary loop properties on random grids") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int nx = 2 + static_cast<int>(rng() % 6), ny = 2 + static_cast<int>(rng() % 6);
    const ShellMesh m = grid(nx, ny, 1.0 + trial, 2.0, trial % 2 == 0);
    const BoundaryLoop loop = extract_boundary_loop(m);
    const std::set<int> brute = boundary_nodes_brute(m);
    std::set<int> seen(loop.nodes.begin(), loop.nodes.end());
    CHECK(seen.size() == loop.nodes.size());
    CHECK(seen == brute);
    CHECK(static_cast<int>(brute.size()) + (nx - 1) * (ny - 1) == m.node_count());
    for (int p = 0; p < loop.size(); ++p) {
      const int a = loop.nodes[p], b = loop.nodes[(p + 1) % loop.size()];
      const auto nb = m.neighbors(a);
      CHECK(std::find(nb.begin(), nb.end(), b) != nb.end());
    }
    CHECK(extract_boundary_loop(m).nodes == loop.nodes);
  }
}

TEST_CASE("rectangle corners") {
  const ShellMesh m = grid(4, 3, 2.0, 1.0);
  const BoundaryLoop loop = extract_boundary_loop(m);
  std::set<int> corners;
  for (int p : detect_corners(loop, m, 4)) corners.insert(loop.nodes[p]);
  CHECK(corners == std::set<int>{0, 4, 15, 19});
}

TEST_CASE("regular octagon corners are its vertices") {
  const ShellMesh m = test::polygon_fan(8, 0.1);
  const BoundaryLoop loop = extract_boundary_loop(m);
  auto pos = detect_corners(loop, m, 8);
  std::set<int> nodes;
  for (int p : pos) nodes.insert(loop.nodes[p]);
  CHECK(nodes == std::set<int>{1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(std::is_sorted(pos.begin(), pos.end()));
}

TEST_CASE("circle boundary has no distinguishable corners") {
  const ShellMesh m = test::polygon_fan(64);
  const BoundaryLoop loop = extract_boundary_loop(m);
  const auto turn = turning_angles(loop, m);
  const auto [lo, hi] = std::minmax_element(turn.begin(), turn.end());
  CHECK(*hi - *lo < 1e-9);
  CHECK_ERROR_CODE(detect_corners(loop, m, 4), ErrorCode::AmbiguousCorners);
}

TEST_CASE("corner nodes are invariant under rigid rotation") {
  // an L-ish plate: rectangle with one sheared corner so all four corners differ
  ShellMesh base = grid(5, 4, 3.0, 2.0);
  auto c = base.coords();
  c[29] += Vec3(0.4, 0.3, 0.0);
  base = base.with_coords(c);
  const BoundaryLoop loop0 = extract_boundary_loop(base);
  std::set<int> ref;
  for (int p : detect_corners(loop0, base, 4)) ref.insert(loop0.nodes[p]);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 10; ++t) {
    const Eigen::Matrix3d R =
        Eigen::Quaterniond(Eigen::Vector4d(u(rng), u(rng), u(rng), u(rng)).normalized()).toRotationMatrix();
    const Vec3 shift(u(rng) * 10, u(rng) * 10, u(rng) * 10);
    auto rc = base.coords();
    for (auto& p : rc) p = R * p + shift;
    const ShellMesh m = base.with_coords(rc);
    const BoundaryLoop loop = extract_boundary_loop(m);
    std::set<int> got;
    for (int p : detect_corners(loop, m, 4)) got.insert(loop.nodes[p]);
    CHECK(got == ref);
  }
}

TEST_CASE("role classification") {
  const ShellMesh strip = grid(2, 8, 1.0, 8.0);
  RoleSpec spec;
  spec.axis = 1;
  spec.contact_center = Vec3(0.5, 4.0, 0.0);
  spec.contact_radius = 0.1;
  const NodeRoles r = classify_nodes(strip, spec);
  for (int i = 0; i < strip.node_count(); ++i) {
    const int row = i / 3;
    if (row == 0 || row == 8) CHECK(r.labels[i] == NodeRole::BoundaryConstrained);
    else if (i == 4 * 3 + 1) CHECK(r.labels[i] == NodeRole::Contact);
    else CHECK(r.labels[i] == NodeRole::Free);
  }
  CHECK(r.count(NodeRole::Contact) == 1);

  spec.contact_center = Vec3(0.5, 4.5, 0.0);
  spec.contact_radius = 0.0;
  CHECK_ERROR_CODE(classify_nodes(strip, spec), ErrorCode::EmptyRole);
}

TEST_CASE("topology digest ignores coordinates") {
  const ShellMesh a = grid(3, 3);
  auto c = a.coords();
  for (auto& p : c) p *= 2.0;
  CHECK(a.with_coords(c).topology_digest() == a.topology_digest());
  CHECK(grid(3, 4).topology_digest() != a.topology_digest());
}
