#include "mmg/mesh.hpp"

#include "mmg/error.hpp"
#include "mmg/io.hpp"

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace mmg {

namespace {

std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

}  // namespace

ShellMesh::ShellMesh(std::vector<Vec3> coords, std::vector<Element> elements)
    : coords_(std::move(coords)), elements_(std::move(elements)) {
  const int n = node_count();
  for (std::size_t e = 0; e < elements_.size(); ++e) {
    const auto& el = elements_[e];
    if (el.size != 3 && el.size != 4)
      fail(ErrorCode::InvalidArgument, fmt::format("element {} has {} vertices", e, el.size));
    for (int k = 0; k < el.size; ++k) {
      if (el.v[k] < 0 || el.v[k] >= n)
        fail(ErrorCode::IndexOutOfRange,
             fmt::format("element {} references node {} of {}", e, el.v[k], n));
      for (int m = 0; m < k; ++m)
        if (el.v[m] == el.v[k])
          fail(ErrorCode::DegenerateElement, fmt::format("element {} repeats node {}", e, el.v[k]));
    }
  }

  std::vector<std::uint64_t> keys;
  keys.reserve(elements_.size() * 4);
  for (const auto& el : elements_)
    for (int k = 0; k < el.size; ++k) keys.push_back(edge_key(el.v[k], el.v[(k + 1) % el.size]));
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  edges_.reserve(keys.size());
  for (auto key : keys)
    edges_.push_back({static_cast<int>(key >> 32), static_cast<int>(key & 0xffffffffu)});

  offsets_.assign(n + 1, 0);
  for (const auto& e : edges_) {
    ++offsets_[e.a + 1];
    ++offsets_[e.b + 1];
  }
  std::partial_sum(offsets_.begin(), offsets_.end(), offsets_.begin());
  adjacency_.resize(edges_.size() * 2);
  std::vector<int> fill(offsets_.begin(), offsets_.end() - 1);
  for (const auto& e : edges_) {
    adjacency_[fill[e.a]++] = e.b;
    adjacency_[fill[e.b]++] = e.a;
  }
  for (int i = 0; i < n; ++i)
    std::sort(adjacency_.begin() + offsets_[i], adjacency_.begin() + offsets_[i + 1]);

  if (n == 0) return;
  std::vector<char> seen(n, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int visited = 1;
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    for (int j : neighbors(i))
      if (!seen[j]) {
        seen[j] = 1;
        ++visited;
        stack.push_back(j);
      }
  }
  if (visited != n)
    fail(ErrorCode::DisconnectedMesh, fmt::format("{} of {} nodes reachable from node 0", visited, n));
}

std::vector<Triangle> ShellMesh::triangles() const {
  std::vector<Triangle> tris;
  tris.reserve(elements_.size() * 2);
  for (const auto& el : elements_) {
    if (el.size == 3) {
      tris.push_back({el.v[0], el.v[1], el.v[2]});
      continue;
    }
    const int p = static_cast<int>(std::min_element(el.v.begin(), el.v.end()) - el.v.begin());
    const int a = el.v[p], b = el.v[(p + 1) % 4], c = el.v[(p + 2) % 4], d = el.v[(p + 3) % 4];
    tris.push_back({a, b, c});
    tris.push_back({a, c, d});
  }
  return tris;
}

ShellMesh ShellMesh::with_coords(std::vector<Vec3> coords) const {
  if (static_cast<int>(coords.size()) != node_count())
    fail(ErrorCode::ShapeMismatch,
         fmt::format("with_coords: {} coordinates for {} nodes", coords.size(), node_count()));
  ShellMesh m = *this;
  m.coords_ = std::move(coords);
  return m;
}

double ShellMesh::mean_edge_length() const {
  if (edges_.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& e : edges_) sum += (coords_[e.a] - coords_[e.b]).norm();
  return sum / static_cast<double>(edges_.size());
}

std::uint64_t ShellMesh::topology_digest() const {
  Fnv1a h;
  h.value(node_count());
  for (const auto& el : elements_) {
    h.value(el.size);
    for (int k = 0; k < el.size; ++k) h.value(el.v[k]);
  }
  for (const auto& e : edges_) {
    h.value(e.a);
    h.value(e.b);
  }
  return h.digest();
}

int NodeRoles::count(NodeRole r) const {
  return static_cast<int>(std::count(labels.begin(), labels.end(), r));
}

PlaneFrame dominant_plane(const ShellMesh& mesh) {
  Vec3 n = Vec3::Zero();
  const auto& x = mesh.coords();
  for (const auto& t : mesh.triangles()) n += (x[t[1]] - x[t[0]]).cross(x[t[2]] - x[t[0]]);

  double scale = 0.0;
  for (const auto& t : mesh.triangles())
    scale += 0.5 * (x[t[1]] - x[t[0]]).cross(x[t[2]] - x[t[0]]).norm();
  if (n.norm() <= 1e-9 * std::max(scale, 1e-300)) {
    // Closed-ish or inconsistently wound surface: fall back to the
    // smallest-variance principal axis.
    Vec3 c = Vec3::Zero();
    for (const auto& p : x) c += p;
    c /= static_cast<double>(x.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& p : x) cov += (p - c) * (p - c).transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    n = es.eigenvectors().col(0);
  }
  n.normalize();

  int dom = 0;
  for (int k = 1; k < 3; ++k)
    if (std::abs(n[k]) > std::abs(n[dom])) dom = k;
  if (n[dom] < 0) n = -n;

  PlaneFrame f;
  f.normal = n;
  Vec3 axis = Vec3::Unit((dom + 1) % 3);
  f.e1 = (axis - axis.dot(n) * n).normalized();
  f.e2 = n.cross(f.e1);
  return f;
}

BoundaryLoop extract_boundary_loop(const ShellMesh& mesh) {
  const int n = mesh.node_count();
  std::unordered_map<std::uint64_t, int> incidence;
  incidence.reserve(mesh.elements().size() * 4);
  for (const auto& el : mesh.elements())
    for (int k = 0; k < el.size; ++k) ++incidence[edge_key(el.v[k], el.v[(k + 1) % el.size])];

  std::vector<std::vector<int>> bnb(n);
  int boundary_edges = 0;
  for (const auto& e : mesh.edges()) {
    const int c = incidence[edge_key(e.a, e.b)];
    if (c > 2)
      fail(ErrorCode::NonManifoldEdge, fmt::format("edge ({}, {}) lies on {} elements", e.a, e.b, c));
    if (c == 1) {
      bnb[e.a].push_back(e.b);
      bnb[e.b].push_back(e.a);
      ++boundary_edges;
    }
  }
  if (boundary_edges == 0) fail(ErrorCode::NonDiskTopology, "mesh has no boundary");
  for (int i = 0; i < n; ++i)
    if (!bnb[i].empty() && bnb[i].size() != 2)
      fail(ErrorCode::NonManifoldEdge,
           fmt::format("non-manifold boundary vertex {} with {} boundary edges", i, bnb[i].size()));

  std::vector<char> used(n, 0);
  std::vector<std::vector<int>> cycles;
  for (int s = 0; s < n; ++s) {
    if (bnb[s].empty() || used[s]) continue;
    std::vector<int> cyc{s};
    used[s] = 1;
    int prev = s, cur = std::min(bnb[s][0], bnb[s][1]);
    while (cur != s) {
      cyc.push_back(cur);
      used[cur] = 1;
      const int next = bnb[cur][0] == prev ? bnb[cur][1] : bnb[cur][0];
      prev = cur;
      cur = next;
    }
    cycles.push_back(std::move(cyc));
  }
  if (cycles.size() != 1)
    fail(ErrorCode::NonDiskTopology, fmt::format("found {} boundary loops", cycles.size()));
  const int euler = mesh.node_count() - mesh.edge_count() + mesh.element_count();
  if (euler != 1) fail(ErrorCode::NonDiskTopology, fmt::format("Euler characteristic {}", euler));

  const PlaneFrame frame = dominant_plane(mesh);
  std::vector<int> loop = std::move(cycles.front());
  const int m = static_cast<int>(loop.size());
  double area2 = 0.0;
  for (int k = 0; k < m; ++k) {
    const Vec2 p = frame.project(mesh.coord(loop[k]));
    const Vec2 q = frame.project(mesh.coord(loop[(k + 1) % m]));
    area2 += p.x() * q.y() - q.x() * p.y();
  }
  if (area2 > 0) std::reverse(loop.begin(), loop.end());

  int start = 0;
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < m; ++k) {
    const Vec2 p = frame.project(mesh.coord(loop[k]));
    const double key = p.x() + p.y();
    if (key < best || (key == best && loop[k] < loop[start])) {
      best = key;
      start = k;
    }
  }
  std::rotate(loop.begin(), loop.begin() + start, loop.end());
  return BoundaryLoop{std::move(loop), true};
}

std::vector<double> turning_angles(const BoundaryLoop& loop, const ShellMesh& mesh) {
  const PlaneFrame frame = dominant_plane(mesh);
  const int m = loop.size();
  std::vector<Vec2> p(m);
  for (int k = 0; k < m; ++k) p[k] = frame.project(mesh.coord(loop.nodes[k]));

  double scale = 0.0;
  for (int k = 0; k < m; ++k) scale = std::max(scale, (p[(k + 1) % m] - p[k]).norm());
  const double eps = 1e-12 * std::max(scale, 1e-300);

  std::vector<double> angles(m, 0.0);
  for (int k = 0; k < m; ++k) {
    // Skip coincident projected neighbours so the angle is well defined.
    int a = (k - 1 + m) % m, b = (k + 1) % m;
    for (int guard = 0; guard < m && (p[k] - p[a]).norm() <= eps; ++guard) a = (a - 1 + m) % m;
    for (int guard = 0; guard < m && (p[b] - p[k]).norm() <= eps; ++guard) b = (b + 1) % m;
    const Vec2 din = p[k] - p[a];
    const Vec2 dout = p[b] - p[k];
    if (din.norm() <= eps || dout.norm() <= eps) continue;
    const double cross = din.x() * dout.y() - din.y() * dout.x();
    angles[k] = std::abs(std::atan2(cross, din.dot(dout)));
  }
  return angles;
}

std::vector<int> detect_corners(const BoundaryLoop& loop, const ShellMesh& mesh, int count) {
  if (count != 4 && count != 8)
    fail(ErrorCode::InvalidArgument, fmt::format("corner count must be 4 or 8, got {}", count));
  if (loop.size() < count)
    fail(ErrorCode::InvalidArgument,
         fmt::format("loop of {} nodes cannot hold {} corners", loop.size(), count));
  const auto angles = turning_angles(loop, mesh);
  std::vector<int> order(angles.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return angles[a] > angles[b]; });
  if (loop.size() > count &&
      angles[order[count - 1]] - angles[order[count]] <= kCornerTieTolerance)
    fail(ErrorCode::AmbiguousCorners,
         fmt::format("corner {} and {} have turning angles {:.9f} and {:.9f}", count, count + 1,
                     angles[order[count - 1]], angles[order[count]]));
  std::vector<int> corners(order.begin(), order.begin() + count);
  std::sort(corners.begin(), corners.end());
  return corners;
}

NodeRoles classify_nodes(const ShellMesh& mesh, const RoleSpec& spec) {
  if (spec.axis < 0 || spec.axis > 2) fail(ErrorCode::InvalidArgument, "role axis must be 0, 1 or 2");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& p : mesh.coords()) {
    lo = std::min(lo, p[spec.axis]);
    hi = std::max(hi, p[spec.axis]);
  }
  const double extent = hi - lo;
  NodeRoles roles;
  roles.labels.assign(mesh.node_count(), NodeRole::Free);
  for (int i = 0; i < mesh.node_count(); ++i) {
    const Vec3& p = mesh.coord(i);
    const double t = extent > 0 ? (p[spec.axis] - lo) / extent : 0.5;
    if (t <= spec.bottom_band || t >= 1.0 - spec.top_band)
      roles.labels[i] = NodeRole::BoundaryConstrained;
    if ((p - spec.contact_center).norm() <= spec.contact_radius) roles.labels[i] = NodeRole::Contact;
  }
  if (roles.count(NodeRole::BoundaryConstrained) == 0)
    fail(ErrorCode::EmptyRole, "no node falls in the boundary bands");
  if (roles.count(NodeRole::Contact) == 0)
    fail(ErrorCode::EmptyRole, "no node falls in the contact region");
  return roles;
}

std::string_view to_string(NodeRole role) {
  switch (role) {
    case NodeRole::Free: return "Free";
    case NodeRole::BoundaryConstrained: return "Boundary";
    case NodeRole::Contact: return "Contact";
  }
  return "Free";
}

NodeRole parse_role(std::string_view s) {
  if (s == "Free") return NodeRole::Free;
  if (s == "Boundary" || s == "BoundaryConstrained") return NodeRole::BoundaryConstrained;
  if (s == "Contact") return NodeRole::Contact;
  fail(ErrorCode::ParseError, "unknown role '" + std::string(s) + "'");
}

namespace {

struct RawMesh {
  std::vector<Vec3> coords;
  std::vector<Element> elements;
  std::vector<std::pair<long, NodeRole>> roles;
};

RawMesh parse_lines(std::istream& in, const std::string& source) {
  RawMesh raw;
  std::string line;
  int lineno = 0;
  auto bad = [&](const std::string& why) {
    fail(ErrorCode::ParseError, fmt::format("{}:{}: {}", source, lineno, why));
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "#") {
      std::string kind;
      if (ls >> kind && kind == "role") {
        long idx;
        std::string label;
        if (!(ls >> idx >> label)) bad("malformed role line");
        raw.roles.emplace_back(idx, parse_role(label));
      }
      continue;
    }
    if (tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ls >> p.x() >> p.y() >> p.z())) bad("malformed vertex line");
      raw.coords.push_back(p);
    } else if (tag == "f") {
      std::vector<long> idx;
      long k;
      while (ls >> k) idx.push_back(k);
      if (!ls.eof()) bad("non-integer element index");
      if (idx.size() != 3 && idx.size() != 4) bad("elements must have 3 or 4 vertices");
      Element el;
      el.size = static_cast<int>(idx.size());
      for (int q = 0; q < el.size; ++q) {
        if (idx[q] < 0 || idx[q] >= std::numeric_limits<int>::max()) bad("element index out of range");
        el.v[q] = static_cast<int>(idx[q]);
      }
      raw.elements.push_back(el);
    } else {
      bad("unknown record '" + tag + "'");
    }
  }
  return raw;
}

NodeRoles roles_from(const std::vector<std::pair<long, NodeRole>>& entries, int n,
                     const std::string& source) {
  NodeRoles roles;
  roles.labels.assign(n, NodeRole::Free);
  for (const auto& [idx, role] : entries) {
    if (idx < 0 || idx >= n)
      fail(ErrorCode::ParseError, fmt::format("{}: role for node {} of {}", source, idx, n));
    roles.labels[idx] = role;
  }
  return roles;
}

std::string format_mesh(const ShellMesh& mesh, const NodeRoles* roles) {
  std::string out;
  out.reserve(static_cast<std::size_t>(mesh.node_count()) * 64);
  for (const auto& p : mesh.coords()) out += fmt::format("v {:.17g} {:.17g} {:.17g}\n", p.x(), p.y(), p.z());
  for (const auto& el : mesh.elements()) {
    out += "f";
    for (int v : el.nodes()) out += fmt::format(" {}", v);
    out += '\n';
  }
  if (roles)
    for (int i = 0; i < roles->size(); ++i)
      if (roles->labels[i] != NodeRole::Free)
        out += fmt::format("# role {} {}\n", i, to_string(roles->labels[i]));
  return out;
}

}  // namespace

MeshFile read_mesh_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ParseError, "cannot open mesh file " + path.string());
  RawMesh raw = parse_lines(in, path.string());
  const int n = static_cast<int>(raw.coords.size());
  for (std::size_t e = 0; e < raw.elements.size(); ++e)
    for (int v : raw.elements[e].nodes())
      if (v >= n)
        fail(ErrorCode::ParseError,
             fmt::format("{}: element {} references node {} of {}", path.string(), e, v, n));
  MeshFile file{ShellMesh(std::move(raw.coords), std::move(raw.elements)), std::nullopt};
  if (!raw.roles.empty()) file.roles = roles_from(raw.roles, n, path.string());
  return file;
}

ShellMesh load_mesh(const std::filesystem::path& path) { return read_mesh_file(path).mesh; }

void save_mesh(const std::filesystem::path& path, const ShellMesh& mesh, const NodeRoles* roles) {
  write_file_atomic(path, format_mesh(mesh, roles));
}

NodeRoles load_roles(const std::filesystem::path& path, int node_count) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ParseError, "cannot open role file " + path.string());
  RawMesh raw = parse_lines(in, path.string());
  return roles_from(raw.roles, node_count, path.string());
}

void save_roles(const std::filesystem::path& path, const NodeRoles& roles) {
  std::string out;
  for (int i = 0; i < roles.size(); ++i)
    out += fmt::format("# role {} {}\n", i, to_string(roles.labels[i]));
  write_file_atomic(path, out);
}

}  // namespace mmg
