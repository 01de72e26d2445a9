#include "mmg/datagen.hpp"

#include "mmg/error.hpp"
#include "mmg/io.hpp"
#include "mmg/training.hpp"

#include <Eigen/Geometry>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace mmg {

namespace fs = std::filesystem;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

/// Parameter values covering [0, 1] with every break included; `intervals`
/// are shared out over the spans by largest remainder, at least one each.
std::vector<double> allocate(const std::vector<double>& breaks, int intervals) {
  const int spans = static_cast<int>(breaks.size()) - 1;
  intervals = std::max(intervals, spans);
  std::vector<int> count(spans, 1);
  int left = intervals - spans;
  std::vector<std::pair<double, int>> rem;
  for (int s = 0; s < spans; ++s) {
    const double want = (breaks[s + 1] - breaks[s]) * intervals - 1.0;
    const int extra = std::clamp(static_cast<int>(std::floor(want)), 0, left);
    count[s] += extra;
    left -= extra;
    rem.emplace_back(-(want - std::floor(want)), s);
  }
  std::sort(rem.begin(), rem.end());
  for (int i = 0; left > 0; i = (i + 1) % spans, --left) ++count[rem[i].second];
  std::vector<double> out{breaks.front()};
  for (int s = 0; s < spans; ++s)
    for (int i = 1; i <= count[s]; ++i)
      out.push_back(i == count[s] ? breaks[s + 1] : breaks[s] + (breaks[s + 1] - breaks[s]) * i / count[s]);
  return out;
}

std::vector<double> uniform(int intervals) {
  std::vector<double> u(intervals + 1);
  for (int i = 0; i <= intervals; ++i) u[i] = static_cast<double>(i) / intervals;
  return u;
}

// Hat section: flange, wall, crown, wall, flange over u in [0, 1].
struct Profile {
  double crown_half;
  double depth;
  double draft;  // radians
  double flange;

  Vec2 at(double u) const {
    static constexpr double f[] = {0.0, 3.0 / 16, 6.0 / 16, 10.0 / 16, 13.0 / 16, 1.0};
    const double wall = depth * std::tan(draft);
    const double xs[] = {-(crown_half + wall + flange), -(crown_half + wall), -crown_half, crown_half,
                         crown_half + wall, crown_half + wall + flange};
    const double zs[] = {0.0, 0.0, depth, depth, 0.0, 0.0};
    int s = 0;
    while (s < 4 && u > f[s + 1]) ++s;
    const double w = (u - f[s]) / (f[s + 1] - f[s]);
    return {xs[s] + w * (xs[s + 1] - xs[s]), zs[s] + w * (zs[s + 1] - zs[s])};
  }
};

template <typename F>
ShellMesh grid_mesh(const std::vector<double>& us, const std::vector<double>& ts, F&& surface) {
  const int nu = static_cast<int>(us.size());
  const int nt = static_cast<int>(ts.size());
  std::vector<Vec3> coords;
  coords.reserve(static_cast<std::size_t>(nu) * nt);
  for (int j = 0; j < nt; ++j)
    for (int i = 0; i < nu; ++i) coords.push_back(surface(us[i], ts[j]));
  std::vector<Element> elements;
  for (int j = 0; j + 1 < nt; ++j)
    for (int i = 0; i + 1 < nu; ++i) {
      const int a = j * nu + i;
      elements.push_back(Element::quad(a, a + 1, a + nu + 1, a + nu));
    }
  return ShellMesh(std::move(coords), std::move(elements));
}

int nearest_xy(const ShellMesh& mesh, double x, double y) {
  int best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (int i = 0; i < mesh.node_count(); ++i) {
    const Vec3& p = mesh.coord(i);
    const double d = (p.x() - x) * (p.x() - x) + (p.y() - y) * (p.y() - y);
    if (d < bd) {
      bd = d;
      best = i;
    }
  }
  return best;
}

void check_bound(const char* name, double v, double lo, double hi) {
  const double tol = 1e-9 * std::max({1.0, std::abs(lo), std::abs(hi)});
  if (!(v >= lo - tol && v <= hi + tol))
    fail(ErrorCode::ParamOutOfBounds, fmt::format("{} = {} outside [{}, {}]", name, v, lo, hi));
}

}  // namespace

std::string_view to_string(CaseKind c) {
  switch (c) {
    case CaseKind::BPillarA1: return "bpillar_a1";
    case CaseKind::BPillarA2: return "bpillar_a2";
    case CaseKind::BPillarA3: return "bpillar_a3";
    case CaseKind::UChannel: return "uchannel";
  }
  return "?";
}

CaseKind parse_case(std::string_view s) {
  for (auto c : {CaseKind::BPillarA1, CaseKind::BPillarA2, CaseKind::BPillarA3, CaseKind::UChannel})
    if (to_string(c) == s) return c;
  fail(ErrorCode::InvalidArgument, fmt::format("unknown case '{}'", s));
}

bool is_bpillar(CaseKind c) { return c != CaseKind::UChannel; }

DomainKind default_domain(CaseKind c) { return is_bpillar(c) ? DomainKind::Octagon : DomainKind::Square; }

std::vector<ParamBound> case_bounds(CaseKind c) {
  if (c == CaseKind::UChannel) {
    const double m = 200.0;
    return {{"x_l", 0.25 * m, 0.75 * m},    {"x_r", 0.25 * m, 0.75 * m},      {"l_l", 0.375 * m, 0.5 * m},
            {"l_r", 0.375 * m, 0.5 * m},    {"y_m", 0.2 * m, 0.375 * m},      {"y_l", 0.125 * m, 0.5625 * m},
            {"y_r", 0.125 * m, 0.5625 * m}, {"y_fl", 0.05 * m, 0.15 * m},     {"z_m", 0.167 * m, 0.3 * m},
            {"z_l", 0.111 * m, 0.333 * m},  {"z_r", 0.111 * m, 0.333 * m},    {"alpha_l", 0.0, 30.0},
            {"alpha_r", 0.0, 30.0},         {"beta_l", 5.0, 15.0},            {"beta_r", 5.0, 15.0},
            {"beta_m", 5.0, 15.0}};
  }
  const BPillarDims d;
  const bool x = c != CaseKind::BPillarA1;
  const bool y = c == CaseKind::BPillarA3;
  return {{"x_morph", x ? -0.05 * d.x_extent() : 0.0, x ? 0.05 * d.x_extent() : 0.0},
          {"y_morph", 0.0, y ? 0.1 * d.y_extent() : 0.0},
          {"z_morph", -0.1 * d.z_extent(), 0.1 * d.z_extent()},
          {"control_point", 0.5, 3.5}};
}

double BPillarDims::x_extent() const { return 2.0 * (top_half + depth * std::tan(draft_deg * kDeg) + flange); }

BPillarParams BPillarParams::from_row(const std::vector<double>& row) {
  if (row.size() != 4) fail(ErrorCode::ShapeMismatch, "pillar parameter row needs 4 values");
  return {row[0], row[1], row[2], std::clamp(static_cast<int>(std::lround(row[3])), 1, 3)};
}

void validate(const BPillarParams& p, const BPillarDims& d) {
  check_bound("x_morph", p.x_morph, -0.05 * d.x_extent(), 0.05 * d.x_extent());
  check_bound("y_morph", p.y_morph, 0.0, 0.1 * d.y_extent());
  check_bound("z_morph", p.z_morph, -0.1 * d.z_extent(), 0.1 * d.z_extent());
  if (p.control_point < 1 || p.control_point > 3)
    fail(ErrorCode::ParamOutOfBounds, fmt::format("control point {} not in {{1,2,3}}", p.control_point));
}

ShellMesh bpillar_mesh(const BPillarParams& p, const GridResolution& res, const BPillarDims& d) {
  validate(p, d);
  if (res.across < 2 || res.along < 3) fail(ErrorCode::InvalidArgument, "pillar grid too coarse");
  const double tc = 0.25 * p.control_point;
  const auto surface = [&](double u, double t) {
    const double r = clamp01((t - d.t1) / (d.t2 - d.t1));
    const Profile prof{d.crown_half + (d.top_half - d.crown_half) * r, d.depth, d.draft_deg * kDeg, d.flange};
    const Vec2 xz = prof.at(u);
    const double off = std::abs(t - tc) / d.bump_radius;
    const double bump = off < 1.0 ? 0.5 * (1.0 + std::cos(std::numbers::pi * off)) : 0.0;
    return Vec3(xz.x() + p.x_morph * r, d.height * t + p.y_morph * r, xz.y() + p.z_morph * bump);
  };
  return grid_mesh(uniform(res.across), allocate({0.0, d.t1, d.t2, 1.0}, res.along), surface);
}

GeneratedPart gen_bpillar_like(const BPillarParams& p, const GridResolution& res, const BPillarDims& d) {
  GeneratedPart out{bpillar_mesh(p, res, d), {}};
  RoleSpec spec;
  spec.axis = 1;
  spec.contact_center = out.mesh.coord(nearest_xy(out.mesh, 0.0, d.height / 3.0));
  spec.contact_radius = d.contact_radius;
  out.roles = classify_nodes(out.mesh, spec);
  return out;
}

UChannelParams UChannelParams::from_row(const std::vector<double>& r) {
  if (r.size() != 16) fail(ErrorCode::ShapeMismatch, "channel parameter row needs 16 values");
  UChannelParams p;
  p.x_l = r[0], p.x_r = r[1], p.l_l = r[2], p.l_r = r[3];
  p.y_m = r[4], p.y_l = r[5], p.y_r = r[6], p.y_fl = r[7];
  p.z_m = r[8], p.z_l = r[9], p.z_r = r[10];
  p.alpha_l = r[11], p.alpha_r = r[12];
  p.beta_l = r[13], p.beta_r = r[14], p.beta_m = r[15];
  return p;
}

void validate(const UChannelParams& p) {
  if (p.x_m != 200.0) fail(ErrorCode::ParamOutOfBounds, "x_m is fixed at 200");
  const auto b = case_bounds(CaseKind::UChannel);
  const double v[] = {p.x_l, p.x_r, p.l_l,  p.l_r,     p.y_m,     p.y_l,  p.y_r,  p.y_fl,
                      p.z_m, p.z_l, p.z_r, p.alpha_l, p.alpha_r, p.beta_l, p.beta_r, p.beta_m};
  for (std::size_t i = 0; i < b.size(); ++i) check_bound(b[i].name.c_str(), v[i], b[i].lo, b[i].hi);
}

ShellMesh uchannel_mesh(const UChannelParams& p, const GridResolution& res) {
  validate(p);
  if (res.across < 2 || res.along < 5) fail(ErrorCode::InvalidArgument, "channel grid too coarse");
  // Node rows are shared out over the five regions with fixed nominal
  // weights, so the topology does not depend on the parameters.
  const std::vector<double> nominal = {0.0, 9.0 / 48, 15.0 / 48, 33.0 / 48, 39.0 / 48, 1.0};
  const double run_l = p.l_l * std::cos(p.alpha_l * kDeg);
  const double run_r = p.l_r * std::cos(p.alpha_r * kDeg);
  const double rise_l = p.l_l * std::sin(p.alpha_l * kDeg);
  const double rise_r = p.l_r * std::sin(p.alpha_r * kDeg);
  const double xs[] = {0.0, p.x_l, p.x_l + run_l, p.x_l + run_l + p.x_m, p.x_l + run_l + p.x_m + run_r,
                       p.x_l + run_l + p.x_m + run_r + p.x_r};
  const double es[] = {rise_l, rise_l, 0.0, 0.0, rise_r, rise_r};
  const Profile left{p.y_l / 2, p.z_l, p.beta_l * kDeg, p.y_fl};
  const Profile mid{p.y_m / 2, p.z_m, p.beta_m * kDeg, p.y_fl};
  const Profile right{p.y_r / 2, p.z_r, p.beta_r * kDeg, p.y_fl};
  const Profile* prof[] = {&left, &left, &mid, &mid, &right, &right};

  const auto surface = [&](double u, double t) {
    int s = 0;
    while (s < 4 && t > nominal[s + 1] + 1e-12) ++s;
    const double w = clamp01((t - nominal[s]) / (nominal[s + 1] - nominal[s]));
    const Vec2 a = prof[s]->at(u);
    const Vec2 b = prof[s + 1]->at(u);
    const Vec2 yz = a + w * (b - a);
    return Vec3(xs[s] + w * (xs[s + 1] - xs[s]), yz.x(), es[s] + w * (es[s + 1] - es[s]) + yz.y());
  };
  return grid_mesh(uniform(res.across), allocate(nominal, res.along), surface);
}

GeneratedPart gen_uchannel(const UChannelParams& p, const GridResolution& res) {
  GeneratedPart out{uchannel_mesh(p, res), {}};
  check_projection(out.mesh);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& c : out.mesh.coords()) {
    lo = std::min(lo, c.x());
    hi = std::max(hi, c.x());
  }
  RoleSpec spec;
  spec.axis = 0;
  spec.contact_center = out.mesh.coord(nearest_xy(out.mesh, lo + (hi - lo) / 3.0, 0.0));
  spec.contact_radius = kUChannelContactRadius;
  out.roles = classify_nodes(out.mesh, spec);
  return out;
}

void check_projection(const ShellMesh& mesh) {
  const PlaneFrame frame = dominant_plane(mesh);
  int pos = 0, neg = 0;
  const double floor = 1e-12 * mesh.mean_edge_length() * mesh.mean_edge_length();
  for (const auto& t : mesh.triangles()) {
    const Vec2 a = frame.project(mesh.coord(t[0]));
    const Vec2 b = frame.project(mesh.coord(t[1]));
    const Vec2 c = frame.project(mesh.coord(t[2]));
    const double area = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    if (area > floor) ++pos;
    else if (area < -floor) ++neg;
    else fail(ErrorCode::SelfIntersecting, "projected triangle collapses");
  }
  if (pos && neg) fail(ErrorCode::SelfIntersecting, fmt::format("{} of {} projected triangles fold over",
                                                                std::min(pos, neg), pos + neg));
}

GeneratedPart generate_part(CaseKind c, const std::vector<double>& row, const GridResolution& res) {
  if (c == CaseKind::UChannel) return gen_uchannel(UChannelParams::from_row(row), res);
  return gen_bpillar_like(BPillarParams::from_row(row), res);
}

std::vector<ShellMesh> case_templates(CaseKind c, const GridResolution& res) {
  const GridResolution levels[] = {res, {8, 21}, {4, 9}, {2, 3}};
  std::vector<ShellMesh> out;
  for (const auto& r : levels)
    out.push_back(c == CaseKind::UChannel ? uchannel_mesh(UChannelParams{}, r) : bpillar_mesh(BPillarParams{}, r));
  return out;
}

OracleOptions oracle_options(CaseKind c) {
  OracleOptions o;
  o.axis = c == CaseKind::UChannel ? 0 : 1;
  return o;
}

RowMatrix oracle_deformation(const ShellMesh& mesh, const NodeRoles& roles, const OracleOptions& opt) {
  const int n = mesh.node_count();
  if (roles.size() != n) fail(ErrorCode::ShapeMismatch, "role and node counts differ");
  std::vector<int> contact, fixed;
  for (int i = 0; i < n; ++i) {
    if (roles.labels[i] == NodeRole::Contact) contact.push_back(i);
    if (roles.labels[i] == NodeRole::BoundaryConstrained) fixed.push_back(i);
  }

  Vec3 c = Vec3::Zero();
  for (int j : contact) c += mesh.coord(j);
  if (!contact.empty()) c /= static_cast<double>(contact.size());
  double rc = 0.0;
  for (int j : contact) rc = std::max(rc, (mesh.coord(j) - c).norm());
  const double sigma = 2.0 * std::max(rc, 1e-9);

  // Area-weighted vertex normals, oriented toward the dominant plane normal.
  std::vector<Vec3> normal(n, Vec3::Zero());
  Vec3 total = Vec3::Zero();
  for (const auto& t : mesh.triangles()) {
    const Vec3 a = (mesh.coord(t[1]) - mesh.coord(t[0])).cross(mesh.coord(t[2]) - mesh.coord(t[0]));
    for (int v : t) normal[v] += a;
    total += a;
  }
  const double orient = total.dot(dominant_plane(mesh).normal) < 0 ? -1.0 : 1.0;

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& p : mesh.coords()) {
    lo = std::min(lo, p[opt.axis]);
    hi = std::max(hi, p[opt.axis]);
  }
  const double extent = std::max(hi - lo, 1e-12);
  const double ramp = opt.ramp_fraction * extent;
  const double h = mesh.mean_edge_length();

  RowMatrix y = RowMatrix::Zero(n, 3);
  for (int i = 0; i < n; ++i) {
    const Vec3& x = mesh.coord(i);
    double db = std::numeric_limits<double>::infinity();
    for (int j : fixed) db = std::min(db, (x - mesh.coord(j)).norm());
    const double s = fixed.empty() ? 1.0 : clamp01(db / ramp);
    const double g = s * s * (3.0 - 2.0 * s);
    if (g == 0.0) continue;

    Vec3 avg = Vec3::Zero();
    for (int j : mesh.neighbors(i)) avg += mesh.coord(j);
    if (mesh.degree(i) > 0) avg /= mesh.degree(i);
    const double kappa = opt.curvature_scale * (x - avg).norm() / h;
    const double e = contact.empty() ? 0.0 : std::exp(-(x - c).squaredNorm() / (2.0 * sigma * sigma));
    const Vec3 nhat = normal[i].norm() > 0 ? Vec3(orient * normal[i].normalized()) : Vec3::UnitZ();
    const double bend = std::sin(std::numbers::pi * (x[opt.axis] - lo) / extent);
    const Vec3 v = -g * (opt.amplitude / (1.0 + kappa) * e * nhat + opt.bending * (1.0 - e) * bend * Vec3::UnitZ());
    y.row(i) = v.transpose();
  }
  return y;
}

std::string target_csv(const RowMatrix& y) {
  std::string out = "index,dx,dy,dz\n";
  for (Eigen::Index i = 0; i < y.rows(); ++i)
    out += fmt::format("{},{:.17g},{:.17g},{:.17g}\n", i, y(i, 0), y(i, 1), y(i, 2));
  return out;
}

RowMatrix parse_target_csv(std::string_view text, int node_count) {
  RowMatrix y(node_count, 3);
  std::vector<char> seen(node_count, 0);
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.starts_with("index")) continue;
    std::array<double, 4> v{};
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (int k = 0; k < 4; ++k) {
      auto [q, ec] = std::from_chars(p, end, v[k]);
      if (ec != std::errc{}) fail(ErrorCode::ParseError, fmt::format("target line {}: bad number", lineno));
      p = q;
      if (k < 3) {
        if (p == end || *p != ',') fail(ErrorCode::ParseError, fmt::format("target line {}: expected ','", lineno));
        ++p;
      }
    }
    const int idx = static_cast<int>(v[0]);
    if (idx < 0 || idx >= node_count || idx != v[0])
      fail(ErrorCode::ParseError, fmt::format("target line {}: index {} out of range", lineno, v[0]));
    y.row(idx) << v[1], v[2], v[3];
    seen[idx] = 1;
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end())
    fail(ErrorCode::ParseError, "target file does not cover every node");
  return y;
}

RowMatrix load_target(const fs::path& path, int node_count) { return parse_target_csv(read_file(path), node_count); }

namespace {

nlohmann::json record_json(const SampleRecord& r) {
  return {{"id", r.id},
          {"mesh", r.mesh.generic_string()},
          {"roles", r.roles.generic_string()},
          {"target", r.target.generic_string()},
          {"params", r.params}};
}

SampleRecord record_from(const nlohmann::json& j, const fs::path& base) {
  SampleRecord r;
  r.id = j.at("id").get<std::string>();
  r.mesh = base / j.at("mesh").get<std::string>();
  r.roles = base / j.at("roles").get<std::string>();
  r.target = base / j.at("target").get<std::string>();
  r.params = j.at("params").get<std::vector<double>>();
  return r;
}

}  // namespace

void save_manifest(const fs::path& path, const Manifest& m) {
  nlohmann::json j;
  j["case"] = std::string(to_string(m.kind));
  j["domain"] = std::string(to_string(m.domain));
  j["seed"] = m.seed;
  j["resolution"] = {{"across", m.resolution.across}, {"along", m.resolution.along}};
  j["param_names"] = m.param_names;
  j["templates"] = nlohmann::json::array();
  for (const auto& t : m.templates) j["templates"].push_back(t.generic_string());
  j["train"] = nlohmann::json::array();
  for (const auto& r : m.train) j["train"].push_back(record_json(r));
  j["test"] = nlohmann::json::array();
  for (const auto& r : m.test) j["test"].push_back(record_json(r));
  j["rejected"] = m.rejected;
  write_file_atomic(path, j.dump(1) + "\n");
}

Manifest load_manifest(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, fmt::format("manifest {}: {}", path.string(), e.what()));
  }
  const fs::path base = path.parent_path();
  Manifest m;
  try {
    m.kind = parse_case(j.at("case").get<std::string>());
    m.domain = parse_domain(j.at("domain").get<std::string>());
    m.seed = j.at("seed").get<std::uint64_t>();
    m.resolution = {j.at("resolution").at("across").get<int>(), j.at("resolution").at("along").get<int>()};
    m.param_names = j.at("param_names").get<std::vector<std::string>>();
    for (const auto& t : j.at("templates")) m.templates.push_back(base / t.get<std::string>());
    for (const auto& r : j.at("train")) m.train.push_back(record_from(r, base));
    for (const auto& r : j.at("test")) m.test.push_back(record_from(r, base));
    m.rejected = j.value("rejected", 0);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, fmt::format("manifest {}: {}", path.string(), e.what()));
  }
  return m;
}

Manifest gen_campaign(const CampaignSpec& spec, const fs::path& out) {
  if (spec.n_train < 1 || spec.n_test < 1) fail(ErrorCode::InvalidArgument, "campaign needs train and test samples");
  const auto bounds = case_bounds(spec.kind);
  std::vector<std::pair<double, double>> b;
  Manifest m;
  m.kind = spec.kind;
  m.domain = default_domain(spec.kind);
  m.seed = spec.seed;
  m.resolution = spec.resolution;
  for (const auto& pb : bounds) {
    b.emplace_back(pb.lo, pb.hi);
    m.param_names.push_back(pb.name);
  }

  fs::create_directories(out / "templates");
  const auto templates = case_templates(spec.kind, spec.resolution);
  for (std::size_t l = 0; l < templates.size(); ++l) {
    const fs::path rel = fs::path("templates") / fmt::format("level{}.mesh", l);
    save_mesh(out / rel, templates[l]);
    m.templates.push_back(rel);
  }

  std::mt19937_64 redraw(spec.seed ^ 0x7265647261770000ull);
  const auto oracle = oracle_options(spec.kind);
  const auto run = [&](const char* split, int n, std::uint64_t seed, std::vector<SampleRecord>& records) {
    fs::create_directories(out / split);
    const Mat design = lhs_sample(b, n, seed);
    for (int i = 0; i < n; ++i) {
      std::vector<double> row(design.cols());
      for (Eigen::Index p = 0; p < design.cols(); ++p) row[p] = design(i, p);
      GeneratedPart part;
      for (int attempt = 0;; ++attempt) {
        try {
          part = generate_part(spec.kind, row, spec.resolution);
          break;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::SelfIntersecting || attempt >= 100) throw;
          ++m.rejected;
          for (std::size_t p = 0; p < b.size(); ++p)
            row[p] = std::uniform_real_distribution<double>(b[p].first, b[p].second)(redraw);
        }
      }
      SampleRecord r;
      r.id = fmt::format("{}_{:04d}", split, i);
      r.mesh = fs::path(split) / fmt::format("{:04d}.mesh", i);
      r.roles = fs::path(split) / fmt::format("{:04d}.roles", i);
      r.target = fs::path(split) / fmt::format("{:04d}.csv", i);
      r.params = row;
      save_mesh(out / r.mesh, part.mesh);
      save_roles(out / r.roles, part.roles);
      write_file_atomic(out / r.target, target_csv(oracle_deformation(part.mesh, part.roles, oracle)));
      records.push_back(std::move(r));
    }
  };
  run("train", spec.n_train, spec.seed * 2 + 1, m.train);
  run("test", spec.n_test, spec.seed * 2 + 2, m.test);
  save_manifest(out / "manifest.json", m);
  spdlog::info("campaign {}: {} train, {} test, {} redrawn", to_string(spec.kind), m.train.size(), m.test.size(),
               m.rejected);
  return m;
}

}  // namespace mmg
