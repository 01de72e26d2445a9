#include "mmg/param.hpp"

#include "mmg/error.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <fmt/format.h>

#include <cmath>
#include <numbers>

namespace mmg {

std::string_view to_string(DomainKind d) {
  switch (d) {
    case DomainKind::Disk: return "disk";
    case DomainKind::Square: return "square";
    case DomainKind::Octagon: return "octagon";
  }
  return "disk";
}

DomainKind parse_domain(std::string_view s) {
  if (s == "disk") return DomainKind::Disk;
  if (s == "square") return DomainKind::Square;
  if (s == "octagon") return DomainKind::Octagon;
  fail(ErrorCode::InvalidArgument, "unknown domain '" + std::string(s) + "'");
}

int anchor_count(DomainKind d) {
  switch (d) {
    case DomainKind::Disk: return 0;
    case DomainKind::Square: return 4;
    case DomainKind::Octagon: return 8;
  }
  return 0;
}

std::vector<Vec2> domain_vertices(DomainKind d) {
  switch (d) {
    case DomainKind::Disk: return {};
    case DomainKind::Square: return {{0, 0}, {0, 1}, {1, 1}, {1, 0}};
    case DomainKind::Octagon: {
      std::vector<Vec2> v;
      constexpr double deg = std::numbers::pi / 180.0;
      for (int k = 0; k < 8; ++k) {
        const double a = (247.5 - 45.0 * k) * deg;
        v.emplace_back(std::cos(a), std::sin(a));
      }
      return v;
    }
  }
  return {};
}

SparseMatrix build_laplacian(const ShellMesh& mesh) { return build_laplacian(mesh.node_count(), mesh.edges()); }

SparseMatrix build_laplacian(int n, const std::vector<Edge>& edges) {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(n + 4 * edges.size());
  for (const auto& e : edges) {
    if (e.a < 0 || e.b >= n || e.a >= e.b) fail(ErrorCode::IndexOutOfRange, fmt::format("edge ({}, {})", e.a, e.b));
    t.emplace_back(e.a, e.b, -1.0);
    t.emplace_back(e.b, e.a, -1.0);
    t.emplace_back(e.a, e.a, 1.0);
    t.emplace_back(e.b, e.b, 1.0);
  }
  SparseMatrix L(n, n);
  L.setFromTriplets(t.begin(), t.end());
  return L;
}

BoundaryUv embed_boundary(const BoundaryLoop& loop, std::span<const int> anchors, DomainKind domain,
                          const ShellMesh& mesh) {
  const int m = loop.size();
  const int na = anchor_count(domain);
  if (static_cast<int>(anchors.size()) != na)
    fail(ErrorCode::AnchorMismatch,
         fmt::format("{} domain needs {} anchors, got {}", to_string(domain), na, anchors.size()));
  if (m < 3) fail(ErrorCode::InvalidArgument, "boundary loop has fewer than 3 nodes");

  BoundaryUv out;
  out.nodes = loop.nodes;
  out.uv.resize(m);

  if (domain == DomainKind::Disk) {
    std::vector<double> s(m + 1, 0.0);
    for (int k = 0; k < m; ++k)
      s[k + 1] = s[k] + (mesh.coord(loop.nodes[(k + 1) % m]) - mesh.coord(loop.nodes[k])).norm();
    const double total = s[m];
    for (int k = 0; k < m; ++k) {
      const double frac = total > 0 ? s[k] / total : static_cast<double>(k) / m;
      const double a = -0.5 * std::numbers::pi - 2.0 * std::numbers::pi * frac;
      out.uv[k] = {std::cos(a), std::sin(a)};
    }
    return out;
  }

  for (int a : anchors)
    if (a < 0 || a >= m)
      fail(ErrorCode::AnchorMismatch, fmt::format("anchor {} outside loop of {}", a, m));
  // Anchors must advance around the loop exactly once.
  int wraps = 0;
  for (int k = 0; k < na; ++k) {
    const int a = anchors[k], b = anchors[(k + 1) % na];
    if (a == b) fail(ErrorCode::AnchorMismatch, fmt::format("repeated anchor {}", a));
    if (b < a) ++wraps;
  }
  if (wraps != 1) fail(ErrorCode::AnchorMismatch, "anchors are not in loop order");

  const auto verts = domain_vertices(domain);
  for (int k = 0; k < na; ++k) {
    const int a = anchors[k];
    const int gap = ((anchors[(k + 1) % na] - a) % m + m) % m;
    const Vec2& p = verts[k];
    const Vec2& q = verts[(k + 1) % na];
    for (int t = 0; t < gap; ++t) {
      const double f = static_cast<double>(t) / gap;
      out.uv[(a + t) % m] = t == 0 ? p : Vec2((1.0 - f) * p + f * q);
    }
  }
  return out;
}

std::vector<int> domain_anchors(const BoundaryLoop& loop, const ShellMesh& mesh, DomainKind domain) {
  const int na = anchor_count(domain);
  if (na == 0) return {};
  auto corners = detect_corners(loop, mesh, na);
  const int m = loop.size();
  int first = 0, best = m;
  for (int k = 0; k < na; ++k) {
    const int d = std::min(corners[k], m - corners[k]);
    if (d < best) {
      best = d;
      first = k;
    }
  }
  std::rotate(corners.begin(), corners.begin() + first, corners.end());
  return corners;
}

UvChart solve_tutte(const ShellMesh& mesh, const BoundaryUv& boundary, DomainKind domain,
                    const TutteOptions& options) {
  const int n = mesh.node_count();
  if (boundary.nodes.empty()) fail(ErrorCode::SingularSystem, "empty boundary set");
  if (boundary.nodes.size() != boundary.uv.size())
    fail(ErrorCode::ShapeMismatch, "boundary node and UV counts differ");

  UvChart chart;
  chart.domain = domain;
  chart.uv.assign(n, Vec2::Zero());
  chart.is_boundary.assign(n, 0);
  chart.boundary = boundary.nodes;
  for (std::size_t k = 0; k < boundary.nodes.size(); ++k) {
    const int i = boundary.nodes[k];
    if (i < 0 || i >= n) fail(ErrorCode::IndexOutOfRange, fmt::format("boundary node {}", i));
    chart.is_boundary[i] = 1;
    chart.uv[i] = boundary.uv[k];
  }
  std::vector<int> local(n, -1);
  for (int i = 0; i < n; ++i)
    if (!chart.is_boundary[i]) {
      local[i] = static_cast<int>(chart.interior.size());
      chart.interior.push_back(i);
    }
  const int ni = static_cast<int>(chart.interior.size());
  if (ni == 0) return chart;

  // L_II U_I = -L_IB U_B, assembled directly from adjacency.
  std::vector<Eigen::Triplet<double>> t;
  Eigen::MatrixX2d rhs = Eigen::MatrixX2d::Zero(ni, 2);
  for (int r = 0; r < ni; ++r) {
    const int i = chart.interior[r];
    t.emplace_back(r, r, mesh.degree(i));
    for (int j : mesh.neighbors(i)) {
      if (local[j] >= 0)
        t.emplace_back(r, local[j], -1.0);
      else
        rhs.row(r) += chart.uv[j].transpose();
    }
  }
  SparseMatrix A(ni, ni);
  A.setFromTriplets(t.begin(), t.end());

  Eigen::MatrixX2d x;
  if (options.backend == SolverBackend::Direct) {
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(A);
    if (ldlt.info() != Eigen::Success) fail(ErrorCode::SingularSystem, "factorisation of L_II failed");
    x = ldlt.solve(rhs);
  } else {
    Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper,
                             Eigen::DiagonalPreconditioner<double>>
        cg;
    const int max_it = options.max_iterations > 0 ? options.max_iterations : 10 * n;
    cg.setMaxIterations(max_it);
    cg.compute(A);
    x = Eigen::MatrixX2d::Zero(ni, 2);
    for (int c = 0; c < 2; ++c) {
      // Eigen stops on ||r||_2 <= tol * ||b||_2. Scaling the tolerance by ||b||
      // bounds the absolute residual; a second pass from the current iterate
      // absorbs drift between the recursive and the true residual.
      const double bnorm = rhs.col(c).norm();
      Eigen::VectorXd col = Eigen::VectorXd::Zero(ni);
      for (int pass = 0; pass < 2; ++pass) {
        cg.setTolerance(bnorm > 0 ? 0.5 * options.tolerance / bnorm : options.tolerance);
        col = cg.solveWithGuess(rhs.col(c), col);
        if (cg.info() != Eigen::Success)
          fail(ErrorCode::SolverDivergence,
               fmt::format("CG did not converge in {} iterations (error {:.3e})", max_it, cg.error()));
        chart.iterations += static_cast<int>(cg.iterations());
        if ((rhs.col(c) - A * col).cwiseAbs().maxCoeff() <= options.tolerance) break;
      }
      x.col(c) = col;
    }
  }
  for (int r = 0; r < ni; ++r) chart.uv[chart.interior[r]] = x.row(r).transpose();
  chart.residual = harmonic_residual(mesh, chart);
  if (!(chart.residual <= options.tolerance))
    fail(ErrorCode::SolverDivergence,
         fmt::format("harmonic residual {:.3e} above tolerance {:.1e}", chart.residual, options.tolerance));
  return chart;
}

double harmonic_residual(const ShellMesh& mesh, const UvChart& chart) {
  double worst = 0.0;
  for (int i : chart.interior) {
    Vec2 r = mesh.degree(i) * chart.uv[i];
    for (int j : mesh.neighbors(i)) r -= chart.uv[j];
    worst = std::max(worst, r.cwiseAbs().maxCoeff());
  }
  return worst;
}

UvChart parameterise(const ShellMesh& mesh, const BoundaryLoop& loop, DomainKind domain,
                     const TutteOptions& options) {
  const auto anchors = domain_anchors(loop, mesh, domain);
  return solve_tutte(mesh, embed_boundary(loop, anchors, domain, mesh), domain, options);
}

UvChart parameterise(const ShellMesh& mesh, DomainKind domain, const TutteOptions& options) {
  return parameterise(mesh, extract_boundary_loop(mesh), domain, options);
}

EmbeddingReport validate_embedding(const UvChart& chart, const ShellMesh& mesh) {
  if (chart.node_count() != mesh.node_count())
    fail(ErrorCode::ShapeMismatch, "chart and mesh node counts differ");
  const auto tris = mesh.triangles();
  std::vector<double> area(tris.size());
  double total = 0.0;
  for (std::size_t k = 0; k < tris.size(); ++k) {
    const Vec2 a = chart.uv[tris[k][0]], b = chart.uv[tris[k][1]], c = chart.uv[tris[k][2]];
    area[k] = 0.5 * ((b - a).x() * (c - a).y() - (b - a).y() * (c - a).x());
    total += area[k];
  }
  const double sign = total < 0 ? -1.0 : 1.0;
  EmbeddingReport rep;
  rep.triangles = static_cast<int>(tris.size());
  rep.min_area = std::numeric_limits<double>::infinity();
  rep.max_area = -rep.min_area;
  for (double a : area) {
    const double s = sign * a;
    if (s <= 0) ++rep.flipped;
    rep.min_area = std::min(rep.min_area, s);
    rep.max_area = std::max(rep.max_area, s);
  }
  if (tris.empty()) rep.min_area = rep.max_area = 0.0;
  rep.residual = harmonic_residual(mesh, chart);
  return rep;
}

std::string chart_csv(const UvChart& chart) {
  std::string out = "index,u,v,is_boundary\n";
  for (int i = 0; i < chart.node_count(); ++i)
    out += fmt::format("{},{:.17g},{:.17g},{}\n", i, chart.uv[i].x(), chart.uv[i].y(),
                       chart.is_boundary[i] ? 1 : 0);
  return out;
}

}  // namespace mmg
