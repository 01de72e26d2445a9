#include "mmg/encodings.hpp"

#include "mmg/error.hpp"
#include "mmg/param.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#include <fmt/format.h>

#include <algorithm>
#include <numeric>
#include <optional>
#include <random>

namespace mmg {

std::string_view to_string(FeatureBlock b) {
  switch (b) {
    case FeatureBlock::Zeros: return "zeros";
    case FeatureBlock::OneHot: return "one_hot";
    case FeatureBlock::Laplacian: return "le";
    case FeatureBlock::Dtc: return "dtc";
  }
  return "zeros";
}

FeatureBlock parse_feature_block(std::string_view s) {
  if (s == "zeros") return FeatureBlock::Zeros;
  if (s == "one_hot" || s == "1h") return FeatureBlock::OneHot;
  if (s == "le" || s == "laplacian") return FeatureBlock::Laplacian;
  if (s == "dtc") return FeatureBlock::Dtc;
  fail(ErrorCode::InvalidArgument, "unknown feature block '" + std::string(s) + "'");
}

int block_width(FeatureBlock b) {
  switch (b) {
    case FeatureBlock::Zeros: return 1;
    case FeatureBlock::OneHot: return 3;
    case FeatureBlock::Laplacian: return kLaplacianModes;
    case FeatureBlock::Dtc: return 2;
  }
  return 0;
}

RowMatrix encode_one_hot(const NodeRoles& roles) {
  RowMatrix out = RowMatrix::Zero(roles.size(), 3);
  for (int i = 0; i < roles.size(); ++i) out(i, static_cast<int>(roles.labels[i])) = 1.0;
  return out;
}

namespace {

void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
  const double top = v.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (std::abs(v[i]) >= top - 1e-12) {
      if (v[i] < 0) v = -v;
      return;
    }
}

struct RitzPair {
  double value;
  Eigen::VectorXd vector;
  double residual;
};

// Lanczos with full reorthogonalisation on (L + sigma I)^-1, restricted to the
// complement of `deflate` (orthonormal columns). A breakdown restarts from a
// fresh random direction so repeated eigenvalues are not lost.
std::vector<RitzPair> lanczos_pass(const SparseMatrix& L,
                                   const Eigen::SimplicialLDLT<SparseMatrix>& shifted,
                                   const Eigen::MatrixXd& deflate, int steps, std::mt19937_64& rng) {
  const Eigen::Index n = L.rows();
  std::normal_distribution<double> normal;
  auto orthogonalise = [&](Eigen::VectorXd& w, const Eigen::MatrixXd& Q, Eigen::Index cols) {
    for (int twice = 0; twice < 2; ++twice) {
      if (deflate.cols() > 0) w -= deflate * (deflate.transpose() * w);
      if (cols > 0) w -= Q.leftCols(cols) * (Q.leftCols(cols).transpose() * w);
    }
  };
  auto fresh = [&](const Eigen::MatrixXd& Q, Eigen::Index cols) -> std::optional<Eigen::VectorXd> {
    for (int attempt = 0; attempt < 5; ++attempt) {
      Eigen::VectorXd w(n);
      for (Eigen::Index i = 0; i < n; ++i) w[i] = normal(rng);
      orthogonalise(w, Q, cols);
      const double nrm = w.norm();
      if (nrm > 1e-8) return w / nrm;
    }
    return std::nullopt;
  };

  Eigen::MatrixXd Q(n, steps);
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(steps), beta = Eigen::VectorXd::Zero(steps);
  auto q = fresh(Q, 0);
  if (!q) return {};
  int m = 0;
  for (int j = 0; j < steps; ++j) {
    Q.col(j) = *q;
    m = j + 1;
    Eigen::VectorXd w = shifted.solve(*q);
    alpha[j] = q->dot(w);
    w -= alpha[j] * *q;
    if (j > 0) w -= beta[j - 1] * Q.col(j - 1);
    orthogonalise(w, Q, j + 1);
    const double b = w.norm();
    if (j + 1 == steps) break;
    if (b <= 1e-10 * std::max(1.0, std::abs(alpha[j]))) {
      beta[j] = 0.0;
      q = fresh(Q, j + 1);
      if (!q) break;
    } else {
      beta[j] = b;
      q = w / b;
    }
  }

  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
  for (int j = 0; j < m; ++j) {
    T(j, j) = alpha[j];
    if (j + 1 < m) T(j, j + 1) = T(j + 1, j) = beta[j];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
  std::vector<RitzPair> out;
  for (int c = 0; c < m; ++c) {
    Eigen::VectorXd v = Q.leftCols(m) * es.eigenvectors().col(c);
    v.normalize();
    const Eigen::VectorXd Lv = L * v;
    const double lambda = v.dot(Lv);
    const double residual = (Lv - lambda * v).norm();
    out.push_back({lambda, std::move(v), residual});
  }
  return out;
}

}  // namespace

EigenModes laplacian_modes(const ShellMesh& mesh, int k) { return laplacian_modes(build_laplacian(mesh), k); }

EigenModes laplacian_modes(const SparseMatrix& L, int k) {
  const int n = static_cast<int>(L.rows());
  if (k < 1) fail(ErrorCode::InvalidArgument, "mode count must be positive");
  if (n <= k + 1) fail(ErrorCode::EigSolverFailure, fmt::format("{} nodes cannot give {} modes", n, k));
  constexpr double kResidualTarget = 1e-9;

  SparseMatrix I(n, n);
  I.setIdentity();
  const double sigma = 1e-3;
  Eigen::SimplicialLDLT<SparseMatrix> shifted(SparseMatrix(L + sigma * I));
  if (shifted.info() != Eigen::Success) fail(ErrorCode::EigSolverFailure, "shifted factorisation failed");

  std::mt19937_64 rng(0x4c45u);
  Eigen::MatrixXd kernel = Eigen::MatrixXd::Constant(n, 1, 1.0 / std::sqrt(static_cast<double>(n)));

  std::vector<RitzPair> found;
  int steps = std::min(n - 1, std::max(3 * k, 2 * k + 20));
  for (;;) {
    auto pairs = lanczos_pass(L, shifted, kernel, steps, rng);
    std::erase_if(pairs, [&](const RitzPair& p) { return p.residual > kResidualTarget; });
    std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.value < b.value; });
    if (static_cast<int>(pairs.size()) >= k) {
      pairs.resize(k);
      found = std::move(pairs);
      break;
    }
    if (steps >= n - 1)
      fail(ErrorCode::EigSolverFailure, fmt::format("only {} of {} modes converged", pairs.size(), k));
    steps = std::min(n - 1, 2 * steps);
  }

  // Lock the converged modes and search their complement for anything below
  // the current k-th eigenvalue that the first pass missed.
  for (int pass = 0; pass < 4; ++pass) {
    Eigen::MatrixXd locked(n, 1 + found.size());
    locked.col(0) = kernel.col(0);
    for (std::size_t c = 0; c < found.size(); ++c) locked.col(c + 1) = found[c].vector;
    const int room = n - 1 - static_cast<int>(found.size());
    if (room <= 0) break;
    auto extra = lanczos_pass(L, shifted, locked, std::min(room, std::max(k, 20)), rng);
    std::erase_if(extra, [&](const RitzPair& p) {
      return p.residual > kResidualTarget || p.value >= found.back().value - 1e-10;
    });
    if (extra.empty()) break;
    for (auto& p : extra) found.push_back(std::move(p));
    std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.value < b.value; });
    found.resize(k);
  }

  EigenModes out;
  out.values.resize(k);
  out.vectors.resize(n, k);
  for (int c = 0; c < k; ++c) {
    Eigen::VectorXd v = found[c].vector;
    fix_sign(v);
    out.values[c] = found[c].value;
    out.vectors.col(c) = v;
  }
  return out;
}

EigenModes laplacian_modes_dense(const ShellMesh& mesh, int k) {
  return laplacian_modes_dense(build_laplacian(mesh), k);
}

EigenModes laplacian_modes_dense(const SparseMatrix& sparse, int k) {
  const int n = static_cast<int>(sparse.rows());
  if (n <= k + 1) fail(ErrorCode::EigSolverFailure, fmt::format("{} nodes cannot give {} modes", n, k));
  const Eigen::MatrixXd L = Eigen::MatrixXd(sparse);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L);
  if (es.info() != Eigen::Success) fail(ErrorCode::EigSolverFailure, "dense eigensolver failed");
  EigenModes out;
  out.values = es.eigenvalues().segment(1, k);
  out.vectors.resize(n, k);
  for (int c = 0; c < k; ++c) {
    Eigen::VectorXd v = es.eigenvectors().col(c + 1);
    fix_sign(v);
    out.vectors.col(c) = v;
  }
  return out;
}

RowMatrix encode_laplacian_eigs(const ShellMesh& mesh, int k) { return laplacian_modes(mesh, k).vectors; }

RowMatrix encode_dtc(const ShellMesh& mesh, const NodeRoles& roles) {
  if (roles.size() != mesh.node_count()) fail(ErrorCode::ShapeMismatch, "role and node counts differ");
  std::vector<int> contact, boundary;
  for (int i = 0; i < roles.size(); ++i) {
    if (roles.labels[i] == NodeRole::Contact) contact.push_back(i);
    if (roles.labels[i] == NodeRole::BoundaryConstrained) boundary.push_back(i);
  }
  if (contact.empty()) fail(ErrorCode::EmptyRole, "no Contact nodes for distance features");
  if (boundary.empty()) fail(ErrorCode::EmptyRole, "no BoundaryConstrained nodes for distance features");
  RowMatrix out(mesh.node_count(), 2);
  for (int i = 0; i < mesh.node_count(); ++i) {
    const Vec3& p = mesh.coord(i);
    double dc = std::numeric_limits<double>::infinity(), db = dc;
    for (int j : contact) dc = std::min(dc, (p - mesh.coord(j)).squaredNorm());
    for (int j : boundary) db = std::min(db, (p - mesh.coord(j)).squaredNorm());
    out(i, 0) = std::sqrt(dc);
    out(i, 1) = std::sqrt(db);
  }
  return out;
}

int FeatureLayout::width() const { return std::accumulate(widths.begin(), widths.end(), 0); }

FeatureLayout make_layout(std::vector<FeatureBlock> blocks) {
  if (blocks.empty()) fail(ErrorCode::EmptySelection, "no feature blocks selected");
  std::sort(blocks.begin(), blocks.end());
  blocks.erase(std::unique(blocks.begin(), blocks.end()), blocks.end());
  FeatureLayout layout;
  layout.blocks = blocks;
  for (auto b : blocks) layout.widths.push_back(block_width(b));
  return layout;
}

RowMatrix assemble_features(const FeatureLayout& layout, const ShellMesh& mesh, const NodeRoles& roles) {
  if (layout.blocks.empty()) fail(ErrorCode::EmptySelection, "no feature blocks selected");
  RowMatrix out(mesh.node_count(), layout.width());
  int col = 0;
  for (auto b : layout.blocks) {
    RowMatrix block;
    switch (b) {
      case FeatureBlock::Zeros: block = RowMatrix::Zero(mesh.node_count(), 1); break;
      case FeatureBlock::OneHot: block = encode_one_hot(roles); break;
      case FeatureBlock::Laplacian: block = encode_laplacian_eigs(mesh, kLaplacianModes); break;
      case FeatureBlock::Dtc: block = encode_dtc(mesh, roles); break;
    }
    out.middleCols(col, block.cols()) = block;
    col += static_cast<int>(block.cols());
  }
  return out;
}

}  // namespace mmg
