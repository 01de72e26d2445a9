#pragma once

#include "mmg/hierarchy.hpp"
#include "mmg/mesh.hpp"
#include "mmg/param.hpp"

#include <string_view>
#include <vector>

namespace mmg {

enum class FeatureBlock { Zeros, OneHot, Laplacian, Dtc };

std::string_view to_string(FeatureBlock b);
FeatureBlock parse_feature_block(std::string_view s);
int block_width(FeatureBlock b);

inline constexpr int kLaplacianModes = 16;

/// Columns Free, BoundaryConstrained, Contact.
RowMatrix encode_one_hot(const NodeRoles& roles);

struct EigenModes {
  Eigen::VectorXd values;
  RowMatrix vectors;  // N x k, columns unit-norm
};

/// The k smallest nonzero Laplacian modes by shift-invert Lanczos, sign fixed
/// so the largest-magnitude entry is positive (first such index on ties).
EigenModes laplacian_modes(const ShellMesh& mesh, int k);
/// Same on an explicit connected-graph Laplacian.
EigenModes laplacian_modes(const SparseMatrix& laplacian, int k);

/// Dense reference decomposition, used as a cross-check on small meshes.
EigenModes laplacian_modes_dense(const ShellMesh& mesh, int k);
EigenModes laplacian_modes_dense(const SparseMatrix& laplacian, int k);

RowMatrix encode_laplacian_eigs(const ShellMesh& mesh, int k = kLaplacianModes);

/// Column 0 distance to the nearest Contact node, column 1 to the nearest
/// BoundaryConstrained node.
RowMatrix encode_dtc(const ShellMesh& mesh, const NodeRoles& roles);

struct FeatureLayout {
  std::vector<FeatureBlock> blocks;  // canonical order
  std::vector<int> widths;

  int width() const;
};

/// Canonical order Zeros, OneHot, Laplacian, Dtc regardless of the order given.
FeatureLayout make_layout(std::vector<FeatureBlock> blocks);

RowMatrix assemble_features(const FeatureLayout& layout, const ShellMesh& mesh, const NodeRoles& roles);

}  // namespace mmg
