#pragma once

#include "mmg/datagen.hpp"
#include "mmg/experiment.hpp"

#include <vector>

namespace mmg::test {

/// Pillar hierarchy small enough for finite differences: a 198-node fine
/// reference and two coarse levels of 50 and 12 nodes.
inline HierarchySkeleton small_skeleton(int k = 3) {
  std::vector<ShellMesh> t;
  for (GridResolution r : {GridResolution{8, 21}, GridResolution{4, 9}, GridResolution{2, 3}})
    t.push_back(bpillar_mesh(BPillarParams{}, r));
  return build_coarse_hierarchy(std::move(t), DomainKind::Octagon, k);
}

inline std::vector<double> design_row(const Mat& design, int i) {
  std::vector<double> row(design.cols());
  for (Eigen::Index p = 0; p < design.cols(); ++p) row[p] = design(i, p);
  return row;
}

/// Pillar samples on an LHS design at a given resolution.
inline std::vector<TrainSample> pillar_samples(const HierarchySkeleton& skeleton, int n, std::uint64_t seed,
                                               GridResolution res = {8, 21},
                                               CoarsePlacement placement = CoarsePlacement::Morphed) {
  std::vector<std::pair<double, double>> bounds;
  for (const auto& b : case_bounds(CaseKind::BPillarA3)) bounds.emplace_back(b.lo, b.hi);
  const Mat design = lhs_sample(bounds, n, seed);
  const auto layout = make_layout({FeatureBlock::OneHot, FeatureBlock::Dtc});
  std::vector<TrainSample> out;
  for (int i = 0; i < n; ++i) {
    auto part = generate_part(CaseKind::BPillarA3, design_row(design, i), res);
    Mat y = oracle_deformation(part.mesh, part.roles, oracle_options(CaseKind::BPillarA3));
    out.push_back(make_sample("s" + std::to_string(i), std::move(part.mesh), std::move(part.roles), std::move(y),
                              skeleton, layout, placement));
  }
  return out;
}

inline ModelConfig small_model(std::uint64_t seed = 0) {
  ModelConfig c;
  c.node_in = 5;
  c.width = 4;
  c.levels = 2;
  c.fine_steps = 1;
  c.coarse_steps = 2;
  c.mlp_layers = 1;
  c.seed = seed;
  return c;
}

}  // namespace mmg::test
