#pragma once

#include "mmg/encodings.hpp"
#include "mmg/gunet.hpp"
#include "mmg/hierarchy.hpp"

#include <nlohmann/json_fwd.hpp>

#include <random>
#include <set>
#include <string>
#include <vector>

namespace mmg {

/// Per-column standardisation with sample (n-1) standard deviation. Columns
/// with no spread keep unit scale.
struct Normalizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd std;

  static Normalizer fit(const std::vector<const Mat*>& blocks);
  Mat apply(const Mat& x) const;
  Mat invert(const Mat& x) const;
  bool empty() const { return mean.size() == 0; }
};

/// One supervised example: the fine mesh, its roles and target field, plus the
/// precomputed hierarchy and raw node features.
struct TrainSample {
  std::string id;
  ShellMesh mesh;
  NodeRoles roles;
  Mat target;  // N x 3
  GraphHierarchy hierarchy;
  Mat node_features;
};

TrainSample make_sample(std::string id, ShellMesh mesh, NodeRoles roles, Mat target,
                        const HierarchySkeleton& skeleton, const FeatureLayout& layout,
                        CoarsePlacement placement = CoarsePlacement::Morphed);

struct Normalization {
  Normalizer node;
  Normalizer fine_edge;
  Normalizer cross_edge;
  std::vector<Normalizer> coarse_edge;  // [l-1]
  Normalizer target;

  static Normalization fit(const std::vector<TrainSample>& samples);
  static Normalization fit(const std::vector<const TrainSample*>& samples);
};

nlohmann::json to_json(const Normalization& n);
Normalization normalization_from_json(const nlohmann::json& j);

GraphInput make_input(const TrainSample& s, const Normalization& norm, const HierarchySkeleton& skeleton);

struct MaskRealisation {
  std::vector<int> nodes;        // ascending
  std::vector<int> fine_edges;   // indices into the directed fine edge list
  std::vector<int> cross_edges;  // indices into the fine -> level-1 list
};

/// Uniform draw of round(ratio * |maskable|) Free nodes by partial Fisher-Yates.
MaskRealisation sample_mask(const GraphHierarchy& h, const NodeRoles& roles, double ratio, std::mt19937_64& rng);

/// Drops masked fine edges and cross edges from the downward path only.
GraphInput apply_mask(const GraphInput& in, const MaskRealisation& mask);

double loss_mse(const Mat& pred, const Mat& target);
/// Mean nodal Euclidean distance.
double metric_med(const Mat& pred, const Mat& target);
/// max_i |y_iz|
double intrusion(const Mat& y);
/// |I(pred) - I(target)| / (I(target) + eps) * 100
double metric_mipe(const Mat& pred, const Mat& target, double eps = 1e-8);
/// (e_no - e_pre) / e_no * 100
double improvement(double error_no_pretrain, double error_pretrain);

struct TrainOptions {
  int epochs = 1;
  int batch = 4;
  double mask_ratio = 0.0;  // 0 disables masking
  AdamOptions adam;
  std::set<LayerKind> frozen;
  std::uint64_t seed = 0;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
};

/// Model, optimiser and normalisation of one training run.
struct TrainState {
  std::unique_ptr<GUNet> model;
  Adam adam;
  Normalization norm;
  std::mt19937_64 rng;
};

/// Mini-batch Adam over standardised targets with gradient averaging; a fresh
/// mask per sample per step when masking is on. Frozen kinds never change.
/// Optimiser state starts fresh on every call.
std::vector<EpochLog> train(TrainState& state, const std::vector<GraphInput>& inputs,
                            const std::vector<Mat>& targets, const std::vector<const TrainSample*>& samples,
                            const TrainOptions& options);

struct Metrics {
  std::vector<double> med;
  std::vector<double> mipe;

  double med_mean() const;
  double med_std() const;
  double mipe_mean() const;
  double mipe_std() const;
};

/// Predictions are de-standardised before the metrics are taken.
Metrics evaluate(const GUNet& model, const Normalization& norm, const std::vector<GraphInput>& inputs,
                 const std::vector<const TrainSample*>& samples);

double mean_of(const std::vector<double>& v);
double sample_std(const std::vector<double>& v);

/// Latin hypercube design: every parameter's n values fall in distinct
/// equal-width strata, jittered uniformly within the stratum.
Mat lhs_sample(const std::vector<std::pair<double, double>>& bounds, int n, std::uint64_t seed);

}  // namespace mmg
