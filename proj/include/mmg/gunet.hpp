#pragma once

#include "mmg/diffcore.hpp"
#include "mmg/hierarchy.hpp"

#include <map>
#include <set>
#include <vector>

namespace mmg {

struct ModelConfig {
  int node_in = 5;
  int edge_in = 4;
  int width = 32;  // fine and level-1 width; doubles per edge-specific level
  int levels = 3;
  int fine_steps = 2;
  int coarse_steps = 15;
  int mlp_layers = 2;     // hidden layers per MLP
  int mlp_hidden = 0;     // fine-side hidden width, 0 = output width (decoder: input width)
  int coarse_hidden = 0;  // coarse-side hidden width, 0 = output width
  int out_dim = 3;
  std::uint64_t seed = 0;

  int level_width(int l) const { return l <= 1 ? width : width << (l - 1); }
};

/// Sizes of the fixed coarse levels, enough to allocate edge-specific weights.
struct LevelShape {
  std::vector<int> nodes;       // [l-1] = node count of level l, l = 1..L
  std::vector<int> down_edges;  // [l-1] = edge count level l -> l+1, l = 1..L-1
  std::uint64_t digest = 0;

  static LevelShape from(const HierarchySkeleton& skeleton);
};

/// Network input for one sample; feature tables are already standardised.
/// Index vectors are referenced by the tape and must outlive backward().
struct GraphInput {
  Mat node_features;  // N0 x node_in
  DirectedEdges fine_edges;
  Mat fine_features;
  DirectedEdges cross_edges;  // fine -> level 1
  Mat cross_features;
  DirectedEdges up_edges;  // level 1 -> fine, never masked
  Mat up_features;
  std::vector<DirectedEdges> coarse_edges;  // [l-1], level l
  std::vector<Mat> coarse_features;
  std::vector<DirectedEdges> down_edges;  // [l-1], level l -> l+1
  std::vector<int> level_nodes;           // [l-1]
  std::uint64_t coarse_digest = 0;

  int fine_nodes() const { return static_cast<int>(node_features.rows()); }
};

struct Mlp {
  std::vector<Parameter*> weights;
  std::vector<Parameter*> biases;
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;
  int in = 0;
  int out = 0;

  /// First layer applied to a column block [offset, offset + cols) of the
  /// logical input; the bias is added once, when `with_bias` is set.
  Tape::Var first(Tape& t, Tape::Var part, int offset, bool with_bias) const;
  /// Activation, remaining layers and the optional output normalisation.
  Tape::Var rest(Tape& t, Tape::Var pre) const;
  Tape::Var operator()(Tape& t, Tape::Var x) const { return rest(t, first(t, x, 0, true)); }
};

Mlp make_mlp(ParamStore& store, const std::string& name, LayerKind kind, int in, int hidden, int layers,
             int out, bool norm, std::mt19937_64& rng);

struct MessagePassing {
  Mlp edge;
  Mlp node;
};

/// m = edge([h_dst, h_src, e]); h + node([h, sum_dst m])
Tape::Var ig_mp(Tape& t, const MessagePassing& mp, Tape::Var h, Tape::Var e, const DirectedEdges& edges);

/// LeakyReLU of the edge-specific aggregation.
Tape::Var es_layer(Tape& t, Tape::Var h, const DirectedEdges& edges, int out_rows, Parameter& W);

struct ParameterCount {
  std::int64_t total = 0;
  std::int64_t trainable = 0;
  std::map<LayerKind, std::int64_t> per_kind;

  double fraction() const { return total > 0 ? static_cast<double>(trainable) / total : 0.0; }
};

const std::set<LayerKind>& default_freeze_policy();

class GUNet {
 public:
  GUNet(const ModelConfig& config, const LevelShape& shape);

  GUNet(const GUNet&) = delete;
  GUNet& operator=(const GUNet&) = delete;

  /// Per-node prediction in standardised target units (N0 x out_dim).
  Tape::Var forward(Tape& t, const GraphInput& in) const;
  Mat predict(const GraphInput& in) const;

  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const ModelConfig& config() const { return cfg_; }
  const LevelShape& shape() const { return shape_; }

  ParameterCount count_parameters(const std::set<LayerKind>& frozen) const;

 private:
  ModelConfig cfg_;
  LevelShape shape_;
  ParamStore store_;
  Mlp enc_node_, enc_edge_;
  std::vector<MessagePassing> fine_mp_;
  Mlp ds_edge_, ds_node_;
  std::vector<Parameter*> ds_es_;
  std::vector<MessagePassing> coarse_mp_;
  std::vector<Parameter*> us_es_;  // [l-1] maps level l+1 -> l
  std::vector<Mlp> fuse_;          // [l-1]
  Mlp us_edge_, us_node_;
  Mlp decoder_;
};

/// Reference full-scale configuration and level sizes used for parameter accounting.
ModelConfig reference_config();
LevelShape reference_shape(const ModelConfig& config, int k = 3);

}  // namespace mmg
