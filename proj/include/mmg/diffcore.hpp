#pragma once

#include "mmg/hierarchy.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace mmg {

using Mat = RowMatrix;

enum class LayerKind : std::uint8_t {
  Encoder,
  FineIGMP,
  DSMP,
  DSES,
  CoarseIGMP,
  USES,
  USMP,
  Decoder,
};

std::string_view to_string(LayerKind k);
LayerKind parse_layer_kind(std::string_view s);

/// Trainable tensor. Gradient and optimiser buffers are allocated on first use.
struct Parameter {
  std::string name;
  LayerKind kind = LayerKind::Encoder;
  bool frozen = false;
  Mat value;
  Mat grad;
  Mat adam_m;
  Mat adam_v;

  Eigen::Index size() const { return value.size(); }
  bool has_grad() const { return grad.size() != 0; }
  void zero_grad() { grad.resize(0, 0); }
};

class ParamStore {
 public:
  Parameter& add(std::string name, LayerKind kind, Eigen::Index rows, Eigen::Index cols);
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;

  std::vector<std::unique_ptr<Parameter>>& all() { return params_; }
  const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }

  void freeze(const std::set<LayerKind>& kinds);
  void zero_grad();
  void scale_grad(double s);

  std::int64_t count(bool trainable_only = false) const;
  std::int64_t count(LayerKind kind) const;

  /// FNV-1a over the values of the selected tensors.
  std::uint64_t checksum(bool frozen) const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

/// Reverse-mode tape over row-major f64 matrices. Index spans passed to graph
/// ops must outlive the tape's backward pass.
class Tape {
 public:
  struct Var {
    int id = -1;
  };

  Var input(Mat value, bool requires_grad = false);
  /// A parameter used as a plain value (e.g. for gradient checks on inputs).
  Var param(Parameter& p);

  /// x * W[row_offset : row_offset + x.cols(), :] (+ b)
  Var linear(Var x, Parameter& W, Parameter* b = nullptr, int row_offset = 0);
  Var leaky_relu(Var x, double slope = 0.01);
  Var layer_norm(Var x, Parameter& gamma, Parameter& beta, double eps = 1e-5);
  Var concat(std::span<const Var> parts);
  Var gather(Var x, std::span<const int> rows);
  Var scatter_sum(Var messages, std::span<const int> dest, int out_rows);
  Var add(Var a, Var b);
  /// out[dst_e] += x[src_e] * W_e, W_e the e-th (C_in x C_out) block of W.
  Var edge_specific(Var x, std::span<const int> src, std::span<const int> dst, int out_rows,
                    Parameter& W);
  /// mean((pred - target)^2) over every entry, as a 1x1 value.
  Var mse(Var pred, const Mat& target);
  /// sum(x .* weights), as a 1x1 value.
  Var weighted_sum(Var x, const Mat& weights);

  const Mat& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient of the last backward pass; empty when it did not reach `v`.
  const Mat& grad(Var v) const { return nodes_[v.id].grad; }

  /// Seeds d(out)/d(out) = 1 on a 1x1 node and accumulates parameter gradients.
  void backward(Var out);

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    std::function<void(Tape&, int)> back;
  };

  Var push(Mat value, bool needs_grad, std::function<void(Tape&, int)> back);
  static void accumulate(Mat& target, const Mat& delta);
  bool needs(Var v) const { return nodes_[v.id].needs_grad; }
  static bool trainable(const Parameter* p) { return p && !p->frozen; }

  std::vector<Node> nodes_;
};

struct AdamOptions {
  double lr = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : opt_(options) {}

  /// One update of every unfrozen parameter; missing gradients count as zero.
  void step(ParamStore& store);

  std::int64_t steps() const { return t_; }
  void set_steps(std::int64_t t) { t_ = t; }
  const AdamOptions& options() const { return opt_; }

 private:
  AdamOptions opt_;
  std::int64_t t_ = 0;
};

/// Uniform in +-sqrt(1/fan_in).
void init_uniform(Parameter& p, double fan_in, std::mt19937_64& rng);

struct GradCheckOptions {
  double relative_step = 1e-6;
  int max_entries_per_tensor = 0;  // 0 checks every entry
  std::uint64_t seed = 1;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  int checked = 0;
  std::string worst;  // "<tensor>[<entry>]"
};

/// Central differences against reverse mode for every entry of `wrt`. Entries
/// whose gradient is below 1e-3 of the largest one are compared against that
/// floor rather than their own magnitude. Entries off by more than 1e-6 are
/// retried with steps 100 and 10000 times smaller.
GradCheckReport check_gradient(const std::function<Tape::Var(Tape&)>& fn,
                               std::span<Parameter* const> wrt, const GradCheckOptions& options = {});

/// Named-tensor container with Adam moments and a JSON metadata blob.
void save_checkpoint(const std::filesystem::path& path, const ParamStore& store, const Adam& adam,
                     const std::string& meta_json);
std::string serialize_checkpoint(const ParamStore& store, const Adam& adam, const std::string& meta_json);

struct Checkpoint {
  std::string meta_json;
  std::int64_t adam_steps = 0;
  std::vector<Parameter> tensors;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint deserialize_checkpoint(std::string_view bytes);

/// Copies values, frozen flags and moments by name; every tensor must match.
void restore(ParamStore& store, Adam& adam, const Checkpoint& ckpt);

}  // namespace mmg
