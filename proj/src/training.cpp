#include "mmg/training.hpp"

#include "mmg/error.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mmg {

Normalizer Normalizer::fit(const std::vector<const Mat*>& blocks) {
  if (blocks.empty()) fail(ErrorCode::EmptyInput, "no data to fit a normaliser");
  const Eigen::Index c = blocks.front()->cols();
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(c);
  double n = 0;
  for (const Mat* b : blocks) {
    if (b->cols() != c) fail(ErrorCode::ShapeMismatch, "normaliser blocks differ in width");
    sum += b->colwise().sum();
    n += static_cast<double>(b->rows());
  }
  if (n < 1) fail(ErrorCode::EmptyInput, "no rows to fit a normaliser");
  Normalizer out;
  out.mean = sum / n;
  Eigen::RowVectorXd ss = Eigen::RowVectorXd::Zero(c);
  for (const Mat* b : blocks) ss += (b->rowwise() - out.mean).array().square().colwise().sum().matrix();
  out.std = n > 1 ? (ss / (n - 1)).cwiseSqrt().eval() : Eigen::RowVectorXd::Ones(c);
  for (Eigen::Index j = 0; j < c; ++j)
    if (!(out.std[j] > 1e-12)) out.std[j] = 1.0;
  return out;
}

Mat Normalizer::apply(const Mat& x) const {
  return ((x.rowwise() - mean).array().rowwise() / std.array()).matrix();
}

Mat Normalizer::invert(const Mat& x) const { return ((x.array().rowwise() * std.array()).rowwise() + mean.array()).matrix(); }

TrainSample make_sample(std::string id, ShellMesh mesh, NodeRoles roles, Mat target,
                        const HierarchySkeleton& skeleton, const FeatureLayout& layout, CoarsePlacement placement) {
  if (roles.size() != mesh.node_count() || target.rows() != mesh.node_count() || target.cols() != 3)
    fail(ErrorCode::ShapeMismatch, "sample " + id + ": roles or target do not match the mesh");
  TrainSample s;
  s.id = std::move(id);
  s.hierarchy = build_sample_hierarchy(skeleton, mesh, placement);
  s.node_features = assemble_features(layout, mesh, roles);
  s.mesh = std::move(mesh);
  s.roles = std::move(roles);
  s.target = std::move(target);
  return s;
}

Normalization Normalization::fit(const std::vector<TrainSample>& samples) {
  std::vector<const TrainSample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  return fit(ptrs);
}

Normalization Normalization::fit(const std::vector<const TrainSample*>& samples) {
  if (samples.empty()) fail(ErrorCode::EmptyInput, "no training samples");
  Normalization n;
  std::vector<const Mat*> node, fine, cross, target;
  const int L = samples.front()->hierarchy.levels;
  std::vector<std::vector<const Mat*>> coarse(L);
  for (const TrainSample* sp : samples) {
    const TrainSample& s = *sp;
    node.push_back(&s.node_features);
    fine.push_back(&s.hierarchy.level[0].features);
    target.push_back(&s.target);
    if (s.hierarchy.levels != L) fail(ErrorCode::ShapeMismatch, "samples differ in level count");
    if (L > 0) cross.push_back(&s.hierarchy.down[0].features);
    for (int l = 1; l <= L; ++l) coarse[l - 1].push_back(&s.hierarchy.level[l].features);
  }
  n.node = Normalizer::fit(node);
  n.fine_edge = Normalizer::fit(fine);
  if (L > 0) n.cross_edge = Normalizer::fit(cross);
  for (auto& c : coarse) n.coarse_edge.push_back(Normalizer::fit(c));
  n.target = Normalizer::fit(target);
  return n;
}

namespace {

nlohmann::json vec_json(const Eigen::RowVectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::RowVectorXd json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nlohmann::json norm_json(const Normalizer& n) { return {{"mean", vec_json(n.mean)}, {"std", vec_json(n.std)}}; }

Normalizer json_norm(const nlohmann::json& j) { return {json_vec(j.at("mean")), json_vec(j.at("std"))}; }

}  // namespace

nlohmann::json to_json(const Normalization& n) {
  nlohmann::json j;
  j["node"] = norm_json(n.node);
  j["fine_edge"] = norm_json(n.fine_edge);
  j["cross_edge"] = norm_json(n.cross_edge);
  j["coarse_edge"] = nlohmann::json::array();
  for (const auto& c : n.coarse_edge) j["coarse_edge"].push_back(norm_json(c));
  j["target"] = norm_json(n.target);
  return j;
}

Normalization normalization_from_json(const nlohmann::json& j) {
  Normalization n;
  n.node = json_norm(j.at("node"));
  n.fine_edge = json_norm(j.at("fine_edge"));
  n.cross_edge = json_norm(j.at("cross_edge"));
  for (const auto& c : j.at("coarse_edge")) n.coarse_edge.push_back(json_norm(c));
  n.target = json_norm(j.at("target"));
  return n;
}

GraphInput make_input(const TrainSample& s, const Normalization& norm, const HierarchySkeleton& skeleton) {
  const GraphHierarchy& h = s.hierarchy;
  if (h.levels != static_cast<int>(norm.coarse_edge.size()))
    fail(ErrorCode::ShapeMismatch, "normalisation and hierarchy level counts differ");
  GraphInput in;
  in.node_features = norm.node.apply(s.node_features);
  in.fine_edges = h.level[0].edges;
  in.fine_features = norm.fine_edge.apply(h.level[0].features);
  if (h.levels > 0) {
    in.cross_edges = h.down[0].edges;
    in.cross_features = norm.cross_edge.apply(h.down[0].features);
    in.up_edges = in.cross_edges.reversed();
    Mat up = h.down[0].features;
    up.leftCols(3) *= -1.0;
    in.up_features = norm.cross_edge.apply(up);
  }
  for (int l = 1; l <= h.levels; ++l) {
    in.coarse_edges.push_back(h.level[l].edges);
    in.coarse_features.push_back(norm.coarse_edge[l - 1].apply(h.level[l].features));
    in.level_nodes.push_back(h.node_count(l));
  }
  for (int l = 1; l < h.levels; ++l) in.down_edges.push_back(h.down[l].edges);
  in.coarse_digest = h.coarse_digest;
  (void)skeleton;
  return in;
}

MaskRealisation sample_mask(const GraphHierarchy& h, const NodeRoles& roles, double ratio, std::mt19937_64& rng) {
  if (!(ratio >= 0.0 && ratio < 1.0))
    fail(ErrorCode::RatioOutOfRange, fmt::format("mask ratio {} outside [0, 1)", ratio));
  if (roles.size() != h.node_count(0)) fail(ErrorCode::ShapeMismatch, "roles do not match the fine level");
  std::vector<int> pool;
  for (int i = 0; i < roles.size(); ++i)
    if (!roles.is_protected(i)) pool.push_back(i);
  const auto m = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(pool.size())));
  for (std::size_t i = 0; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  MaskRealisation out;
  out.nodes.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(m));
  std::sort(out.nodes.begin(), out.nodes.end());

  std::vector<char> masked(h.node_count(0), 0);
  for (int i : out.nodes) masked[i] = 1;
  const auto& fe = h.level[0].edges;
  for (int e = 0; e < fe.size(); ++e)
    if (masked[fe.src[e]] || masked[fe.dst[e]]) out.fine_edges.push_back(e);
  if (!h.down.empty()) {
    const auto& ce = h.down[0].edges;
    for (int e = 0; e < ce.size(); ++e)
      if (masked[ce.src[e]]) out.cross_edges.push_back(e);
  }
  return out;
}

namespace {

void drop_rows(const DirectedEdges& edges, const Mat& feats, const std::vector<int>& drop, DirectedEdges& out_edges,
               Mat& out_feats) {
  std::vector<char> gone(edges.size(), 0);
  for (int e : drop) gone[e] = 1;
  const int keep = edges.size() - static_cast<int>(drop.size());
  out_edges = {};
  out_edges.src.reserve(keep);
  out_edges.dst.reserve(keep);
  out_feats.resize(keep, feats.cols());
  int r = 0;
  for (int e = 0; e < edges.size(); ++e) {
    if (gone[e]) continue;
    out_edges.push(edges.src[e], edges.dst[e]);
    out_feats.row(r++) = feats.row(e);
  }
}

}  // namespace

GraphInput apply_mask(const GraphInput& in, const MaskRealisation& mask) {
  GraphInput out;
  out.node_features = in.node_features;
  drop_rows(in.fine_edges, in.fine_features, mask.fine_edges, out.fine_edges, out.fine_features);
  drop_rows(in.cross_edges, in.cross_features, mask.cross_edges, out.cross_edges, out.cross_features);
  out.up_edges = in.up_edges;
  out.up_features = in.up_features;
  out.coarse_edges = in.coarse_edges;
  out.coarse_features = in.coarse_features;
  out.down_edges = in.down_edges;
  out.level_nodes = in.level_nodes;
  out.coarse_digest = in.coarse_digest;
  return out;
}

double loss_mse(const Mat& pred, const Mat& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    fail(ErrorCode::ShapeMismatch, "prediction and target shapes differ");
  return pred.size() ? (pred - target).squaredNorm() / static_cast<double>(pred.size()) : 0.0;
}

double metric_med(const Mat& pred, const Mat& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    fail(ErrorCode::ShapeMismatch, "prediction and target shapes differ");
  if (pred.rows() == 0) return 0.0;
  return (pred - target).rowwise().norm().mean();
}

double intrusion(const Mat& y) { return y.rows() ? y.col(2).cwiseAbs().maxCoeff() : 0.0; }

double metric_mipe(const Mat& pred, const Mat& target, double eps) {
  if (!(eps > 0)) fail(ErrorCode::InvalidArgument, "MIPE epsilon must be positive");
  const double it = intrusion(target);
  return std::abs(intrusion(pred) - it) / (it + eps) * 100.0;
}

double improvement(double error_no_pretrain, double error_pretrain) {
  if (error_no_pretrain == 0.0) fail(ErrorCode::InvalidArgument, "baseline error is zero");
  return (error_no_pretrain - error_pretrain) / error_no_pretrain * 100.0;
}

std::vector<EpochLog> train(TrainState& state, const std::vector<GraphInput>& inputs,
                            const std::vector<Mat>& targets, const std::vector<const TrainSample*>& samples,
                            const TrainOptions& options) {
  if (inputs.empty()) fail(ErrorCode::EmptyInput, "no training inputs");
  if (inputs.size() != targets.size() || inputs.size() != samples.size())
    fail(ErrorCode::ShapeMismatch, "inputs, targets and samples differ in count");
  if (options.batch < 1) fail(ErrorCode::InvalidArgument, "batch size must be positive");
  if (options.mask_ratio != 0.0 && !(options.mask_ratio > 0.0 && options.mask_ratio < 1.0))
    fail(ErrorCode::RatioOutOfRange, fmt::format("mask ratio {} outside [0, 1)", options.mask_ratio));

  GUNet& model = *state.model;
  ParamStore& store = model.params();
  store.freeze(options.frozen);
  Adam& adam = state.adam;
  adam = Adam(options.adam);
  for (auto& p : store.all()) {
    p->adam_m.resize(0, 0);
    p->adam_v.resize(0, 0);
  }

  std::vector<int> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<EpochLog> log;
  Tape tape;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), state.rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch) {
      const std::size_t end = std::min(order.size(), start + options.batch);
      store.zero_grad();
      for (std::size_t b = start; b < end; ++b) {
        const int idx = order[b];
        GraphInput masked;
        const GraphInput* in = &inputs[idx];
        if (options.mask_ratio > 0.0) {
          const auto mask = sample_mask(samples[idx]->hierarchy, samples[idx]->roles, options.mask_ratio, state.rng);
          masked = apply_mask(inputs[idx], mask);
          in = &masked;
        }
        tape.clear();
        const auto loss = tape.mse(model.forward(tape, *in), targets[idx]);
        tape.backward(loss);
        total += tape.value(loss)(0, 0);
      }
      store.scale_grad(1.0 / static_cast<double>(end - start));
      adam.step(store);
    }
    log.push_back({epoch, total / static_cast<double>(inputs.size())});
    spdlog::debug("epoch {} loss {:.6e}", epoch, log.back().loss);
  }
  store.zero_grad();
  return log;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double Metrics::med_mean() const { return mean_of(med); }
double Metrics::med_std() const { return sample_std(med); }
double Metrics::mipe_mean() const { return mean_of(mipe); }
double Metrics::mipe_std() const { return sample_std(mipe); }

Metrics evaluate(const GUNet& model, const Normalization& norm, const std::vector<GraphInput>& inputs,
                 const std::vector<const TrainSample*>& samples) {
  if (inputs.size() != samples.size()) fail(ErrorCode::ShapeMismatch, "inputs and samples differ in count");
  Metrics m;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Mat pred = norm.target.invert(model.predict(inputs[i]));
    m.med.push_back(metric_med(pred, samples[i]->target));
    m.mipe.push_back(metric_mipe(pred, samples[i]->target));
  }
  return m;
}

Mat lhs_sample(const std::vector<std::pair<double, double>>& bounds, int n, std::uint64_t seed) {
  if (n < 1) fail(ErrorCode::InvalidArgument, "LHS needs at least one sample");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Mat out(n, static_cast<Eigen::Index>(bounds.size()));
  std::vector<int> perm(n);
  for (std::size_t p = 0; p < bounds.size(); ++p) {
    const auto [lo, hi] = bounds[p];
    if (hi < lo) fail(ErrorCode::InvalidArgument, fmt::format("LHS bound {} is inverted", p));
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i > 0; --i) {
      std::uniform_int_distribution<int> pick(0, i);
      std::swap(perm[i], perm[pick(rng)]);
    }
    for (int i = 0; i < n; ++i) {
      const double f = (perm[i] + u(rng)) / n;
      out(i, static_cast<Eigen::Index>(p)) = lo + std::min(f, std::nextafter(1.0, 0.0)) * (hi - lo);
    }
  }
  return out;
}

}  // namespace mmg
