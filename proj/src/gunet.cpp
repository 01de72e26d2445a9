#include "mmg/gunet.hpp"

#include "mmg/error.hpp"

#include <fmt/format.h>

namespace mmg {

LevelShape LevelShape::from(const HierarchySkeleton& skeleton) {
  LevelShape s;
  for (int l = 1; l <= skeleton.levels(); ++l) s.nodes.push_back(skeleton.level_size(l));
  for (const auto& d : skeleton.down_edges) s.down_edges.push_back(d.size());
  s.digest = skeleton.topology_digest();
  return s;
}

Mlp make_mlp(ParamStore& store, const std::string& name, LayerKind kind, int in, int hidden, int layers,
             int out, bool norm, std::mt19937_64& rng) {
  Mlp m;
  m.in = in;
  m.out = out;
  int prev = in;
  for (int l = 0; l <= layers; ++l) {
    const int next = l == layers ? out : hidden;
    auto& W = store.add(fmt::format("{}.{}.W", name, l), kind, prev, next);
    auto& b = store.add(fmt::format("{}.{}.b", name, l), kind, 1, next);
    init_uniform(W, prev, rng);
    m.weights.push_back(&W);
    m.biases.push_back(&b);
    prev = next;
  }
  if (norm) {
    m.gamma = &store.add(name + ".ln.g", kind, 1, out);
    m.beta = &store.add(name + ".ln.b", kind, 1, out);
    m.gamma->value.setOnes();
  }
  return m;
}

Tape::Var Mlp::first(Tape& t, Tape::Var part, int offset, bool with_bias) const {
  return t.linear(part, *weights[0], with_bias ? biases[0] : nullptr, offset);
}

Tape::Var Mlp::rest(Tape& t, Tape::Var pre) const {
  Tape::Var x = pre;
  for (std::size_t l = 1; l < weights.size(); ++l) x = t.linear(t.leaky_relu(x), *weights[l], biases[l]);
  if (gamma) x = t.layer_norm(x, *gamma, *beta);
  return x;
}

Tape::Var ig_mp(Tape& t, const MessagePassing& mp, Tape::Var h, Tape::Var e, const DirectedEdges& edges) {
  const int w = static_cast<int>(t.value(h).cols());
  const int n = static_cast<int>(t.value(h).rows());
  // The first edge layer on [h_dst, h_src, e] is split by block so the node
  // projections are computed once per node and gathered per edge.
  const Tape::Var pd = mp.edge.first(t, h, 0, false);
  const Tape::Var ps = mp.edge.first(t, h, w, false);
  const Tape::Var pe = mp.edge.first(t, e, 2 * w, true);
  const Tape::Var pre = t.add(t.add(t.gather(pd, edges.dst), t.gather(ps, edges.src)), pe);
  const Tape::Var msg = mp.edge.rest(t, pre);
  const Tape::Var agg = t.scatter_sum(msg, edges.dst, n);
  const Tape::Var upd = mp.node.rest(t, t.add(mp.node.first(t, h, 0, false), mp.node.first(t, agg, w, true)));
  return t.add(h, upd);
}

Tape::Var es_layer(Tape& t, Tape::Var h, const DirectedEdges& edges, int out_rows, Parameter& W) {
  return t.leaky_relu(t.edge_specific(h, edges.src, edges.dst, out_rows, W));
}

const std::set<LayerKind>& default_freeze_policy() {
  static const std::set<LayerKind> policy{LayerKind::DSES, LayerKind::USES, LayerKind::CoarseIGMP};
  return policy;
}

GUNet::GUNet(const ModelConfig& config, const LevelShape& shape) : cfg_(config), shape_(shape) {
  const int L = cfg_.levels;
  if (L < 1) fail(ErrorCode::InvalidArgument, "model needs at least one coarse level");
  if (static_cast<int>(shape_.nodes.size()) != L || static_cast<int>(shape_.down_edges.size()) != L - 1)
    fail(ErrorCode::ShapeMismatch,
         fmt::format("model has {} levels, hierarchy shape has {}", L, shape_.nodes.size()));
  std::mt19937_64 rng(cfg_.seed);
  const int w = cfg_.width;
  const int nl = cfg_.mlp_layers;
  auto fh = [&](int out) { return cfg_.mlp_hidden > 0 ? cfg_.mlp_hidden : out; };
  auto ch = [&](int out) { return cfg_.coarse_hidden > 0 ? cfg_.coarse_hidden : out; };

  enc_node_ = make_mlp(store_, "enc.node", LayerKind::Encoder, cfg_.node_in, fh(w), nl, w, true, rng);
  enc_edge_ = make_mlp(store_, "enc.edge", LayerKind::Encoder, cfg_.edge_in, fh(w), nl, w, true, rng);
  for (int s = 0; s < cfg_.fine_steps; ++s)
    fine_mp_.push_back(
        {make_mlp(store_, fmt::format("fine{}.edge", s), LayerKind::FineIGMP, 3 * w, fh(w), nl, w, true, rng),
         make_mlp(store_, fmt::format("fine{}.node", s), LayerKind::FineIGMP, 2 * w, fh(w), nl, w, true, rng)});
  ds_edge_ = make_mlp(store_, "dsmp.edge", LayerKind::DSMP, w + cfg_.edge_in, fh(w), nl, w, true, rng);
  ds_node_ = make_mlp(store_, "dsmp.node", LayerKind::DSMP, w, fh(w), nl, w, true, rng);

  for (int l = 1; l < L; ++l) {
    const int cin = cfg_.level_width(l), cout = cfg_.level_width(l + 1);
    const int E = shape_.down_edges[l - 1];
    auto& W = store_.add(fmt::format("dses{}.W", l), LayerKind::DSES, static_cast<Eigen::Index>(E) * cin, cout);
    const double kbar = static_cast<double>(E) / shape_.nodes[l];
    init_uniform(W, kbar * cin, rng);
    ds_es_.push_back(&W);
  }
  const int cl = cfg_.level_width(L);
  for (int s = 0; s < cfg_.coarse_steps; ++s)
    coarse_mp_.push_back(
        {make_mlp(store_, fmt::format("coarse{}.edge", s), LayerKind::CoarseIGMP, 2 * cl + cfg_.edge_in, ch(cl),
                  nl, cl, true, rng),
         make_mlp(store_, fmt::format("coarse{}.node", s), LayerKind::CoarseIGMP, 2 * cl, ch(cl), nl, cl, true,
                  rng)});
  us_es_.resize(L > 1 ? L - 1 : 0);
  fuse_.resize(L > 1 ? L - 1 : 0);
  for (int l = L - 1; l >= 1; --l) {
    const int cin = cfg_.level_width(l + 1), cout = cfg_.level_width(l);
    const int E = shape_.down_edges[l - 1];
    auto& W = store_.add(fmt::format("uses{}.W", l), LayerKind::USES, static_cast<Eigen::Index>(E) * cin, cout);
    const double kbar = static_cast<double>(E) / shape_.nodes[l - 1];
    init_uniform(W, kbar * cin, rng);
    us_es_[l - 1] = &W;
    fuse_[l - 1] = make_mlp(store_, fmt::format("fuse{}", l), LayerKind::USES, 2 * cout, ch(cout), nl, cout,
                            true, rng);
  }
  us_edge_ = make_mlp(store_, "usmp.edge", LayerKind::USMP, 2 * w + cfg_.edge_in, fh(w), nl, w, true, rng);
  us_node_ = make_mlp(store_, "usmp.node", LayerKind::USMP, 2 * w, fh(w), nl, w, true, rng);
  decoder_ = make_mlp(store_, "dec", LayerKind::Decoder, w, cfg_.mlp_hidden > 0 ? cfg_.mlp_hidden : w, nl,
                      cfg_.out_dim, false, rng);
}

Tape::Var GUNet::forward(Tape& t, const GraphInput& in) const {
  const int L = cfg_.levels;
  const int w = cfg_.width;
  if (in.node_features.cols() != cfg_.node_in)
    fail(ErrorCode::ShapeMismatch,
         fmt::format("node features have {} columns, model expects {}", in.node_features.cols(), cfg_.node_in));
  if (in.fine_features.cols() != cfg_.edge_in)
    fail(ErrorCode::ShapeMismatch, "fine edge features have the wrong width");
  if (static_cast<int>(in.level_nodes.size()) != L)
    fail(ErrorCode::ShapeMismatch, fmt::format("input has {} coarse levels, model {}", in.level_nodes.size(), L));
  if (in.level_nodes != shape_.nodes || in.coarse_digest != shape_.digest)
    fail(ErrorCode::TopologyDigestMismatch, fmt::format("sample coarse topology {:016x} differs from model {:016x}",
                                                        in.coarse_digest, shape_.digest));
  const int n0 = in.fine_nodes();

  // Encode.
  Tape::Var h0 = enc_node_(t, t.input(in.node_features));
  const Tape::Var e0 = enc_edge_(t, t.input(in.fine_features));
  for (const auto& mp : fine_mp_) h0 = ig_mp(t, mp, h0, e0, in.fine_edges);

  // Fine -> level 1, shared weights.
  std::vector<Tape::Var> skip(L + 1);
  {
    const Tape::Var ps = ds_edge_.first(t, h0, 0, false);
    const Tape::Var pe = ds_edge_.first(t, t.input(in.cross_features), w, true);
    const Tape::Var msg = ds_edge_.rest(t, t.add(t.gather(ps, in.cross_edges.src), pe));
    skip[1] = ds_node_(t, t.scatter_sum(msg, in.cross_edges.dst, in.level_nodes[0]));
  }
  for (int l = 1; l < L; ++l)
    skip[l + 1] = es_layer(t, skip[l], in.down_edges[l - 1], in.level_nodes[l], *ds_es_[l - 1]);

  Tape::Var hc = skip[L];
  const Tape::Var ec = t.input(in.coarse_features[L - 1]);
  for (const auto& mp : coarse_mp_) hc = ig_mp(t, mp, hc, ec, in.coarse_edges[L - 1]);

  for (int l = L - 1; l >= 1; --l) {
    const DirectedEdges& d = in.down_edges[l - 1];
    const Tape::Var u = t.edge_specific(hc, d.dst, d.src, in.level_nodes[l - 1], *us_es_[l - 1]);
    const Mlp& f = fuse_[l - 1];
    const int c = cfg_.level_width(l);
    hc = f.rest(t, t.add(f.first(t, t.leaky_relu(u), 0, false), f.first(t, skip[l], c, true)));
  }

  // Level 1 -> fine over every reversed cross edge.
  {
    const Tape::Var pd = us_edge_.first(t, h0, 0, false);
    const Tape::Var ps = us_edge_.first(t, hc, w, false);
    const Tape::Var pe = us_edge_.first(t, t.input(in.up_features), 2 * w, true);
    const Tape::Var pre = t.add(t.add(t.gather(pd, in.up_edges.dst), t.gather(ps, in.up_edges.src)), pe);
    const Tape::Var msg = us_edge_.rest(t, pre);
    const Tape::Var agg = t.scatter_sum(msg, in.up_edges.dst, n0);
    h0 = t.add(h0, us_node_.rest(t, t.add(us_node_.first(t, h0, 0, false), us_node_.first(t, agg, w, true))));
  }
  return decoder_(t, h0);
}

Mat GUNet::predict(const GraphInput& in) const {
  Tape t;
  return t.value(forward(t, in));
}

ParameterCount GUNet::count_parameters(const std::set<LayerKind>& frozen) const {
  ParameterCount c;
  for (const auto& p : store_.all()) {
    c.total += p->size();
    c.per_kind[p->kind] += p->size();
    if (!frozen.contains(p->kind)) c.trainable += p->size();
  }
  return c;
}

ModelConfig reference_config() {
  ModelConfig c;
  c.node_in = 5;
  c.width = 32;
  c.levels = 3;
  c.fine_steps = 2;
  c.coarse_steps = 15;
  c.mlp_layers = 2;
  c.mlp_hidden = 92;
  c.coarse_hidden = 0;
  return c;
}

LevelShape reference_shape(const ModelConfig& config, int k) {
  static constexpr int sizes[] = {1418, 354, 88, 22, 6};
  LevelShape s;
  for (int l = 0; l < config.levels; ++l) s.nodes.push_back(sizes[std::min(l, 4)]);
  for (int l = 0; l + 1 < config.levels; ++l) s.down_edges.push_back(s.nodes[l] * k);
  return s;
}

}  // namespace mmg
