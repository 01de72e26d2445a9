#include "mmg/diffcore.hpp"

#include "mmg/error.hpp"
#include "mmg/io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mmg {

std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Encoder: return "Encoder";
    case LayerKind::FineIGMP: return "FineIGMP";
    case LayerKind::DSMP: return "DSMP";
    case LayerKind::DSES: return "DSES";
    case LayerKind::CoarseIGMP: return "CoarseIGMP";
    case LayerKind::USES: return "USES";
    case LayerKind::USMP: return "USMP";
    case LayerKind::Decoder: return "Decoder";
  }
  return "Encoder";
}

LayerKind parse_layer_kind(std::string_view s) {
  for (int k = 0; k <= static_cast<int>(LayerKind::Decoder); ++k)
    if (to_string(static_cast<LayerKind>(k)) == s) return static_cast<LayerKind>(k);
  fail(ErrorCode::InvalidArgument, "unknown layer kind '" + std::string(s) + "'");
}

Parameter& ParamStore::add(std::string name, LayerKind kind, Eigen::Index rows, Eigen::Index cols) {
  for (const auto& p : params_)
    if (p->name == name) fail(ErrorCode::InvalidArgument, "duplicate parameter " + name);
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->kind = kind;
  p->value = Mat::Zero(rows, cols);
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParamStore::at(std::string_view name) {
  for (auto& p : params_)
    if (p->name == name) return *p;
  fail(ErrorCode::InvalidArgument, "no parameter named " + std::string(name));
}

const Parameter& ParamStore::at(std::string_view name) const {
  return const_cast<ParamStore*>(this)->at(name);
}

void ParamStore::freeze(const std::set<LayerKind>& kinds) {
  for (auto& p : params_) p->frozen = kinds.contains(p->kind);
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

void ParamStore::scale_grad(double s) {
  for (auto& p : params_)
    if (p->has_grad()) p->grad *= s;
}

std::int64_t ParamStore::count(bool trainable_only) const {
  std::int64_t n = 0;
  for (const auto& p : params_)
    if (!trainable_only || !p->frozen) n += p->size();
  return n;
}

std::int64_t ParamStore::count(LayerKind kind) const {
  std::int64_t n = 0;
  for (const auto& p : params_)
    if (p->kind == kind) n += p->size();
  return n;
}

std::uint64_t ParamStore::checksum(bool frozen) const {
  Fnv1a h;
  for (const auto& p : params_) {
    if (p->frozen != frozen) continue;
    h.bytes(p->name.data(), p->name.size());
    h.span(std::span<const double>(p->value.data(), p->value.size()));
  }
  return h.digest();
}

// Tape ------------------------------------------------------------------------

Tape::Var Tape::push(Mat value, bool needs_grad, std::function<void(Tape&, int)> back) {
  nodes_.push_back(Node{std::move(value), Mat(), needs_grad, std::move(back)});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(Mat& target, const Mat& delta) {
  if (target.size() == 0)
    target = delta;
  else
    target += delta;
}

namespace {

Mat& grad_of(Parameter& p) {
  if (!p.has_grad()) p.grad = Mat::Zero(p.value.rows(), p.value.cols());
  return p.grad;
}

}  // namespace

Tape::Var Tape::input(Mat value, bool requires_grad) { return push(std::move(value), requires_grad, nullptr); }

Tape::Var Tape::param(Parameter& p) {
  return push(p.value, !p.frozen, [&p](Tape& t, int id) {
    if (!p.frozen) grad_of(p) += t.nodes_[id].grad;
  });
}

Tape::Var Tape::linear(Var x, Parameter& W, Parameter* b, int row_offset) {
  const Mat& X = value(x);
  const Eigen::Index k = X.cols();
  if (row_offset < 0 || row_offset + k > W.value.rows())
    fail(ErrorCode::ShapeMismatch, fmt::format("linear {}: input width {} at offset {} vs {} rows", W.name, k,
                                               row_offset, W.value.rows()));
  if (b && b->value.cols() != W.value.cols())
    fail(ErrorCode::ShapeMismatch, "linear " + W.name + ": bias width mismatch");
  Mat y(X.rows(), W.value.cols());
  y.noalias() = X * W.value.middleRows(row_offset, k);
  if (b) y.rowwise() += b->value.row(0);
  const bool ng = needs(x) || trainable(&W) || trainable(b);
  return push(std::move(y), ng, [x, &W, b, row_offset, k](Tape& t, int id) {
    const Mat& dy = t.nodes_[id].grad;
    const Mat& X = t.nodes_[x.id].value;
    if (!W.frozen) grad_of(W).middleRows(row_offset, k).noalias() += X.transpose() * dy;
    if (b && !b->frozen) grad_of(*b).row(0) += dy.colwise().sum();
    if (t.needs(x)) {
      Mat& gx = t.nodes_[x.id].grad;
      if (gx.size() == 0)
        gx.noalias() = dy * W.value.middleRows(row_offset, k).transpose();
      else
        gx.noalias() += dy * W.value.middleRows(row_offset, k).transpose();
    }
  });
}

Tape::Var Tape::leaky_relu(Var x, double slope) {
  Mat y = value(x).unaryExpr([slope](double v) { return v > 0 ? v : slope * v; });
  return push(std::move(y), needs(x), [x, slope](Tape& t, int id) {
    if (!t.needs(x)) return;
    const Mat& X = t.nodes_[x.id].value;
    const Mat& dy = t.nodes_[id].grad;
    Mat dx = dy.binaryExpr(X, [slope](double g, double v) { return v > 0 ? g : slope * g; });
    accumulate(t.nodes_[x.id].grad, dx);
  });
}

Tape::Var Tape::layer_norm(Var x, Parameter& gamma, Parameter& beta, double eps) {
  const Mat& X = value(x);
  const Eigen::Index n = X.rows(), c = X.cols();
  if (gamma.value.cols() != c || beta.value.cols() != c)
    fail(ErrorCode::ShapeMismatch, "layer_norm " + gamma.name + ": width mismatch");
  Mat xhat(n, c);
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = X.row(i).mean();
    const double var = (X.row(i).array() - mu).square().mean();
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (X.row(i).array() - mu) * inv_std[i];
  }
  Mat y = (xhat.array().rowwise() * gamma.value.row(0).array()).rowwise() + beta.value.row(0).array();
  const bool ng = needs(x) || trainable(&gamma) || trainable(&beta);
  return push(std::move(y), ng,
              [x, &gamma, &beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, int id) {
                const Mat& dy = t.nodes_[id].grad;
                if (!gamma.frozen) grad_of(gamma).row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
                if (!beta.frozen) grad_of(beta).row(0) += dy.colwise().sum();
                if (!t.needs(x)) return;
                const Eigen::Index c = dy.cols();
                Mat dxhat = dy.array().rowwise() * gamma.value.row(0).array();
                Mat dx(dy.rows(), c);
                for (Eigen::Index i = 0; i < dy.rows(); ++i) {
                  const double m1 = dxhat.row(i).mean();
                  const double m2 = dxhat.row(i).dot(xhat.row(i)) / static_cast<double>(c);
                  dx.row(i) = inv_std[i] * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
                }
                accumulate(t.nodes_[x.id].grad, dx);
              });
}

Tape::Var Tape::concat(std::span<const Var> parts) {
  if (parts.empty()) fail(ErrorCode::InvalidArgument, "concat of nothing");
  const Eigen::Index n = value(parts[0]).rows();
  Eigen::Index c = 0;
  bool ng = false;
  for (auto p : parts) {
    if (value(p).rows() != n) fail(ErrorCode::ShapeMismatch, "concat row counts differ");
    c += value(p).cols();
    ng = ng || needs(p);
  }
  Mat y(n, c);
  Eigen::Index off = 0;
  for (auto p : parts) {
    y.middleCols(off, value(p).cols()) = value(p);
    off += value(p).cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return push(std::move(y), ng, [ps = std::move(ps)](Tape& t, int id) {
    const Mat& dy = t.nodes_[id].grad;
    Eigen::Index off = 0;
    for (auto p : ps) {
      const Eigen::Index w = t.nodes_[p.id].value.cols();
      if (t.needs(p)) {
        Mat& g = t.nodes_[p.id].grad;
        if (g.size() == 0)
          g = dy.middleCols(off, w);
        else
          g += dy.middleCols(off, w);
      }
      off += w;
    }
  });
}

Tape::Var Tape::gather(Var x, std::span<const int> rows) {
  const Mat& X = value(x);
  Mat y(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= X.rows())
      fail(ErrorCode::IndexOutOfRange, fmt::format("gather index {} of {}", rows[r], X.rows()));
    y.row(r) = X.row(rows[r]);
  }
  return push(std::move(y), needs(x), [x, rows](Tape& t, int id) {
    if (!t.needs(x)) return;
    const Mat& dy = t.nodes_[id].grad;
    Mat& g = t.nodes_[x.id].grad;
    if (g.size() == 0) g = Mat::Zero(t.nodes_[x.id].value.rows(), dy.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) g.row(rows[r]) += dy.row(r);
  });
}

Tape::Var Tape::scatter_sum(Var messages, std::span<const int> dest, int out_rows) {
  const Mat& M = value(messages);
  if (static_cast<Eigen::Index>(dest.size()) != M.rows())
    fail(ErrorCode::ShapeMismatch, fmt::format("scatter_sum: {} messages, {} destinations", M.rows(), dest.size()));
  Mat y = Mat::Zero(out_rows, M.cols());
  for (std::size_t e = 0; e < dest.size(); ++e) {
    if (dest[e] < 0 || dest[e] >= out_rows)
      fail(ErrorCode::IndexOutOfRange, fmt::format("scatter_sum destination {} of {}", dest[e], out_rows));
    y.row(dest[e]) += M.row(e);
  }
  return push(std::move(y), needs(messages), [messages, dest](Tape& t, int id) {
    if (!t.needs(messages)) return;
    const Mat& dy = t.nodes_[id].grad;
    Mat dm(static_cast<Eigen::Index>(dest.size()), dy.cols());
    for (std::size_t e = 0; e < dest.size(); ++e) dm.row(e) = dy.row(dest[e]);
    accumulate(t.nodes_[messages.id].grad, dm);
  });
}

Tape::Var Tape::add(Var a, Var b) {
  if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
    fail(ErrorCode::ShapeMismatch, "add: shapes differ");
  Mat y = value(a) + value(b);
  return push(std::move(y), needs(a) || needs(b), [a, b](Tape& t, int id) {
    const Mat& dy = t.nodes_[id].grad;
    if (t.needs(a)) accumulate(t.nodes_[a.id].grad, dy);
    if (t.needs(b)) accumulate(t.nodes_[b.id].grad, dy);
  });
}

Tape::Var Tape::edge_specific(Var x, std::span<const int> src, std::span<const int> dst, int out_rows,
                              Parameter& W) {
  const Mat& X = value(x);
  const Eigen::Index cin = X.cols(), cout = W.value.cols();
  const auto E = static_cast<Eigen::Index>(src.size());
  if (dst.size() != src.size()) fail(ErrorCode::ShapeMismatch, "edge_specific: src/dst lengths differ");
  if (W.value.rows() != E * cin)
    fail(ErrorCode::ShapeMismatch, fmt::format("edge_specific {}: {} rows for {} edges x {} channels", W.name,
                                               W.value.rows(), E, cin));
  Mat y = Mat::Zero(out_rows, cout);
  for (Eigen::Index e = 0; e < E; ++e) {
    if (src[e] < 0 || src[e] >= X.rows() || dst[e] < 0 || dst[e] >= out_rows)
      fail(ErrorCode::IndexOutOfRange, fmt::format("edge_specific edge {} ({} -> {})", e, src[e], dst[e]));
    y.row(dst[e]).noalias() += X.row(src[e]) * W.value.middleRows(e * cin, cin);
  }
  const bool ng = needs(x) || trainable(&W);
  return push(std::move(y), ng, [x, src, dst, &W, cin](Tape& t, int id) {
    const Mat& dy = t.nodes_[id].grad;
    const Mat& X = t.nodes_[x.id].value;
    const auto E = static_cast<Eigen::Index>(src.size());
    if (!W.frozen) {
      Mat& g = grad_of(W);
      for (Eigen::Index e = 0; e < E; ++e)
        g.middleRows(e * cin, cin).noalias() += X.row(src[e]).transpose() * dy.row(dst[e]);
    }
    if (t.needs(x)) {
      Mat& gx = t.nodes_[x.id].grad;
      if (gx.size() == 0) gx = Mat::Zero(X.rows(), X.cols());
      for (Eigen::Index e = 0; e < E; ++e)
        gx.row(src[e]).noalias() += dy.row(dst[e]) * W.value.middleRows(e * cin, cin).transpose();
    }
  });
}

Tape::Var Tape::mse(Var pred, const Mat& target) {
  const Mat& P = value(pred);
  if (P.rows() != target.rows() || P.cols() != target.cols())
    fail(ErrorCode::ShapeMismatch, "mse: prediction and target shapes differ");
  Mat diff = P - target;
  const double n = static_cast<double>(diff.size());
  Mat y(1, 1);
  y(0, 0) = n > 0 ? diff.squaredNorm() / n : 0.0;
  return push(std::move(y), needs(pred), [pred, diff = std::move(diff), n](Tape& t, int id) {
    if (!t.needs(pred)) return;
    const double g = t.nodes_[id].grad(0, 0);
    accumulate(t.nodes_[pred.id].grad, Mat((2.0 * g / n) * diff));
  });
}

Tape::Var Tape::weighted_sum(Var x, const Mat& weights) {
  const Mat& X = value(x);
  if (X.rows() != weights.rows() || X.cols() != weights.cols())
    fail(ErrorCode::ShapeMismatch, "weighted_sum: shapes differ");
  Mat y(1, 1);
  y(0, 0) = X.cwiseProduct(weights).sum();
  return push(std::move(y), needs(x), [x, weights](Tape& t, int id) {
    if (!t.needs(x)) return;
    accumulate(t.nodes_[x.id].grad, Mat(t.nodes_[id].grad(0, 0) * weights));
  });
}

void Tape::backward(Var out) {
  if (value(out).size() != 1) fail(ErrorCode::ShapeMismatch, "backward needs a scalar output");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  nodes_[out.id].grad = Mat::Ones(1, 1);
  for (int id = out.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0 || !n.needs_grad || !n.back) continue;
    n.back(*this, id);
  }
}

// Optimiser -------------------------------------------------------------------

void Adam::step(ParamStore& store) {
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (auto& p : store.all()) {
    if (p->frozen) continue;
    if (p->adam_m.size() == 0) {
      p->adam_m = Mat::Zero(p->value.rows(), p->value.cols());
      p->adam_v = Mat::Zero(p->value.rows(), p->value.cols());
    }
    if (p->has_grad()) {
      p->adam_m = opt_.beta1 * p->adam_m + (1.0 - opt_.beta1) * p->grad;
      p->adam_v = opt_.beta2 * p->adam_v + (1.0 - opt_.beta2) * p->grad.cwiseAbs2();
    } else {
      p->adam_m *= opt_.beta1;
      p->adam_v *= opt_.beta2;
    }
    p->value.array() -= opt_.lr * (p->adam_m.array() / c1) / ((p->adam_v.array() / c2).sqrt() + opt_.eps);
  }
}

void init_uniform(Parameter& p, double fan_in, std::mt19937_64& rng) {
  const double a = std::sqrt(1.0 / std::max(fan_in, 1.0));
  std::uniform_real_distribution<double> u(-a, a);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = u(rng);
}

// Gradient check --------------------------------------------------------------

GradCheckReport check_gradient(const std::function<Tape::Var(Tape&)>& fn,
                               std::span<Parameter* const> wrt, const GradCheckOptions& options) {
  for (auto* p : wrt) p->zero_grad();
  {
    Tape tape;
    tape.backward(fn(tape));
  }
  std::vector<Mat> analytic;
  double gmax = 0.0;
  for (auto* p : wrt) {
    analytic.push_back(p->has_grad() ? p->grad : Mat::Zero(p->value.rows(), p->value.cols()));
    gmax = std::max(gmax, analytic.back().cwiseAbs().maxCoeff());
  }
  const double floor = std::max(1e-3 * gmax, 1e-300);

  auto eval = [&]() {
    Tape tape;
    return tape.value(fn(tape))(0, 0);
  };

  std::mt19937_64 rng(options.seed);
  GradCheckReport rep;
  for (std::size_t t = 0; t < wrt.size(); ++t) {
    Parameter& p = *wrt[t];
    std::vector<Eigen::Index> entries(p.value.size());
    std::iota(entries.begin(), entries.end(), 0);
    if (options.max_entries_per_tensor > 0 &&
        static_cast<int>(entries.size()) > options.max_entries_per_tensor) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(options.max_entries_per_tensor);
      std::sort(entries.begin(), entries.end());
    }
    for (auto e : entries) {
      double& v = p.value.data()[e];
      const double orig = v;
      const double ana = analytic[t].data()[e];
      // A kink of a piecewise-linear activation within the step corrupts the
      // central difference, so large errors are retried with smaller steps.
      double err = std::numeric_limits<double>::infinity();
      double h = options.relative_step * std::max(1.0, std::abs(orig));
      for (int attempt = 0; attempt < 3 && err > 1e-6; ++attempt, h *= 0.01) {
        v = orig + h;
        const double fp = eval();
        v = orig - h;
        const double fm = eval();
        v = orig;
        const double num = (fp - fm) / (2.0 * h);
        err = std::min(err, std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), floor}));
      }
      ++rep.checked;
      if (err > rep.max_rel_error) {
        rep.max_rel_error = err;
        rep.worst = fmt::format("{}[{}]", p.name, e);
      }
    }
  }
  for (auto* p : wrt) p->zero_grad();
  return rep;
}

// Checkpoints -----------------------------------------------------------------

namespace {

constexpr char kCkptMagic[4] = {'M', 'M', 'G', 'C'};
constexpr std::uint32_t kCkptVersion = 1;

void put_matrix(ByteWriter& w, const Mat& m) {
  w.put_array(std::span<const double>(m.data(), static_cast<std::size_t>(m.size())));
}

Mat get_matrix(ByteReader& r, Eigen::Index rows, Eigen::Index cols) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.get<double>();
  return m;
}

}  // namespace

std::string serialize_checkpoint(const ParamStore& store, const Adam& adam, const std::string& meta_json) {
  ByteWriter w;
  w.put_raw(std::string_view(kCkptMagic, 4));
  w.put(kCkptVersion);
  w.put_string(meta_json);
  w.put(static_cast<std::uint32_t>(store.all().size()));
  for (const auto& p : store.all()) {
    w.put_string(p->name);
    w.put(static_cast<std::uint8_t>(p->kind));
    w.put(static_cast<std::uint8_t>(p->frozen ? 1 : 0));
    w.put(static_cast<std::uint32_t>(p->value.rows()));
    w.put(static_cast<std::uint32_t>(p->value.cols()));
    put_matrix(w, p->value);
  }
  w.put(static_cast<std::int64_t>(adam.steps()));
  for (const auto& p : store.all()) {
    const bool has = p->adam_m.size() != 0;
    w.put(static_cast<std::uint8_t>(has ? 1 : 0));
    if (has) {
      put_matrix(w, p->adam_m);
      put_matrix(w, p->adam_v);
    }
  }
  return w.str();
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store, const Adam& adam,
                     const std::string& meta_json) {
  write_file_atomic(path, serialize_checkpoint(store, adam, meta_json));
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.get_raw(4) != std::string_view(kCkptMagic, 4)) fail(ErrorCode::ParseError, "not a checkpoint file");
  if (const auto v = r.get<std::uint32_t>(); v != kCkptVersion)
    fail(ErrorCode::ParseError, fmt::format("unsupported checkpoint version {}", v));
  Checkpoint c;
  c.meta_json = r.get_string();
  const auto n = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) {
    Parameter p;
    p.name = r.get_string();
    const auto kind = r.get<std::uint8_t>();
    if (kind > static_cast<std::uint8_t>(LayerKind::Decoder)) fail(ErrorCode::ParseError, "bad layer kind");
    p.kind = static_cast<LayerKind>(kind);
    p.frozen = r.get<std::uint8_t>() != 0;
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    p.value = get_matrix(r, rows, cols);
    c.tensors.push_back(std::move(p));
  }
  c.adam_steps = r.get<std::int64_t>();
  for (auto& p : c.tensors) {
    if (r.get<std::uint8_t>()) {
      p.adam_m = get_matrix(r, p.value.rows(), p.value.cols());
      p.adam_v = get_matrix(r, p.value.rows(), p.value.cols());
    }
  }
  if (!r.done()) fail(ErrorCode::ParseError, "trailing bytes in checkpoint");
  return c;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file(path)); }

void restore(ParamStore& store, Adam& adam, const Checkpoint& ckpt) {
  if (ckpt.tensors.size() != store.all().size())
    fail(ErrorCode::ShapeMismatch,
         fmt::format("checkpoint has {} tensors, model has {}", ckpt.tensors.size(), store.all().size()));
  for (const auto& t : ckpt.tensors) {
    Parameter& p = store.at(t.name);
    if (p.value.rows() != t.value.rows() || p.value.cols() != t.value.cols())
      fail(ErrorCode::ShapeMismatch, "checkpoint tensor " + t.name + " has a different shape");
    p.value = t.value;
    p.frozen = t.frozen;
    p.adam_m = t.adam_m;
    p.adam_v = t.adam_v;
    p.zero_grad();
  }
  adam.set_steps(ckpt.adam_steps);
}

}  // namespace mmg
