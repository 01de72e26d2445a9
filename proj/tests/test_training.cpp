#include "fixtures.hpp"
#include "support.hpp"

#include "mmg/error.hpp"
#include "mmg/training.hpp"

#include <algorithm>
#include <set>

using namespace mmg;

namespace {

Mat random_field(int n, std::mt19937_64& rng, double scale = 10.0) {
  std::normal_distribution<double> g(0.0, scale);
  Mat m(n, 3);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

}  // namespace

TEST_CASE("normaliser uses the sample standard deviation") {
  Mat a(2, 2), b(1, 2);
  a << 1, 5, 2, 5;
  b << 3, 5;
  const auto n = Normalizer::fit({&a, &b});
  CHECK(n.mean[0] == doctest::Approx(2.0));
  CHECK(n.std[0] == doctest::Approx(1.0));
  CHECK(n.std[1] == 1.0);  // constant column keeps unit scale
  const Mat z = n.apply(a);
  CHECK(z(0, 0) == doctest::Approx(-1.0));
  CHECK((n.invert(z) - a).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK_ERROR_CODE(Normalizer::fit({}), ErrorCode::EmptyInput);
  Mat c(1, 3);
  CHECK_ERROR_CODE(Normalizer::fit({&a, &c}), ErrorCode::ShapeMismatch);
}

TEST_CASE("metric examples") {
  Mat pred(2, 3), target(2, 3);
  pred << 3, 4, 0, 0, 0, 2;
  target << 0, 0, 0, 0, 0, 1;
  CHECK(metric_med(pred, target) == doctest::Approx(3.0));
  CHECK(intrusion(target) == 1.0);
  CHECK(metric_mipe(pred, target) == doctest::Approx(100.0));
  CHECK(loss_mse(pred, target) == doctest::Approx((9.0 + 16.0 + 1.0) / 6.0));
  CHECK_ERROR_CODE(metric_med(pred, Mat(3, 3)), ErrorCode::ShapeMismatch);

  const Mat zero = Mat::Zero(4, 3);
  const double m = metric_mipe(zero, zero);
  CHECK(std::isfinite(m));
  CHECK(m == 0.0);
  Mat off = zero;
  off(1, 2) = 1e-3;
  CHECK(std::isfinite(metric_mipe(off, zero)));
}

TEST_CASE("metrics agree with scalar loops") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 50);
    const Mat p = random_field(n, rng), y = random_field(n, rng);
    double med = 0.0, ip = 0.0, iy = 0.0;
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int c = 0; c < 3; ++c) s += (p(i, c) - y(i, c)) * (p(i, c) - y(i, c));
      med += std::sqrt(s);
      ip = std::max(ip, std::abs(p(i, 2)));
      iy = std::max(iy, std::abs(y(i, 2)));
    }
    med /= n;
    CHECK(std::abs(metric_med(p, y) - med) <= 1e-12 * std::max(1.0, med));
    CHECK(std::abs(metric_mipe(p, y) - std::abs(ip - iy) / (iy + 1e-8) * 100.0) <= 1e-12 * 100.0);
  }
}

TEST_CASE("improvement statistic") {
  CHECK(improvement(1.0, 0.5) == doctest::Approx(50.0));
  CHECK(improvement(0.4527, 0.1869) == doctest::Approx(58.71).epsilon(1e-4));
  CHECK(improvement(1.0, 1.5) < 0.0);
  CHECK_ERROR_CODE(improvement(0.0, 1.0), ErrorCode::InvalidArgument);
}

TEST_CASE("mean and sample standard deviation") {
  CHECK(mean_of({}) == 0.0);
  CHECK(sample_std({4.0}) == 0.0);
  CHECK(mean_of({1, 2, 3, 4}) == doctest::Approx(2.5));
  CHECK(sample_std({1, 2, 3, 4}) == doctest::Approx(std::sqrt(5.0 / 3.0)));
}

TEST_CASE("latin hypercube strata") {
  const std::vector<std::pair<double, double>> b{{0, 1}, {-2, 2}, {5, 5}};
  const int n = 37;
  const Mat d = lhs_sample(b, n, 99);
  REQUIRE(d.rows() == n);
  for (int p = 0; p < 2; ++p) {
    std::set<int> strata;
    for (int i = 0; i < n; ++i) {
      const double f = (d(i, p) - b[p].first) / (b[p].second - b[p].first);
      CHECK(f >= 0.0);
      CHECK(f < 1.0);
      strata.insert(static_cast<int>(f * n));
    }
    CHECK(strata.size() == static_cast<std::size_t>(n));
  }
  CHECK((d.col(2).array() == 5.0).all());
  CHECK(lhs_sample(b, n, 99) == d);
  CHECK(lhs_sample(b, n, 100) != d);
  CHECK_ERROR_CODE(lhs_sample({{1, 0}}, 3, 0), ErrorCode::InvalidArgument);
  CHECK_ERROR_CODE(lhs_sample(b, 0, 0), ErrorCode::InvalidArgument);
}

TEST_CASE("masking") {
  const auto sk = test::small_skeleton();
  const auto samples = test::pillar_samples(sk, 1, 3);
  const auto& s = samples[0];
  const auto& h = s.hierarchy;
  int free_nodes = 0;
  for (int i = 0; i < s.roles.size(); ++i) free_nodes += !s.roles.is_protected(i);
  REQUIRE(free_nodes > 0);
  REQUIRE(free_nodes < s.roles.size());

  SUBCASE("protected nodes are never masked and induced edges follow set algebra") {
    std::mt19937_64 rng(1);
    for (double ratio : {0.1, 0.3, 0.5, 0.8}) {
      for (int r = 0; r < 25; ++r) {
        const auto m = sample_mask(h, s.roles, ratio, rng);
        CHECK(static_cast<long>(m.nodes.size()) == std::lround(ratio * free_nodes));
        CHECK(std::is_sorted(m.nodes.begin(), m.nodes.end()));
        const std::set<int> ms(m.nodes.begin(), m.nodes.end());
        CHECK(ms.size() == m.nodes.size());
        for (int i : m.nodes) CHECK(!s.roles.is_protected(i));
        std::vector<int> fe, ce;
        for (int e = 0; e < h.level[0].edges.size(); ++e)
          if (ms.count(h.level[0].edges.src[e]) || ms.count(h.level[0].edges.dst[e])) fe.push_back(e);
        for (int e = 0; e < h.down[0].edges.size(); ++e)
          if (ms.count(h.down[0].edges.src[e])) ce.push_back(e);
        CHECK(m.fine_edges == fe);
        CHECK(m.cross_edges == ce);
      }
    }
  }

  SUBCASE("ratio zero masks nothing, out-of-range ratios are rejected") {
    std::mt19937_64 rng(2);
    const auto m = sample_mask(h, s.roles, 0.0, rng);
    CHECK(m.nodes.empty());
    CHECK(m.fine_edges.empty());
    CHECK_ERROR_CODE(sample_mask(h, s.roles, 1.0, rng), ErrorCode::RatioOutOfRange);
    CHECK_ERROR_CODE(sample_mask(h, s.roles, -0.1, rng), ErrorCode::RatioOutOfRange);
  }

  SUBCASE("masked input keeps the upward path") {
    const auto norm = Normalization::fit(samples);
    const GraphInput in = make_input(s, norm, sk);
    std::mt19937_64 rng(4);
    const auto m = sample_mask(h, s.roles, 0.5, rng);
    const GraphInput out = apply_mask(in, m);
    CHECK(out.fine_edges.size() == in.fine_edges.size() - static_cast<int>(m.fine_edges.size()));
    CHECK(out.fine_features.rows() == out.fine_edges.size());
    CHECK(out.cross_edges.size() == in.cross_edges.size() - static_cast<int>(m.cross_edges.size()));
    CHECK(out.up_edges.src == in.up_edges.src);
    CHECK(out.up_edges.dst == in.up_edges.dst);
    CHECK(out.node_features == in.node_features);
    const std::set<int> ms(m.nodes.begin(), m.nodes.end());
    for (int e = 0; e < out.fine_edges.size(); ++e) {
      CHECK(!ms.count(out.fine_edges.src[e]));
      CHECK(!ms.count(out.fine_edges.dst[e]));
    }
  }
}

TEST_CASE("training honours the freeze set") {
  const auto sk = test::small_skeleton();
  const auto samples = test::pillar_samples(sk, 4, 5);
  TrainState st;
  st.model = std::make_unique<GUNet>(test::small_model(3), LevelShape::from(sk));
  st.norm = Normalization::fit(samples);
  st.rng.seed(8);
  std::vector<GraphInput> inputs;
  std::vector<Mat> targets;
  std::vector<const TrainSample*> ptrs;
  for (const auto& s : samples) {
    inputs.push_back(make_input(s, st.norm, sk));
    targets.push_back(st.norm.target.apply(s.target));
    ptrs.push_back(&s);
  }
  auto& store = st.model->params();
  store.freeze(default_freeze_policy());
  const auto frozen_before = store.checksum(true);
  std::map<std::string, Mat> before;
  for (const auto& p : store.all()) before[p->name] = p->value;

  TrainOptions opt;
  opt.epochs = 10;
  opt.batch = 2;
  opt.frozen = default_freeze_policy();
  opt.mask_ratio = 0.2;
  const auto log = train(st, inputs, targets, ptrs, opt);
  CHECK(log.size() == 10);
  CHECK(st.adam.steps() == 20);
  CHECK(store.checksum(true) == frozen_before);
  for (const auto& p : store.all()) {
    if (p->frozen) CHECK(p->value == before[p->name]);
    else CHECK_MESSAGE(p->value != before[p->name], p->name);
  }
  CHECK(log.back().loss < log.front().loss);

  opt.batch = 0;
  CHECK_ERROR_CODE(train(st, inputs, targets, ptrs, opt), ErrorCode::InvalidArgument);
  CHECK_ERROR_CODE(train(st, {}, {}, {}, TrainOptions{}), ErrorCode::EmptyInput);
}

TEST_CASE("protocol sample selection") {
  std::vector<CaseData> cases(3);
  for (int c = 0; c < 3; ++c) {
    cases[c].name = "c" + std::to_string(c);
    cases[c].train.resize(4 + c);
    cases[c].test.resize(2);
  }
  const auto single = select_protocol(ProtocolKind::SingleCase, cases, 2, 3);
  CHECK(single.pretrain.size() == 3);
  CHECK(single.finetune == single.pretrain);
  CHECK(single.test.size() == 2);
  CHECK(single.test[0] == &cases[2].test[0]);

  const auto all = select_protocol(ProtocolKind::AllCases, cases, 2);
  CHECK(all.finetune.size() == 4 + 5 + 6);
  const auto others = select_protocol(ProtocolKind::AllButTarget, cases, 2);
  CHECK(others.finetune.size() == 9);
  for (const auto* s : others.finetune) CHECK((s < cases[2].train.data() || s >= cases[2].train.data() + 6));

  const auto transfer = select_protocol(ProtocolKind::Transfer, cases, 2, 5);
  CHECK(transfer.pretrain.size() == 9);
  CHECK(transfer.finetune.size() == 5);
  CHECK(transfer.finetune[0] == &cases[2].train[0]);

  CHECK_ERROR_CODE(select_protocol(ProtocolKind::SingleCase, cases, 3), ErrorCode::IndexOutOfRange);
  std::vector<CaseData> lone(1);
  lone[0].test.resize(1);
  CHECK_ERROR_CODE(select_protocol(ProtocolKind::AllButTarget, lone, 0), ErrorCode::EmptyInput);
}

TEST_CASE("experiment file parsing") {
  const auto spec = parse_experiment(R"(# transfer run
trial = "A"
cases = ["a/manifest.json", "/abs/b.json"]
target = "c/manifest.json"
protocol = "transfer"
placement = "reference"
features = ["one_hot", "le"]
train_limit = 50
width = 8   # narrow
pretrain_epochs = 3
finetune_epochs = 4
mask_ratio = 0.3
lr = 1e-3
freeze = []
seed = 9
output = "out"
)",
                                     "/base");
  CHECK(spec.trial == "A");
  REQUIRE(spec.cases.size() == 2);
  CHECK(spec.cases[0] == std::filesystem::path("/base/a/manifest.json"));
  CHECK(spec.cases[1] == std::filesystem::path("/abs/b.json"));
  CHECK(spec.target == std::filesystem::path("/base/c/manifest.json"));
  CHECK(spec.protocol == ProtocolKind::Transfer);
  CHECK(spec.run.protocol == ProtocolKind::Transfer);
  CHECK(spec.placement == CoarsePlacement::Reference);
  CHECK(spec.features == std::vector<FeatureBlock>{FeatureBlock::OneHot, FeatureBlock::Laplacian});
  CHECK(spec.train_limit == 50);
  CHECK(spec.run.model.width == 8);
  CHECK(spec.run.pretrain_epochs == 3);
  CHECK(spec.run.finetune_epochs == 4);
  CHECK(spec.run.mask_ratio == 0.3);
  CHECK(spec.run.adam.lr == 1e-3);
  CHECK(spec.run.freeze.empty());
  CHECK(spec.run.seed == 9);
  CHECK(spec.output == std::filesystem::path("/base/out"));

  const auto dflt = parse_experiment("cases = [\"x.json\"]\n");
  CHECK(dflt.target == std::filesystem::path("x.json"));
  CHECK(dflt.run.freeze == default_freeze_policy());

  CHECK_ERROR_CODE(parse_experiment("bogus = 1\ncases=[\"a\"]"), ErrorCode::ParseError);
  CHECK_ERROR_CODE(parse_experiment("width = 2.5\ncases=[\"a\"]"), ErrorCode::ParseError);
  CHECK_ERROR_CODE(parse_experiment("trial = \"a\"\ntrial = \"b\""), ErrorCode::ParseError);
  CHECK_ERROR_CODE(parse_experiment("width = 4"), ErrorCode::ParseError);
  CHECK_ERROR_CODE(parse_experiment("cases=[\"a\"]\nmask_ratio = 1.0"), ErrorCode::RatioOutOfRange);
  CHECK_ERROR_CODE(parse_experiment("cases=[\"a\"]\nprotocol = \"nope\""), ErrorCode::InvalidArgument);
}
