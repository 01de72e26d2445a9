#include "mmg/experiment.hpp"

#include "mmg/error.hpp"
#include "mmg/io.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <map>
#include <optional>
#include <thread>
#include <variant>

namespace mmg {

namespace fs = std::filesystem;

std::string_view to_string(ProtocolKind p) {
  switch (p) {
    case ProtocolKind::SingleCase: return "single_case";
    case ProtocolKind::AllCases: return "all_cases";
    case ProtocolKind::AllButTarget: return "all_but_target";
    case ProtocolKind::Transfer: return "transfer";
  }
  return "?";
}

ProtocolKind parse_protocol(std::string_view s) {
  for (auto p : {ProtocolKind::SingleCase, ProtocolKind::AllCases, ProtocolKind::AllButTarget, ProtocolKind::Transfer})
    if (to_string(p) == s) return p;
  fail(ErrorCode::InvalidArgument, fmt::format("unknown protocol '{}'", s));
}

namespace {

void prepare(const std::vector<const TrainSample*>& set, const Normalization& norm, const HierarchySkeleton& sk,
             std::vector<GraphInput>& inputs, std::vector<Mat>& targets) {
  inputs.clear();
  targets.clear();
  for (const TrainSample* s : set) {
    inputs.push_back(make_input(*s, norm, sk));
    targets.push_back(norm.target.apply(s->target));
  }
}

void run_phase(const char* name, RunResult& r, const std::vector<const TrainSample*>& set, const TrainOptions& opt,
               const HierarchySkeleton& sk) {
  std::vector<GraphInput> inputs;
  std::vector<Mat> targets;
  prepare(set, r.state.norm, sk, inputs, targets);
  for (const auto& e : train(r.state, inputs, targets, set, opt)) r.log.push_back({name, e});
  if (!r.log.empty()) spdlog::info("{}: {} epochs, final loss {:.4e}", name, opt.epochs, r.log.back().entry.loss);
}

Metrics score(const RunResult& r, const std::vector<const TrainSample*>& set, const HierarchySkeleton& sk) {
  std::vector<GraphInput> inputs;
  std::vector<Mat> targets;
  prepare(set, r.state.norm, sk, inputs, targets);
  return evaluate(*r.state.model, r.state.norm, inputs, set);
}

}  // namespace

RunResult run_training(const RunConfig& config, const RunData& data, const HierarchySkeleton& skeleton) {
  std::vector<const TrainSample*> all;
  for (const auto* set : {&data.pretrain, &data.finetune})
    for (const TrainSample* s : *set)
      if (std::find(all.begin(), all.end(), s) == all.end()) all.push_back(s);
  if (all.empty()) fail(ErrorCode::EmptyInput, "no training samples selected");

  RunResult r;
  r.state.norm = Normalization::fit(all);
  ModelConfig mc = config.model;
  mc.node_in = static_cast<int>(all.front()->node_features.cols());
  mc.levels = skeleton.levels();
  mc.seed = config.seed;
  r.state.model = std::make_unique<GUNet>(mc, LevelShape::from(skeleton));
  r.state.rng.seed(config.seed ^ 0x6d61736b00000000ull);

  if (config.pretrain_epochs > 0 && !data.pretrain.empty()) {
    TrainOptions opt;
    opt.epochs = config.pretrain_epochs;
    opt.batch = config.batch;
    opt.mask_ratio = config.mask_ratio;
    opt.adam = config.adam;
    run_phase("pretrain", r, data.pretrain, opt, skeleton);
  }
  if (config.finetune_epochs > 0 && !data.finetune.empty()) {
    TrainOptions opt;
    opt.epochs = config.finetune_epochs;
    opt.batch = config.batch;
    opt.adam = config.adam;
    opt.frozen = config.freeze;
    run_phase("finetune", r, data.finetune, opt, skeleton);
  }
  r.train = score(r, data.finetune.empty() ? data.pretrain : data.finetune, skeleton);
  if (!data.test.empty()) r.test = score(r, data.test, skeleton);
  return r;
}

RunData select_protocol(ProtocolKind protocol, const std::vector<CaseData>& cases, int target, int limit) {
  if (target < 0 || target >= static_cast<int>(cases.size()))
    fail(ErrorCode::IndexOutOfRange, fmt::format("target case {} of {}", target, cases.size()));
  const auto& tgt = cases[target];
  std::vector<const TrainSample*> own, others, everyone;
  const int n = limit > 0 ? std::min<int>(limit, static_cast<int>(tgt.train.size())) : static_cast<int>(tgt.train.size());
  for (int i = 0; i < n; ++i) own.push_back(&tgt.train[i]);
  for (int c = 0; c < static_cast<int>(cases.size()); ++c) {
    if (c == target) continue;
    for (const auto& s : cases[c].train) others.push_back(&s);
  }
  everyone = others;
  everyone.insert(everyone.end(), own.begin(), own.end());

  RunData d;
  for (const auto& s : tgt.test) d.test.push_back(&s);
  switch (protocol) {
    case ProtocolKind::SingleCase: d.pretrain = d.finetune = own; break;
    case ProtocolKind::AllCases: d.pretrain = d.finetune = everyone; break;
    case ProtocolKind::AllButTarget: d.pretrain = d.finetune = others; break;
    case ProtocolKind::Transfer:
      d.pretrain = others;
      d.finetune = own;
      break;
  }
  if (d.pretrain.empty() && d.finetune.empty())
    fail(ErrorCode::EmptyInput, fmt::format("protocol {} selects no training samples", to_string(protocol)));
  return d;
}

std::vector<TrainSample> load_samples(const std::vector<SampleRecord>& records, const HierarchySkeleton& skeleton,
                                      const FeatureLayout& layout, CoarsePlacement placement, int jobs) {
  std::vector<std::optional<TrainSample>> slots(records.size());
  std::vector<std::exception_ptr> errors(records.size());
  const auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < records.size(); i += stride) {
      try {
        const auto& r = records[i];
        ShellMesh mesh = load_mesh(r.mesh);
        NodeRoles roles = load_roles(r.roles, mesh.node_count());
        Mat target = load_target(r.target, mesh.node_count());
        slots[i].emplace(make_sample(r.id, std::move(mesh), std::move(roles), std::move(target), skeleton, layout,
                                     placement));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n = static_cast<std::size_t>(std::clamp(jobs, 1, std::max(1, static_cast<int>(records.size()))));
  if (n == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(work, t, n);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<TrainSample> out;
  out.reserve(records.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

HierarchySkeleton load_skeleton(const Manifest& m, int k) {
  std::vector<ShellMesh> templates;
  for (const auto& t : m.templates) templates.push_back(load_mesh(t));
  return build_coarse_hierarchy(std::move(templates), m.domain, k);
}

namespace {

using Value = std::variant<std::string, double, bool, std::vector<std::string>, std::vector<double>>;

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

/// Drops a trailing comment that is not inside a string.
std::string_view strip_comment(std::string_view s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

struct Scalar {
  bool is_string = false;
  std::string text;
  double number = 0.0;
};

Scalar parse_scalar(std::string_view s, int line) {
  s = trim(s);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return {true, std::string(s.substr(1, s.size() - 2)), 0.0};
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    fail(ErrorCode::ParseError, fmt::format("experiment line {}: cannot read value '{}'", line, s));
  return {false, {}, v};
}

Value parse_value(std::string_view s, int line) {
  s = trim(s);
  if (s == "true" || s == "false") return s == "true";
  if (s.starts_with('[')) {
    if (!s.ends_with(']')) fail(ErrorCode::ParseError, fmt::format("experiment line {}: unterminated list", line));
    s = trim(s.substr(1, s.size() - 2));
    std::vector<Scalar> items;
    while (!s.empty()) {
      const auto comma = s.find(',');
      items.push_back(parse_scalar(s.substr(0, comma), line));
      if (comma == std::string_view::npos) break;
      s = trim(s.substr(comma + 1));
    }
    if (items.empty() || items.front().is_string) {
      std::vector<std::string> out;
      for (const auto& it : items) {
        if (!it.is_string) fail(ErrorCode::ParseError, fmt::format("experiment line {}: mixed list", line));
        out.push_back(it.text);
      }
      return out;
    }
    std::vector<double> out;
    for (const auto& it : items) {
      if (it.is_string) fail(ErrorCode::ParseError, fmt::format("experiment line {}: mixed list", line));
      out.push_back(it.number);
    }
    return out;
  }
  const Scalar sc = parse_scalar(s, line);
  if (sc.is_string) return sc.text;
  return sc.number;
}

template <typename T>
const T& as(const Value& v, const std::string& key) {
  if (const T* p = std::get_if<T>(&v)) return *p;
  fail(ErrorCode::ParseError, fmt::format("experiment key '{}' has the wrong type", key));
}

int as_int(const Value& v, const std::string& key) {
  const double d = as<double>(v, key);
  if (d != static_cast<double>(static_cast<long long>(d)))
    fail(ErrorCode::ParseError, fmt::format("experiment key '{}' must be an integer", key));
  return static_cast<int>(d);
}

std::vector<std::string> as_strings(const Value& v, const std::string& key) {
  if (const auto* d = std::get_if<std::vector<double>>(&v); d && d->empty()) return {};
  return as<std::vector<std::string>>(v, key);
}

CoarsePlacement parse_placement(std::string_view s) {
  if (s == "morphed") return CoarsePlacement::Morphed;
  if (s == "reference") return CoarsePlacement::Reference;
  fail(ErrorCode::InvalidArgument, fmt::format("unknown placement '{}'", s));
}

std::string_view to_string(CoarsePlacement p) { return p == CoarsePlacement::Morphed ? "morphed" : "reference"; }

}  // namespace

ExperimentSpec parse_experiment(std::string_view text, const fs::path& base) {
  std::map<std::string, Value> kv;
  int line = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    ++line;
    const std::string_view raw = trim(strip_comment(text.substr(pos, end - pos)));
    pos = end + 1;
    if (raw.empty()) continue;
    const auto eq = raw.find('=');
    if (eq == std::string_view::npos) fail(ErrorCode::ParseError, fmt::format("experiment line {}: expected key = value", line));
    const std::string key(trim(raw.substr(0, eq)));
    if (kv.count(key)) fail(ErrorCode::ParseError, fmt::format("experiment line {}: duplicate key '{}'", line, key));
    kv.emplace(key, parse_value(raw.substr(eq + 1), line));
  }

  ExperimentSpec spec;
  const auto path = [&](const std::string& s) { return fs::path(s).is_absolute() ? fs::path(s) : base / s; };
  for (const auto& [key, v] : kv) {
    if (key == "trial") spec.trial = as<std::string>(v, key);
    else if (key == "cases") for (const auto& s : as_strings(v, key)) spec.cases.push_back(path(s));
    else if (key == "target") spec.target = path(as<std::string>(v, key));
    else if (key == "protocol") spec.protocol = parse_protocol(as<std::string>(v, key));
    else if (key == "placement") spec.placement = parse_placement(as<std::string>(v, key));
    else if (key == "features") {
      spec.features.clear();
      for (const auto& s : as_strings(v, key)) spec.features.push_back(parse_feature_block(s));
    } else if (key == "train_limit") spec.train_limit = as_int(v, key);
    else if (key == "k") spec.k = as_int(v, key);
    else if (key == "width") spec.run.model.width = as_int(v, key);
    else if (key == "fine_steps") spec.run.model.fine_steps = as_int(v, key);
    else if (key == "coarse_steps") spec.run.model.coarse_steps = as_int(v, key);
    else if (key == "mlp_layers") spec.run.model.mlp_layers = as_int(v, key);
    else if (key == "mlp_hidden") spec.run.model.mlp_hidden = as_int(v, key);
    else if (key == "coarse_hidden") spec.run.model.coarse_hidden = as_int(v, key);
    else if (key == "mask_ratio") spec.run.mask_ratio = as<double>(v, key);
    else if (key == "pretrain_epochs") spec.run.pretrain_epochs = as_int(v, key);
    else if (key == "finetune_epochs") spec.run.finetune_epochs = as_int(v, key);
    else if (key == "lr") spec.run.adam.lr = as<double>(v, key);
    else if (key == "batch") spec.run.batch = as_int(v, key);
    else if (key == "seed") spec.run.seed = static_cast<std::uint64_t>(as_int(v, key));
    else if (key == "freeze") {
      spec.run.freeze.clear();
      for (const auto& s : as_strings(v, key)) spec.run.freeze.insert(parse_layer_kind(s));
    } else if (key == "output") spec.output = path(as<std::string>(v, key));
    else fail(ErrorCode::ParseError, fmt::format("unknown experiment key '{}'", key));
  }
  spec.run.protocol = spec.protocol;
  if (spec.target.empty()) {
    if (spec.cases.empty()) fail(ErrorCode::ParseError, "experiment names no target case");
    spec.target = spec.cases.back();
  }
  if (!(spec.run.mask_ratio >= 0.0 && spec.run.mask_ratio < 1.0))
    fail(ErrorCode::RatioOutOfRange, fmt::format("mask_ratio {} outside [0, 1)", spec.run.mask_ratio));
  if (spec.run.batch < 1 || spec.run.pretrain_epochs < 0 || spec.run.finetune_epochs < 0 || spec.train_limit < 0)
    fail(ErrorCode::InvalidArgument, "batch must be positive and epoch counts non-negative");
  return spec;
}

ExperimentSpec load_experiment(const fs::path& path) {
  ExperimentSpec spec = parse_experiment(read_file(path), path.parent_path());
  for (const auto& p : spec.cases)
    if (!fs::exists(p)) fail(ErrorCode::IoError, "case manifest not found: " + p.string());
  if (!fs::exists(spec.target)) fail(ErrorCode::IoError, "target manifest not found: " + spec.target.string());
  return spec;
}

std::string checkpoint_meta(const ExperimentSpec& spec, const RunResult& result, const HierarchySkeleton& skeleton) {
  const Manifest target = load_manifest(spec.target);
  const ModelConfig& c = result.state.model->config();
  nlohmann::json j;
  j["trial"] = spec.trial;
  j["protocol"] = std::string(to_string(spec.protocol));
  j["samples"] = result.train.med.size();
  j["model"] = {{"node_in", c.node_in},         {"edge_in", c.edge_in},         {"width", c.width},
                {"levels", c.levels},           {"fine_steps", c.fine_steps},   {"coarse_steps", c.coarse_steps},
                {"mlp_layers", c.mlp_layers},   {"mlp_hidden", c.mlp_hidden},   {"coarse_hidden", c.coarse_hidden},
                {"out_dim", c.out_dim},         {"seed", c.seed}};
  j["features"] = nlohmann::json::array();
  for (auto b : spec.features) j["features"].push_back(std::string(to_string(b)));
  j["placement"] = std::string(to_string(spec.placement));
  j["domain"] = std::string(to_string(skeleton.domain));
  j["k"] = skeleton.k;
  j["templates"] = nlohmann::json::array();
  for (const auto& t : target.templates) j["templates"].push_back(fs::absolute(t).lexically_normal().generic_string());
  j["normalization"] = to_json(result.state.norm);
  return j.dump();
}

LoadedModel load_model(const fs::path& checkpoint) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  LoadedModel out;
  try {
    const auto j = nlohmann::json::parse(ckpt.meta_json);
    const auto& m = j.at("model");
    ModelConfig c;
    c.node_in = m.at("node_in");
    c.edge_in = m.at("edge_in");
    c.width = m.at("width");
    c.levels = m.at("levels");
    c.fine_steps = m.at("fine_steps");
    c.coarse_steps = m.at("coarse_steps");
    c.mlp_layers = m.at("mlp_layers");
    c.mlp_hidden = m.at("mlp_hidden");
    c.coarse_hidden = m.at("coarse_hidden");
    c.out_dim = m.at("out_dim");
    c.seed = m.at("seed");
    std::vector<FeatureBlock> blocks;
    for (const auto& b : j.at("features")) blocks.push_back(parse_feature_block(b.get<std::string>()));
    out.layout = make_layout(blocks);
    out.placement = parse_placement(j.at("placement").get<std::string>());
    std::vector<ShellMesh> templates;
    for (const auto& t : j.at("templates")) templates.push_back(load_mesh(t.get<std::string>()));
    out.skeleton = build_coarse_hierarchy(std::move(templates), parse_domain(j.at("domain").get<std::string>()),
                                          j.at("k").get<int>());
    out.norm = normalization_from_json(j.at("normalization"));
    out.trial = j.at("trial").get<std::string>();
    out.protocol = parse_protocol(j.at("protocol").get<std::string>());
    out.samples = j.at("samples").get<int>();
    out.model = std::make_unique<GUNet>(c, LevelShape::from(out.skeleton));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, fmt::format("checkpoint {}: {}", checkpoint.string(), e.what()));
  }
  Adam adam;
  restore(out.model->params(), adam, ckpt);
  return out;
}

namespace {

std::vector<SampleError> sample_errors(const std::vector<const TrainSample*>& set, const Metrics& m,
                                       const std::string& split) {
  std::vector<SampleError> out;
  for (std::size_t i = 0; i < set.size(); ++i) out.push_back({set[i]->id, split, m.med[i], m.mipe[i]});
  return out;
}

MetricsRow metrics_row(const std::string& trial, ProtocolKind protocol, int samples, const Metrics& m) {
  return {trial, std::string(to_string(protocol)), samples, m.med_mean(), m.med_std(), m.mipe_mean(), m.mipe_std()};
}

}  // namespace

TrainArtifacts run_experiment(const ExperimentSpec& spec, int jobs) {
  std::vector<fs::path> paths = spec.cases;
  const auto same = [](const fs::path& a, const fs::path& b) {
    return fs::weakly_canonical(a) == fs::weakly_canonical(b);
  };
  int target = -1;
  for (int i = 0; i < static_cast<int>(paths.size()); ++i)
    if (same(paths[i], spec.target)) target = i;
  if (target < 0) {
    paths.push_back(spec.target);
    target = static_cast<int>(paths.size()) - 1;
  }

  const Manifest tm = load_manifest(spec.target);
  const HierarchySkeleton skeleton = load_skeleton(tm, spec.k);
  const FeatureLayout layout = make_layout(spec.features);
  std::vector<CaseData> cases;
  for (const auto& p : paths) {
    const Manifest m = p == spec.target ? tm : load_manifest(p);
    CaseData c;
    c.name = std::string(to_string(m.kind));
    c.train = load_samples(m.train, skeleton, layout, spec.placement, jobs);
    if (static_cast<int>(cases.size()) == target) c.test = load_samples(m.test, skeleton, layout, spec.placement, jobs);
    spdlog::info("case {}: {} train, {} test samples", c.name, c.train.size(), c.test.size());
    cases.push_back(std::move(c));
  }

  const RunData data = select_protocol(spec.protocol, cases, target, spec.train_limit);
  const RunResult r = run_training(spec.run, data, skeleton);
  spdlog::info("test MED {:.6g}, MIPE {:.6g}", r.test.med_mean(), r.test.mipe_mean());

  std::string log = "phase,epoch,loss\n";
  for (const auto& e : r.log) log += fmt::format("{},{},{:.17g}\n", e.phase, e.entry.epoch, e.entry.loss);
  const int samples = static_cast<int>(r.train.med.size());
  const auto& train_set = data.finetune.empty() ? data.pretrain : data.finetune;
  std::vector<SampleError> errs = sample_errors(train_set, r.train, "train");
  for (auto& e : sample_errors(data.test, r.test, "test")) errs.push_back(std::move(e));

  TrainArtifacts out{spec.output / "model.mmgc", spec.output / "train_log.csv", spec.output / "metrics.csv",
                     spec.output / "per_sample.csv"};
  const bool existed = fs::exists(spec.output);
  try {
    fs::create_directories(spec.output);
    save_checkpoint(out.checkpoint, r.state.model->params(), r.state.adam, checkpoint_meta(spec, r, skeleton));
    write_file_atomic(out.log, log);
    write_file_atomic(out.metrics, metrics_csv({metrics_row(spec.trial, spec.protocol, samples, r.test)}));
    write_file_atomic(out.per_sample, per_sample_csv(errs));
  } catch (...) {
    std::error_code ec;
    if (existed) {
      for (const auto& p : {out.checkpoint, out.log, out.metrics, out.per_sample}) fs::remove(p, ec);
    } else {
      fs::remove_all(spec.output, ec);
    }
    throw;
  }
  return out;
}

Evaluation evaluate_checkpoint(const fs::path& checkpoint, const fs::path& manifest, int jobs) {
  const LoadedModel lm = load_model(checkpoint);
  const Manifest m = load_manifest(manifest);
  Evaluation ev;
  Metrics test;
  for (const auto* split : {&m.train, &m.test}) {
    const bool is_test = split == &m.test;
    const std::vector<TrainSample> samples = load_samples(*split, lm.skeleton, lm.layout, lm.placement, jobs);
    std::vector<const TrainSample*> set;
    std::vector<GraphInput> inputs;
    for (const auto& s : samples) {
      set.push_back(&s);
      inputs.push_back(make_input(s, lm.norm, lm.skeleton));
    }
    const Metrics metrics = evaluate(*lm.model, lm.norm, inputs, set);
    for (auto& e : sample_errors(set, metrics, is_test ? "test" : "train")) ev.samples.push_back(std::move(e));
    if (is_test) test = metrics;
  }
  if (test.med.empty()) fail(ErrorCode::EmptyInput, "dataset has no test samples: " + manifest.string());
  ev.test = metrics_row(lm.trial, lm.protocol, lm.samples, test);
  return ev;
}

}  // namespace mmg
