#include "mmg/datagen.hpp"
#include "mmg/error.hpp"
#include "mmg/experiment.hpp"
#include "mmg/hierarchy.hpp"
#include "mmg/io.hpp"
#include "mmg/mesh.hpp"
#include "mmg/morph.hpp"
#include "mmg/param.hpp"
#include "mmg/report.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace mmg;

namespace {

/// Files a command is about to produce. Unless commit() is reached they are
/// removed again, together with directories the command created.
class Outputs {
 public:
  Outputs() = default;
  Outputs(const Outputs&) = delete;
  Outputs& operator=(const Outputs&) = delete;
  ~Outputs() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& f : files_) fs::remove(f, ec);
    for (auto it = dirs_.rbegin(); it != dirs_.rend(); ++it) fs::remove_all(*it, ec);
  }

  const fs::path& file(const fs::path& p) {
    dir(p.parent_path());
    files_.push_back(p);
    return p;
  }
  void dir(const fs::path& d) {
    if (d.empty() || fs::exists(d)) return;
    dir(d.parent_path());
    fs::create_directory(d);
    dirs_.push_back(d);
  }
  void commit() { committed_ = true; }

 private:
  std::vector<fs::path> files_;
  std::vector<fs::path> dirs_;
  bool committed_ = false;
};

std::vector<double> parse_doubles(const std::string& list) {
  std::vector<double> out;
  std::string_view s = list;
  while (!s.empty()) {
    const auto comma = s.find(',');
    const std::string_view item = s.substr(0, comma);
    double v = 0.0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc{} || p != item.data() + item.size())
      fail(ErrorCode::InvalidArgument, fmt::format("not a number: '{}'", item));
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("mmg");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("MMG_LOG")) {
    const auto lvl = spdlog::level::from_str(env);
    if (lvl == spdlog::level::off && std::string_view(env) != "off")
      spdlog::warn("MMG_LOG='{}' is not a level; keeping info", env);
    else
      spdlog::set_level(lvl);
  }
}

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

void cmd_mesh_info(const std::string& file) {
  const MeshFile mf = read_mesh_file(file);
  const ShellMesh& m = mf.mesh;
  const BoundaryLoop loop = extract_boundary_loop(m);
  fmt::print("nodes {}\nelements {}\nedges {}\nboundary_nodes {}\nmean_edge_length {:.6g}\ntopology_digest {:016x}\n",
             m.node_count(), m.element_count(), m.edge_count(), loop.size(), m.mean_edge_length(),
             m.topology_digest());
  if (mf.roles) {
    for (auto r : {NodeRole::Free, NodeRole::BoundaryConstrained, NodeRole::Contact})
      fmt::print("role_{} {}\n", to_string(r), mf.roles->count(r));
  }
}

void cmd_mesh_boundary(const std::string& file, int corners) {
  const ShellMesh m = load_mesh(file);
  const BoundaryLoop loop = extract_boundary_loop(m);
  const auto turn = turning_angles(loop, m);
  std::vector<char> is_corner(loop.size(), 0);
  if (corners > 0)
    for (int p : detect_corners(loop, m, corners)) is_corner[p] = 1;
  fmt::print("position,node,turning,corner\n");
  for (int p = 0; p < loop.size(); ++p) fmt::print("{},{},{:.17g},{}\n", p, loop.nodes[p], turn[p], int(is_corner[p]));
}

void cmd_param(const std::string& mesh, const std::string& domain, const std::string& backend, const fs::path& out) {
  TutteOptions opt;
  if (backend == "direct") opt.backend = SolverBackend::Direct;
  else if (backend != "cg") fail(ErrorCode::InvalidArgument, "unknown backend: " + backend);
  const ShellMesh m = load_mesh(mesh);
  const UvChart chart = parameterise(m, parse_domain(domain), opt);
  const EmbeddingReport rep = validate_embedding(chart, m);
  spdlog::info("residual {:.3e} after {} iterations, {} of {} triangles flipped", chart.residual, chart.iterations,
               rep.flipped, rep.triangles);
  Outputs outs;
  write_file_atomic(outs.file(out), chart_csv(chart));
  outs.commit();
}

void cmd_morph(const std::string& tmpl, const std::string& target, const std::string& domain,
               const std::string& alphas, const std::string& prefix) {
  const DomainKind d = parse_domain(domain);
  const ShellMesh tm = load_mesh(tmpl);
  const ShellMesh gm = load_mesh(target);
  const MorphResult mr = morph_template(parameterise(tm, d), gm, parameterise(gm, d));
  if (mr.clamped() > 0) spdlog::info("{} template nodes clamped to the target boundary", mr.clamped());
  Outputs outs;
  for (double a : parse_doubles(alphas)) {
    const fs::path p = fmt::format("{}_{}.mesh", prefix, a);
    save_mesh(outs.file(p), tm.with_coords(interpolate_alpha(tm.coords(), mr.coords, a)));
  }
  outs.commit();
}

void cmd_hierarchy(const std::string& templates, const std::string& fine, int k, const std::string& domain,
                   const std::string& placement, const fs::path& out) {
  const ShellMesh fm = load_mesh(fine);
  std::vector<ShellMesh> levels{fm};
  std::string_view s = templates;
  while (!s.empty()) {
    const auto comma = s.find(',');
    levels.push_back(load_mesh(std::string(s.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  CoarsePlacement pl = CoarsePlacement::Morphed;
  if (placement == "reference") pl = CoarsePlacement::Reference;
  else if (placement != "morphed") fail(ErrorCode::InvalidArgument, "unknown placement: " + placement);
  const HierarchySkeleton sk = build_coarse_hierarchy(std::move(levels), parse_domain(domain), k);
  const GraphHierarchy h = build_sample_hierarchy(sk, fm, pl);
  spdlog::info("{} coarse levels, mean cross distance {:.6g}, digest {:016x}", h.levels, mean_cross_distance(h),
               h.coarse_digest);
  Outputs outs;
  save_hierarchy(outs.file(out), h);
  outs.commit();
}

void cmd_datagen(const std::string& kind, int n_train, int n_test, std::uint64_t seed, const GridResolution& res,
                 const fs::path& out) {
  CampaignSpec spec;
  spec.kind = parse_case(kind);
  spec.n_train = n_train;
  spec.n_test = n_test;
  spec.seed = seed;
  spec.resolution = res;
  Outputs outs;
  outs.dir(out);
  gen_campaign(spec, out);
  outs.commit();
}

void cmd_train(const Globals& g, const std::string& config) {
  const std::string path = config.empty() ? g.config : config;
  if (path.empty()) fail(ErrorCode::InvalidArgument, "train needs an experiment file (--config)");
  ExperimentSpec spec = load_experiment(path);
  if (g.seed) spec.run.seed = *g.seed;
  if (spec.output.empty()) fail(ErrorCode::InvalidArgument, "experiment sets no output directory");
  const TrainArtifacts a = run_experiment(spec, g.jobs);
  fmt::print("{}\n", a.checkpoint.string());
}

void cmd_evaluate(const Globals& g, const fs::path& checkpoint, const fs::path& dataset, const fs::path& out) {
  const Evaluation ev = evaluate_checkpoint(checkpoint, dataset, g.jobs);
  fmt::print("MED {:.6g} +- {:.6g}, MIPE {:.6g} +- {:.6g}\n", ev.test.med_mean, ev.test.med_std, ev.test.mipe_mean,
             ev.test.mipe_std);
  Outputs outs;
  write_file_atomic(outs.file(out / "metrics.csv"), metrics_csv({ev.test}));
  write_file_atomic(outs.file(out / "per_sample.csv"), per_sample_csv(ev.samples));
  outs.commit();
}

struct ReportArgs {
  std::vector<std::string> metrics;
  std::string pretrain;
  std::string baseline;
  std::vector<std::string> per_sample;
  std::vector<std::string> mask_points;
  fs::path out;
};

void cmd_report(const ReportArgs& a) {
  if (a.metrics.empty() && a.pretrain.empty() && a.per_sample.empty() && a.mask_points.empty())
    fail(ErrorCode::EmptyInput, "report has nothing to summarise");
  Outputs outs;

  if (!a.metrics.empty()) {
    std::string md = "| trial | protocol | samples | MED | MIPE (%) |\n|---|---|---|---|---|\n";
    for (const auto& f : a.metrics)
      for (const auto& r : read_metrics(f))
        md += fmt::format("| {} | {} | {} | {:.4f} ± {:.4f} | {:.2f} ± {:.2f} |\n", r.trial, r.protocol, r.samples,
                          r.med_mean, r.med_std, r.mipe_mean, r.mipe_std);
    write_file_atomic(outs.file(a.out / "summary.md"), md);
  }

  if (!a.pretrain.empty() || !a.baseline.empty()) {
    if (a.pretrain.empty() || a.baseline.empty())
      fail(ErrorCode::InvalidArgument, "--pretrain and --baseline go together");
    const auto pre = read_metrics(a.pretrain);
    const auto base = read_metrics(a.baseline);
    auto rows = improvement_by_budget(pre, base);
    for (auto& r : improvement_by_trial(pre, base)) rows.push_back(std::move(r));
    write_file_atomic(outs.file(a.out / "improvement.csv"), improvement_csv(rows));
    write_file_atomic(outs.file(a.out / "improvement.md"), improvement_markdown(rows));
  }

  if (!a.per_sample.empty()) {
    std::vector<BoxGroup> med, mipe;
    for (const auto& f : a.per_sample) {
      std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_split;
      for (const auto& e : read_per_sample(f)) {
        by_split[e.split].first.push_back(e.med);
        by_split[e.split].second.push_back(e.mipe);
      }
      const std::string label = fs::path(f).parent_path().filename().string();
      BoxGroup gm{label.empty() ? f : label, {}}, gp = gm;
      for (const char* split : {"train", "test"}) {
        auto it = by_split.find(split);
        if (it == by_split.end()) continue;
        gm.boxes.emplace_back(split, it->second.first);
        gp.boxes.emplace_back(split, it->second.second);
      }
      med.push_back(std::move(gm));
      mipe.push_back(std::move(gp));
    }
    write_file_atomic(outs.file(a.out / "med_boxplot.svg"), svg_boxplot(med, "MED, train vs test", "MED (mm)"));
    write_file_atomic(outs.file(a.out / "mipe_boxplot.svg"), svg_boxplot(mipe, "MIPE, train vs test", "MIPE (%)"));
  }

  if (!a.mask_points.empty()) {
    // ratio:metrics.csv, one point per row and trial
    std::map<std::string, Series> med, mipe;
    for (const auto& item : a.mask_points) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) fail(ErrorCode::InvalidArgument, "--mask-point expects <ratio>:<metrics.csv>");
      const double ratio = parse_doubles(item.substr(0, colon)).at(0);
      for (const auto& r : read_metrics(item.substr(colon + 1))) {
        const std::string key = fmt::format("{} ({})", r.trial, r.samples);
        med[key].label = mipe[key].label = key;
        med[key].points.emplace_back(ratio, r.med_mean);
        mipe[key].points.emplace_back(ratio, r.mipe_mean);
      }
    }
    std::vector<Series> ms, ps;
    for (auto& [k, s] : med) {
      std::sort(s.points.begin(), s.points.end());
      ms.push_back(s);
    }
    for (auto& [k, s] : mipe) {
      std::sort(s.points.begin(), s.points.end());
      ps.push_back(s);
    }
    write_file_atomic(outs.file(a.out / "mask_med.svg"), svg_lines(ms, "Mask ratio vs MED", "mask ratio", "MED (mm)"));
    write_file_atomic(outs.file(a.out / "mask_mipe.svg"),
                      svg_lines(ps, "Mask ratio vs MIPE", "mask ratio", "MIPE (%)"));
  }
  outs.commit();
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Mask-morph graph U-net pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Experiment file");
  app.add_option("--seed", g.seed, "Override the seed");
  app.add_option("--jobs", g.jobs, "Worker threads for per-sample preparation")->check(CLI::PositiveNumber);

  auto* mesh = app.add_subcommand("mesh", "Inspect a mesh file");
  mesh->require_subcommand(1);
  std::string mesh_file;
  int corners = 8;
  auto* info = mesh->add_subcommand("info", "Counts, boundary size and digest");
  info->add_option("file", mesh_file)->required()->check(CLI::ExistingFile);
  auto* boundary = mesh->add_subcommand("boundary", "Boundary loop with turning angles and corners");
  boundary->add_option("file", mesh_file)->required()->check(CLI::ExistingFile);
  boundary->add_option("--corners", corners)->check(CLI::IsMember({0, 4, 8}));

  auto* param = app.add_subcommand("param", "Tutte parameterisation to a chart CSV");
  std::string param_mesh, domain = "octagon", backend = "cg";
  fs::path out;
  param->add_option("mesh", param_mesh)->required()->check(CLI::ExistingFile);
  param->add_option("--domain", domain)->check(CLI::IsMember({"disk", "square", "octagon"}));
  param->add_option("--backend", backend)->check(CLI::IsMember({"cg", "direct"}));
  param->add_option("--out", out)->required();

  auto* morph = app.add_subcommand("morph", "Morph a template onto a target, one mesh per alpha");
  std::string tmpl, target, alphas = "0,0.33,0.67,1", prefix;
  morph->add_option("template", tmpl)->required()->check(CLI::ExistingFile);
  morph->add_option("target", target)->required()->check(CLI::ExistingFile);
  morph->add_option("--domain", domain)->check(CLI::IsMember({"disk", "square", "octagon"}));
  morph->add_option("--alpha", alphas);
  morph->add_option("--out-prefix", prefix)->required();

  auto* hier = app.add_subcommand("hierarchy", "Graph hierarchies");
  hier->require_subcommand(1);
  auto* hbuild = hier->add_subcommand("build", "Build the hierarchy of one fine mesh");
  std::string templates, fine, placement = "morphed";
  int k = 3;
  hbuild->add_option("--templates", templates, "Coarse templates, finest first, comma separated")->required();
  hbuild->add_option("--fine", fine)->required()->check(CLI::ExistingFile);
  hbuild->add_option("--k", k)->check(CLI::PositiveNumber);
  hbuild->add_option("--domain", domain)->check(CLI::IsMember({"disk", "square", "octagon"}));
  hbuild->add_option("--placement", placement)->check(CLI::IsMember({"morphed", "reference"}));
  hbuild->add_option("--out", out)->required();

  auto* datagen = app.add_subcommand("datagen", "Generate a synthetic campaign");
  std::string kind = "bpillar_a3";
  int n_train = 300, n_test = 50;
  GridResolution res;
  datagen->add_option("--case", kind)->check(CLI::IsMember({"bpillar_a1", "bpillar_a2", "bpillar_a3", "uchannel"}));
  datagen->add_option("--train", n_train)->check(CLI::NonNegativeNumber);
  datagen->add_option("--test", n_test)->check(CLI::NonNegativeNumber);
  datagen->add_option("--across", res.across, "Element intervals across the profile")->check(CLI::Range(4, 4096));
  datagen->add_option("--along", res.along, "Element intervals along the part")->check(CLI::Range(4, 4096));
  datagen->add_option("--out", out)->required();

  auto* train = app.add_subcommand("train", "Train from an experiment file");
  std::string train_config;
  train->add_option("spec", train_config, "Experiment file (or the global --config)");

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset");
  fs::path checkpoint, dataset;
  evaluate->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--dataset", dataset, "Campaign manifest")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--out", out)->required();

  auto* report = app.add_subcommand("report", "Tables and SVG plots from metric files");
  ReportArgs ra;
  report->add_option("--metrics", ra.metrics)->check(CLI::ExistingFile);
  report->add_option("--pretrain", ra.pretrain)->check(CLI::ExistingFile);
  report->add_option("--baseline", ra.baseline)->check(CLI::ExistingFile);
  report->add_option("--per-sample", ra.per_sample)->check(CLI::ExistingFile);
  report->add_option("--mask-point", ra.mask_points, "<ratio>:<metrics.csv>");
  report->add_option("--out", ra.out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (info->parsed()) cmd_mesh_info(mesh_file);
    else if (boundary->parsed()) cmd_mesh_boundary(mesh_file, corners);
    else if (param->parsed()) cmd_param(param_mesh, domain, backend, out);
    else if (morph->parsed()) cmd_morph(tmpl, target, domain, alphas, prefix);
    else if (hbuild->parsed()) cmd_hierarchy(templates, fine, k, domain, placement, out);
    else if (datagen->parsed()) cmd_datagen(kind, n_train, n_test, g.seed.value_or(0), res, out);
    else if (train->parsed()) cmd_train(g, train_config);
    else if (evaluate->parsed()) cmd_evaluate(g, checkpoint, dataset, out);
    else if (report->parsed()) cmd_report(ra);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 0;
}
