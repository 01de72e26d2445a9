#pragma once

#include "mmg/datagen.hpp"
#include "mmg/report.hpp"
#include "mmg/training.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mmg {

enum class ProtocolKind { SingleCase, AllCases, AllButTarget, Transfer };

std::string_view to_string(ProtocolKind p);
ProtocolKind parse_protocol(std::string_view s);

/// Training schedule of one run: a masked phase with everything trainable,
/// then an unmasked phase with the freeze set applied. Either may be empty.
struct RunConfig {
  ProtocolKind protocol = ProtocolKind::SingleCase;
  ModelConfig model;
  double mask_ratio = 0.2;
  int pretrain_epochs = 0;
  int finetune_epochs = 0;
  AdamOptions adam;
  int batch = 4;
  std::uint64_t seed = 0;
  std::set<LayerKind> freeze = default_freeze_policy();
};

struct PhaseLog {
  std::string phase;
  EpochLog entry;
};

struct RunResult {
  TrainState state;
  std::vector<PhaseLog> log;
  Metrics train;
  Metrics test;
};

/// Samples feeding each phase. Normalisation is fitted on the union of both.
struct RunData {
  std::vector<const TrainSample*> pretrain;
  std::vector<const TrainSample*> finetune;
  std::vector<const TrainSample*> test;
};

RunResult run_training(const RunConfig& config, const RunData& data, const HierarchySkeleton& skeleton);

struct CaseData {
  std::string name;
  std::vector<TrainSample> train;
  std::vector<TrainSample> test;
};

/// Sample selection of the four protocols. `target` indexes `cases`;
/// `limit` caps the target's training samples (0 keeps all).
RunData select_protocol(ProtocolKind protocol, const std::vector<CaseData>& cases, int target, int limit = 0);

/// Samples are prepared on up to `jobs` threads; the result order follows `records`.
std::vector<TrainSample> load_samples(const std::vector<SampleRecord>& records, const HierarchySkeleton& skeleton,
                                      const FeatureLayout& layout, CoarsePlacement placement, int jobs = 1);

HierarchySkeleton load_skeleton(const Manifest& m, int k = 3);

/// Parsed experiment file: `key = value` lines, `#` comments, quoted strings
/// and `[a, b]` lists. Unknown keys are rejected.
struct ExperimentSpec {
  std::string trial = "run";
  std::vector<std::filesystem::path> cases;
  std::filesystem::path target;
  ProtocolKind protocol = ProtocolKind::SingleCase;
  CoarsePlacement placement = CoarsePlacement::Morphed;
  std::vector<FeatureBlock> features = {FeatureBlock::OneHot, FeatureBlock::Dtc};
  int train_limit = 0;
  int k = 3;
  RunConfig run;
  std::filesystem::path output;
};

ExperimentSpec parse_experiment(std::string_view text, const std::filesystem::path& base = {});
/// Parses and checks that every referenced manifest exists.
ExperimentSpec load_experiment(const std::filesystem::path& path);

/// Everything cmd_evaluate needs to rebuild inputs for a checkpoint.
std::string checkpoint_meta(const ExperimentSpec& spec, const RunResult& result, const HierarchySkeleton& skeleton);

struct LoadedModel {
  std::unique_ptr<GUNet> model;
  Normalization norm;
  FeatureLayout layout;
  CoarsePlacement placement = CoarsePlacement::Morphed;
  HierarchySkeleton skeleton;
  std::string trial;
  ProtocolKind protocol = ProtocolKind::SingleCase;
  int samples = 0;  // training samples of the final phase
};

LoadedModel load_model(const std::filesystem::path& checkpoint);

struct TrainArtifacts {
  std::filesystem::path checkpoint;  // model.mmgc
  std::filesystem::path log;         // train_log.csv
  std::filesystem::path metrics;     // metrics.csv
  std::filesystem::path per_sample;  // per_sample.csv
};

/// Loads every case, trains as the experiment describes and writes the artifacts into
/// spec.output. Nothing is left behind when a step fails.
TrainArtifacts run_experiment(const ExperimentSpec& spec, int jobs = 1);

struct Evaluation {
  MetricsRow test;
  std::vector<SampleError> samples;  // train split then test split
};

/// Test-split metrics and per-sample errors of a checkpoint on a dataset.
Evaluation evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest,
                               int jobs = 1);

}  // namespace mmg
