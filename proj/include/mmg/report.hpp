#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mmg {

/// One row of a metrics file: trial,protocol,samples,MED_mean,MED_std,MIPE_mean,MIPE_std
struct MetricsRow {
  std::string trial;
  std::string protocol;
  int samples = 0;
  double med_mean = 0.0;
  double med_std = 0.0;
  double mipe_mean = 0.0;
  double mipe_std = 0.0;
};

std::string metrics_csv(const std::vector<MetricsRow>& rows);
/// Throws EmptyInput when the text holds no data rows.
std::vector<MetricsRow> parse_metrics_csv(std::string_view text, std::string_view source = "metrics");
std::vector<MetricsRow> read_metrics(const std::filesystem::path& path);

struct SampleError {
  std::string id;
  std::string split;
  double med = 0.0;
  double mipe = 0.0;
};

std::string per_sample_csv(const std::vector<SampleError>& rows);
std::vector<SampleError> parse_per_sample_csv(std::string_view text, std::string_view source = "per-sample");
std::vector<SampleError> read_per_sample(const std::filesystem::path& path);

/// Pretrained vs no-pretrain comparison; samples = -1 marks a trial-level row
/// built from the budget-averaged means.
struct ImprovementRow {
  std::string trial;
  int samples = -1;
  double med_pretrain = 0.0;
  double med_baseline = 0.0;
  double med_improvement = 0.0;
  double mipe_pretrain = 0.0;
  double mipe_baseline = 0.0;
  double mipe_improvement = 0.0;
};

/// Rows are matched on (trial, samples).
std::vector<ImprovementRow> improvement_by_budget(const std::vector<MetricsRow>& pretrain,
                                                  const std::vector<MetricsRow>& baseline);
std::vector<ImprovementRow> improvement_by_trial(const std::vector<MetricsRow>& pretrain,
                                                 const std::vector<MetricsRow>& baseline);
std::string improvement_csv(const std::vector<ImprovementRow>& rows);
std::string improvement_markdown(const std::vector<ImprovementRow>& rows);

struct BoxGroup {
  std::string label;
  std::vector<std::pair<std::string, std::vector<double>>> boxes;  // e.g. train, test
};

std::string svg_boxplot(const std::vector<BoxGroup>& groups, std::string_view title, std::string_view ylabel);

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

std::string svg_lines(const std::vector<Series>& series, std::string_view title, std::string_view xlabel,
                      std::string_view ylabel);

/// Five-number summary used by the box plots: min, q1, median, q3, max.
std::array<double, 5> five_numbers(std::vector<double> v);

}  // namespace mmg
