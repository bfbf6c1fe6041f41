#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dypro/cohort.hpp"
#include "dypro/config.hpp"
#include "dypro/metrics.hpp"
#include "dypro/model.hpp"

namespace dypro {

/// Metric columns in report order.
inline constexpr std::array<const char*, 6> kMetricNames = {"cindex", "ibs",  "auc1",
                                                            "auc3",   "auc5", "mae"};
inline constexpr std::array<Task, 2> kReportTasks = {Task::Os, Task::Dfs};

/// One value per kMetricNames entry; nullopt = undefined on this fold.
using MetricRow = std::array<std::optional<double>, kMetricNames.size()>;

struct FoldRecord {
  std::size_t repeat = 0;
  std::size_t fold = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  std::size_t epochs = 0;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  std::size_t capped_weights = 0;
  MetricRow os;
  MetricRow dfs;

  const MetricRow& row(Task t) const { return t == Task::Os ? os : dfs; }
  friend bool operator==(const FoldRecord&, const FoldRecord&) = default;
};

struct Aggregate {
  std::optional<double> mean;
  std::optional<double> std;  // sample standard deviation
  std::size_t count = 0;      // folds with a defined value
  friend bool operator==(const Aggregate&, const Aggregate&) = default;
};

struct CiRecord {
  double estimate = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double level = 0.95;
  std::size_t resamples = 0;
  std::size_t discarded = 0;
  std::string text;
  friend bool operator==(const CiRecord&, const CiRecord&) = default;
};

/// Contents of report.json.
struct CvReport {
  std::string variant = "full";
  std::uint64_t seed = 0;
  nlohmann::json config;
  double runtime_seconds = 0.0;
  std::vector<FoldRecord> folds;
  std::size_t failed_folds = 0;
  /// task name -> metric name -> aggregate over folds.
  std::map<std::string, std::map<std::string, Aggregate>> aggregate;
  /// task name -> C-index CI over pooled out-of-fold predictions (repeat 0).
  std::map<std::string, CiRecord> cindex_ci;
  /// Largest |d OS-loss / d DFS-context weight| on a probe batch; exactly 0
  /// when the cascade is disabled.
  double os_grad_wrt_dfs_context = 0.0;

  friend bool operator==(const CvReport&, const CvReport&) = default;
};

/// Out-of-fold predictions of repeat 0: every patient exactly once.
struct OutOfFold {
  std::vector<std::string> patient_ids;
  ad::Matrix os_hazards;   // n x K
  ad::Matrix dfs_hazards;
  std::vector<bool> predicted;  // false where the fold failed
};

struct CrossvalRun {
  CvReport report;
  OutOfFold out_of_fold;
};

/// Metrics of one task from hazard rows and labels.
struct TaskEvaluation {
  MetricRow row;
  std::size_t capped_weights = 0;
};
TaskEvaluation evaluate_task(const ad::Matrix& hazards, std::span<const SurvivalLabel> labels,
                             const TimeBins& bins, const EvalConfig& eval, double tau);

/// Aggregates fold rows; failed folds and missing values are skipped.
std::map<std::string, std::map<std::string, Aggregate>> aggregate_folds(
    const std::vector<FoldRecord>& folds);

/// Percentile-bootstrap CI of the C-index over the given hazards.
CiRecord cindex_interval(const ad::Matrix& hazards, std::span<const SurvivalLabel> labels,
                         const TimeBins& bins, Task task, std::size_t resamples, double level,
                         std::uint64_t seed);

/// Runs every fold of the repeated stratified k-fold plan. Fold failures
/// are recorded, not thrown. Optional `log` receives per-epoch lines.
CrossvalRun run_crossval(const RunConfig& config, const Cohort& cohort,
                         std::ostream* log = nullptr);

enum class Ablation { Full, Static, MeanIntegrator, NoCascade };

const char* ablation_name(Ablation a) noexcept;
std::optional<Ablation> ablation_from_name(std::string_view name) noexcept;

/// The config with the variant's change applied.
RunConfig ablated(const RunConfig& config, Ablation variant);
CrossvalRun run_ablation(const RunConfig& config, const Cohort& cohort, Ablation variant,
                         std::ostream* log = nullptr);

/// True when more than a third of the folds failed.
bool too_many_failures(const CvReport& report);

// ---------------------------------------------------------------------------
// Report files

nlohmann::json to_json(const CvReport& report);
CvReport report_from_json(const nlohmann::json& j);

/// "%.6g", or "NA" for a missing value.
std::string format_number(std::optional<double> v);

std::string metrics_csv(const CvReport& report);
std::string curves_csv(const OutOfFold& predictions, const TimeBins& bins);

/// Writes report.json, metrics.csv and curves.csv into `dir` (created if
/// needed). Throws DataError if a file cannot be written.
void emit_report(const CrossvalRun& run, const TimeBins& bins, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------

/// Gradient check of the whole pipeline on a 3-patient simulated batch.
ad::GradCheckResult toy_gradient_check(Backbone backbone, Eigen::Index latent,
                                       Eigen::Index horizon, std::uint64_t seed,
                                       double step = 1e-5);

}  // namespace dypro
