#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dypro/graph.hpp"
#include "dypro/types.hpp"

namespace dypro {

struct PatientRecord {
  std::string id;
  PatientGraph graph;  // built and validated
  SurvivalLabel dfs;
  SurvivalLabel os;
};

struct Cohort {
  FeatureSchema schema;
  std::vector<PatientRecord> patients;

  std::vector<SurvivalLabel> labels(Task task) const;
};

inline constexpr int kCohortSchemaVersion = 1;

/// Parses and validates a cohort document. Throws DataError naming the
/// patient and field on any schema violation.
Cohort parse_cohort(const std::string& json_text);
Cohort load_cohort(const std::filesystem::path& path);

std::string serialize_cohort(const Cohort& cohort);
void save_cohort(const Cohort& cohort, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Simulation

struct SimulationScenario {
  double signal = 1.0;          // scale of the group-informative feature shift
  double censoring = 0.3;       // expected OS censoring fraction
  double hazard_ratio = 3.0;    // high-risk / low-risk annual hazard
  double os_hazard = 0.25;      // low-risk annual OS hazard
  double dfs_hazard = 0.3;      // low-risk annual DFS hazard, >= os_hazard
  double region_absent = 0.1;   // chance each non-liver region is missing
  FeatureSchema schema;
};

struct SimulatedCohort {
  Cohort cohort;
  std::vector<int> group;       // 1 = high risk
  double censoring_limit = 0.0; // C ~ U(0, limit); infinity when uncensored
};

/// Two latent groups with equal prior. Group g uses annual hazards
/// h_os = os_hazard * ratio^g and h_dfs = dfs_hazard * ratio^g (capped at
/// 0.95); both endpoints share one uniform draw so DFS <= OS. Events fall at
/// bin midpoints. A single U(0, limit) censoring time applies to both
/// endpoints, with `limit` solved so the expected OS censoring fraction
/// equals scenario.censoring.
SimulatedCohort simulate_cohort(std::size_t n, std::uint64_t seed,
                                const SimulationScenario& scenario);

/// Expected OS censoring fraction for a censoring limit.
double expected_censoring(const SimulationScenario& scenario, double limit);

/// C-index of the true group as the risk score, by pair enumeration.
double oracle_cindex(const SimulatedCohort& sim, Task task);

// ---------------------------------------------------------------------------
// Splitting

struct FoldSplit {
  std::size_t repeat = 0;
  std::size_t fold = 0;
  std::vector<std::size_t> train;       // patient indices
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

struct SplitPlan {
  std::size_t k = 0;
  std::size_t repeats = 0;
  std::vector<FoldSplit> folds;  // repeat-major
};

/// Strata are OS-event x DFS-event cells; cells with fewer than k members
/// fold into their OS-event parent (and a parent still below k into a
/// single stratum). Members are shuffled per stratum and dealt round-robin,
/// continuing the deal position across strata. The non-test patients of
/// each fold are split 0.8/0.2 into train/validation the same way.
SplitPlan stratified_repeated_kfold(std::span<const SurvivalLabel> os,
                                    std::span<const SurvivalLabel> dfs, std::size_t k,
                                    std::size_t repeats, std::uint64_t seed);

struct Holdout {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Stratified 0.8/0.2 split of `members`, as used inside each fold.
Holdout stratified_holdout(std::span<const std::size_t> members,
                           std::span<const SurvivalLabel> os, std::span<const SurvivalLabel> dfs,
                           std::uint64_t seed);

// ---------------------------------------------------------------------------
// Augmentation

struct AugmentOptions {
  double dropout = 0.05;  // per anatomical node
  double noise = 0.1;     // Gaussian sigma on raw features
  std::size_t variants = 4;

  friend bool operator==(const AugmentOptions&, const AugmentOptions&) = default;
};

/// Original graph followed by `variants` perturbed copies. Dropout never
/// removes the global CT node, the clinical node, or the last present
/// anatomical node.
std::vector<PatientGraph> augment(const PatientGraph& graph, std::uint64_t seed,
                                  const AugmentOptions& options = {});

}  // namespace dypro
