#pragma once

// Run configuration: one JSON document, every section optional, unknown
// keys rejected.
//
//   { "model":    { backbone, d, d_t, d_h, d_c, T, K, bin_edges, cascade,
//                   integrator, static_zero_update },
//     "train":    { lr, batch, alpha, beta, max_epochs, patience,
//                   scheduler_factor, scheduler_patience, seed, augment,
//                   beta1, beta2, eps, weight_decay, dropout, noise },
//     "eval":     { horizons, tau, bootstrap, level, weight_cap },
//     "cv":       { k, repeats },
//     "simulate": { n, signal, censoring, hazard_ratio, os_hazard,
//                   dfs_hazard, region_absent, region_len, clinical_len },
//     "paths":    { cohort, output } }

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "dypro/cohort.hpp"
#include "dypro/model.hpp"
#include "dypro/training.hpp"

namespace dypro {

struct EvalConfig {
  std::array<double, 3> horizons = {1.0, 3.0, 5.0};  // reported as auc1, auc3, auc5
  std::optional<double> tau;                         // default min(5, last bin edge)
  std::size_t bootstrap = 1000;
  double level = 0.95;
  double weight_cap = 100.0;

  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

struct CvConfig {
  std::size_t k = 5;
  std::size_t repeats = 3;

  friend bool operator==(const CvConfig&, const CvConfig&) = default;
};

struct SimulateConfig {
  std::size_t n = 400;
  SimulationScenario scenario;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::uint64_t seed = 42;
  EvalConfig eval;
  CvConfig cv;
  SimulateConfig simulate;
  std::filesystem::path cohort_path;
  std::filesystem::path output_dir = "dypro-out";

  /// IBS horizon after defaulting.
  double tau() const;
};

/// Throws ConfigError on unknown keys, wrong types or out-of-range values.
/// Relative paths are resolved against `base_dir`.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::json to_json(const RunConfig& config);

/// Throws ConfigError if any field is out of range.
void validate(const RunConfig& config);

}  // namespace dypro
