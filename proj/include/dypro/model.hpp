#pragma once

// End-to-end model: embed -> evolve -> integrate -> DFS head -> OS head.

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "dypro/autodiff.hpp"
#include "dypro/evolution.hpp"
#include "dypro/graph.hpp"
#include "dypro/objective.hpp"
#include "dypro/survival_heads.hpp"
#include "dypro/trajectory.hpp"
#include "dypro/types.hpp"

namespace dypro {

enum class Integrator { Lstm, Mean };

const char* integrator_name(Integrator i) noexcept;
std::optional<Integrator> integrator_from_name(std::string_view name) noexcept;

struct ModelConfig {
  Backbone backbone = Backbone::GraphSage;
  Eigen::Index latent = 32;       // d
  Eigen::Index time_embed = 16;   // d_t
  Eigen::Index lstm_hidden = 32;  // d_h
  Eigen::Index context = 16;      // d_c
  Eigen::Index horizon = 12;      // T
  TimeBins bins = TimeBins::annual(12);
  bool cascade = true;
  Integrator integrator = Integrator::Lstm;
  /// Skip the residual update entirely: one snapshot of the embedded graph.
  bool zero_update = false;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Throws ConfigError for out-of-range widths.
void validate(const ModelConfig& config);

struct ForwardResult {
  TrajectorySnapshots trajectory;
  ad::Var h_star;
  ad::Var dfs_logits;   // B x K
  ad::Var dfs_context;  // B x d_c
  ad::Var os_logits;    // B x K
};

struct Predictions {
  ad::Matrix dfs_hazards;  // B x K
  ad::Matrix os_hazards;
};

class DyProModel {
 public:
  DyProModel(const ModelConfig& config, const FeatureSchema& schema, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  const FeatureSchema& schema() const noexcept { return schema_; }
  ad::ParameterSet& parameters() noexcept { return params_; }
  const ad::ParameterSet& parameters() const noexcept { return params_; }
  const EvolutionParams& evolution() const noexcept { return evolution_; }
  const LstmParams& lstm() const noexcept { return lstm_; }
  const HeadParams& heads() const noexcept { return heads_; }

  ForwardResult forward(ad::Tape& tape, const GraphBatch& batch) const;

  /// alpha * OS NLL + beta * DFS NLL, each averaged over the batch.
  ad::Var loss(ad::Tape& tape, const GraphBatch& batch, std::span<const SurvivalLabel> os,
               std::span<const SurvivalLabel> dfs, const LossWeights& weights) const;

  Predictions predict(const GraphBatch& batch) const;
  Predictions predict(std::span<const PatientGraph* const> graphs,
                      std::size_t batch_size = 64) const;

 private:
  ModelConfig config_;
  FeatureSchema schema_;
  ad::ParameterSet params_;
  EmbeddingParams embedding_;
  EvolutionParams evolution_;
  LstmParams lstm_;
  HeadParams heads_;
};

}  // namespace dypro
