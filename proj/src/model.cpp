#include "dypro/model.hpp"

#include <algorithm>
#include <random>

#include "dypro/error.hpp"
#include "dypro/random.hpp"

namespace dypro {

const char* integrator_name(Integrator i) noexcept {
  return i == Integrator::Lstm ? "lstm" : "mean";
}

std::optional<Integrator> integrator_from_name(std::string_view name) noexcept {
  if (name == "lstm") return Integrator::Lstm;
  if (name == "mean") return Integrator::Mean;
  return std::nullopt;
}

void validate(const ModelConfig& c) {
  if (c.latent < 1) throw ConfigError("model.d must be >= 1");
  if (c.time_embed < 0) throw ConfigError("model.d_t must be >= 0");
  if (c.lstm_hidden < 1) throw ConfigError("model.d_h must be >= 1");
  if (c.context < 1) throw ConfigError("model.d_c must be >= 1");
  if (c.horizon < 1) throw ConfigError("model.T must be >= 1");
}

DyProModel::DyProModel(const ModelConfig& config, const FeatureSchema& schema, std::uint64_t seed)
    : config_(config), schema_(schema) {
  validate(config_);
  std::mt19937_64 rng(derive_seed(seed, {0x0de1u}));
  embedding_ = make_embedding_params(params_, schema_, config_.latent, rng);
  evolution_ = make_evolution_params(
      params_, config_.backbone,
      EvolutionDims{config_.latent, config_.time_embed, config_.latent, config_.horizon}, rng);
  const Eigen::Index head_input =
      config_.integrator == Integrator::Lstm ? config_.lstm_hidden : config_.latent;
  if (config_.integrator == Integrator::Lstm) {
    lstm_ = make_lstm_params(params_, config_.latent, config_.lstm_hidden, rng);
  }
  heads_ = make_head_params(params_, head_input, config_.context,
                            static_cast<Eigen::Index>(config_.bins.size()), rng);
}

ForwardResult DyProModel::forward(ad::Tape& tape, const GraphBatch& batch) const {
  ForwardResult out;
  const ad::Var initial = embed_nodes(tape, batch, embedding_);
  if (config_.zero_update) {
    out.trajectory.states = {initial};
    out.trajectory.snapshots = {readout(initial, batch)};
  } else {
    out.trajectory = evolve(initial, batch, evolution_, config_.horizon);
  }
  out.h_star = config_.integrator == Integrator::Lstm
                   ? integrate(out.trajectory.snapshots, lstm_)
                   : integrate_mean(out.trajectory.snapshots);
  const DfsHeadOutput dfs = dfs_head(out.h_star, heads_);
  out.dfs_logits = dfs.logits;
  out.dfs_context = dfs.context;
  out.os_logits = os_head(out.h_star, dfs.context, heads_, config_.cascade);
  return out;
}

ad::Var DyProModel::loss(ad::Tape& tape, const GraphBatch& batch,
                         std::span<const SurvivalLabel> os, std::span<const SurvivalLabel> dfs,
                         const LossWeights& weights) const {
  if (os.size() != batch.graph_count() || dfs.size() != batch.graph_count()) {
    throw ShapeError("loss: " + std::to_string(batch.graph_count()) + " graphs, " +
                     std::to_string(os.size()) + " OS and " + std::to_string(dfs.size()) +
                     " DFS labels");
  }
  const ForwardResult f = forward(tape, batch);
  const ad::Var os_nll = batch_nll(f.os_logits, make_nll_targets(os, config_.bins));
  const ad::Var dfs_nll = batch_nll(f.dfs_logits, make_nll_targets(dfs, config_.bins));
  return combined_loss(os_nll, dfs_nll, weights);
}

Predictions DyProModel::predict(const GraphBatch& batch) const {
  ad::Tape tape(params_);
  const ForwardResult f = forward(tape, batch);
  auto hazards = [](const ad::Matrix& logits) {
    ad::Matrix h(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      h.row(r) = hazards_from_logits(logits.row(r).transpose()).transpose();
    }
    return h;
  };
  return {hazards(f.dfs_logits.value()), hazards(f.os_logits.value())};
}

Predictions DyProModel::predict(std::span<const PatientGraph* const> graphs,
                                std::size_t batch_size) const {
  const auto k = static_cast<Eigen::Index>(config_.bins.size());
  const auto n = static_cast<Eigen::Index>(graphs.size());
  Predictions all{ad::Matrix(n, k), ad::Matrix(n, k)};
  batch_size = std::max<std::size_t>(batch_size, 1);
  for (std::size_t start = 0; start < graphs.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, graphs.size() - start);
    const GraphBatch batch(graphs.subspan(start, count));
    const Predictions p = predict(batch);
    const auto row = static_cast<Eigen::Index>(start);
    const auto rows = static_cast<Eigen::Index>(count);
    all.dfs_hazards.middleRows(row, rows) = p.dfs_hazards;
    all.os_hazards.middleRows(row, rows) = p.os_hazards;
  }
  return all;
}

}  // namespace dypro
