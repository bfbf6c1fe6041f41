#pragma once

// Time-conditioned residual evolution of node states:
//
//   for t = 0 .. T-1:  H <- H + F([H ; e_t], E);  z_t = mean_pool(H)
//
// F is one message-passing layer with ReLU followed by a linear output layer.

#include <optional>
#include <random>
#include <string_view>
#include <vector>

#include "dypro/autodiff.hpp"
#include "dypro/graph.hpp"

namespace dypro {

enum class Backbone { GraphSage, Gcn, Gat };

const char* backbone_name(Backbone b) noexcept;
std::optional<Backbone> backbone_from_name(std::string_view name) noexcept;

struct EvolutionDims {
  Eigen::Index latent = 32;     // d
  Eigen::Index time_embed = 16; // d_t
  Eigen::Index hidden = 32;     // message-layer width
  Eigen::Index horizon = 12;    // rows of the time-embedding table
};

/// Parameter handles of the residual operator. Which message weights exist
/// depends on the backbone:
///   GraphSAGE  self (w x h), neigh ((w+3) x h)
///   GCN        self (w x h)
///   GAT        self (w x h), neigh (w x h), attention dst/src (h x 1), edge (3 x 1)
/// with w = d + d_t and h = hidden.
struct EvolutionParams {
  Backbone backbone = Backbone::GraphSage;
  EvolutionDims dims;
  ad::ParamId time_table = 0;
  ad::ParamId w_self = 0;
  std::optional<ad::ParamId> w_neigh;
  ad::ParamId b_hidden = 0;
  std::optional<ad::ParamId> attn_dst;
  std::optional<ad::ParamId> attn_src;
  std::optional<ad::ParamId> attn_edge;
  ad::ParamId w_out = 0;
  ad::ParamId b_out = 0;
};

inline constexpr double kAttentionSlope = 0.2;

EvolutionParams make_evolution_params(ad::ParameterSet& params, Backbone backbone,
                                      const EvolutionDims& dims, std::mt19937_64& rng);

/// Row t of the time-embedding table (1 x d_t).
ad::Var time_embedding(ad::Tape& tape, const EvolutionParams& evo, Eigen::Index t);

/// Increment for every node given states H (N x d) and e_t (1 x d_t).
ad::Var residual_step(ad::Var states, ad::Var time_embed, const GraphBatch& batch,
                      const EvolutionParams& evo);

/// Column-wise mean over each graph's node rows: N x d -> B x d.
ad::Var readout(ad::Var states, const GraphBatch& batch);

struct TrajectorySnapshots {
  std::vector<ad::Var> snapshots;  // z_0 .. z_{T-1}, each B x d
  std::vector<ad::Var> states;     // H after each update
};

/// Rolls the residual operator forward `horizon` steps. Throws
/// TrainingError naming the step if a state becomes non-finite.
TrajectorySnapshots evolve(ad::Var initial, const GraphBatch& batch, const EvolutionParams& evo,
                           Eigen::Index horizon);

}  // namespace dypro
