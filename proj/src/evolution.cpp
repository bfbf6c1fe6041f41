#include "dypro/evolution.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "dypro/error.hpp"

namespace dypro {

const char* backbone_name(Backbone b) noexcept {
  switch (b) {
    case Backbone::GraphSage: return "graphsage";
    case Backbone::Gcn: return "gcn";
    case Backbone::Gat: return "gat";
  }
  return "unknown";
}

std::optional<Backbone> backbone_from_name(std::string_view name) noexcept {
  for (Backbone b : {Backbone::GraphSage, Backbone::Gcn, Backbone::Gat}) {
    if (name == backbone_name(b)) return b;
  }
  return std::nullopt;
}

EvolutionParams make_evolution_params(ad::ParameterSet& params, Backbone backbone,
                                      const EvolutionDims& dims, std::mt19937_64& rng) {
  if (dims.latent < 1 || dims.time_embed < 0 || dims.hidden < 1 || dims.horizon < 1) {
    throw ConfigError("evolution dimensions must be positive");
  }
  EvolutionParams evo;
  evo.backbone = backbone;
  evo.dims = dims;
  const Eigen::Index w = dims.latent + dims.time_embed;
  const Eigen::Index h = dims.hidden;

  evo.time_table = params.add("evolve.time_table",
                              uniform_init(dims.horizon, dims.time_embed, dims.time_embed, rng));
  evo.w_self = params.add("evolve.w_self", uniform_init(w, h, w, rng));
  switch (backbone) {
    case Backbone::GraphSage:
      evo.w_neigh = params.add("evolve.w_neigh", uniform_init(w + 3, h, w + 3, rng));
      break;
    case Backbone::Gcn:
      break;
    case Backbone::Gat:
      evo.w_neigh = params.add("evolve.w_neigh", uniform_init(w, h, w, rng));
      evo.attn_dst = params.add("evolve.attn_dst", uniform_init(h, 1, h, rng));
      evo.attn_src = params.add("evolve.attn_src", uniform_init(h, 1, h, rng));
      evo.attn_edge = params.add("evolve.attn_edge", uniform_init(3, 1, 3, rng));
      break;
  }
  evo.b_hidden = params.add("evolve.b_hidden", uniform_init(1, h, w, rng));
  evo.w_out = params.add("evolve.w_out", uniform_init(h, dims.latent, h, rng));
  evo.b_out = params.add("evolve.b_out", uniform_init(1, dims.latent, h, rng));
  return evo;
}

ad::Var time_embedding(ad::Tape& tape, const EvolutionParams& evo, Eigen::Index t) {
  ad::Var table = tape.param(evo.time_table);
  if (t < 0 || t >= table.rows()) {
    throw DomainError("time_embedding: step " + std::to_string(t) + " outside [0, " +
                      std::to_string(table.rows()) + ")");
  }
  return ad::slice_rows(table, t, 1);
}

namespace {

// Additive attention over in-neighbours, softmax-normalized per target node.
ad::Var attention_aggregate(ad::Tape& tape, ad::Var z, const GraphBatch& batch,
                            const EvolutionParams& evo) {
  const ad::Var p = ad::matmul(z, tape.param(*evo.attn_dst));
  const ad::Var q = ad::matmul(z, tape.param(*evo.attn_src));
  const ad::Var e = ad::matmul(tape.constant(batch.arc_attr()), tape.param(*evo.attn_edge));
  const ad::Var score = ad::leaky_relu(
      ad::add(ad::add(ad::spmm(batch.gather_target(), p), ad::spmm(batch.gather_source(), q)), e),
      kAttentionSlope);

  // Per-target max shift; softmax is invariant to it so it is a constant.
  const auto arcs = static_cast<Eigen::Index>(batch.arc_count());
  Eigen::VectorXd node_max =
      Eigen::VectorXd::Constant(static_cast<Eigen::Index>(batch.node_count()),
                                -std::numeric_limits<double>::infinity());
  for (Eigen::Index a = 0; a < arcs; ++a) {
    const auto t = batch.arc_target()[a];
    node_max[t] = std::max(node_max[t], score.value()(a, 0));
  }
  ad::Matrix shift(arcs, 1);
  for (Eigen::Index a = 0; a < arcs; ++a) shift(a, 0) = node_max[batch.arc_target()[a]];

  const ad::Var weight = ad::exp(ad::sub(score, tape.constant(shift)));
  const ad::Var denom =
      ad::spmm(batch.gather_target(), ad::spmm(batch.scatter_target(), weight));
  const ad::Var alpha = ad::div(weight, denom);
  const ad::Var spread = ad::matmul(alpha, tape.constant(ad::Matrix::Ones(1, z.cols())));
  const ad::Var messages = ad::mul(ad::spmm(batch.gather_source(), z), spread);
  return ad::spmm(batch.scatter_target(), messages);
}

}  // namespace

ad::Var residual_step(ad::Var states, ad::Var time_embed, const GraphBatch& batch,
                      const EvolutionParams& evo) {
  if (states.cols() != evo.dims.latent ||
      states.rows() != static_cast<Eigen::Index>(batch.node_count())) {
    throw ShapeError("residual_step: states " + std::to_string(states.rows()) + "x" +
                     std::to_string(states.cols()) + ", expected " +
                     std::to_string(batch.node_count()) + "x" + std::to_string(evo.dims.latent));
  }
  if (time_embed.rows() != 1 || time_embed.cols() != evo.dims.time_embed) {
    throw ShapeError("residual_step: time embedding " + std::to_string(time_embed.rows()) + "x" +
                     std::to_string(time_embed.cols()) + ", expected 1x" +
                     std::to_string(evo.dims.time_embed));
  }
  ad::Tape& tape = *states.tape();
  const ad::Var x = ad::concat_cols(states, ad::broadcast_row(time_embed, states.rows()));
  const ad::Var w_self = tape.param(evo.w_self);

  ad::Var pre;
  switch (evo.backbone) {
    case Backbone::GraphSage: {
      const ad::Var neigh =
          ad::concat_cols(ad::spmm(batch.mean_adjacency(), x), tape.constant(batch.mean_arc_attr()));
      pre = ad::add(ad::matmul(x, w_self), ad::matmul(neigh, tape.param(*evo.w_neigh)));
      break;
    }
    case Backbone::Gcn:
      pre = ad::matmul(ad::spmm(batch.gcn_adjacency(), x), w_self);
      break;
    case Backbone::Gat: {
      pre = ad::matmul(x, w_self);
      if (batch.arc_count() > 0) {
        const ad::Var z = ad::matmul(x, tape.param(*evo.w_neigh));
        pre = ad::add(pre, attention_aggregate(tape, z, batch, evo));
      }
      break;
    }
  }
  const ad::Var hidden = ad::relu(ad::add(pre, tape.param(evo.b_hidden)));
  return ad::add(ad::matmul(hidden, tape.param(evo.w_out)), tape.param(evo.b_out));
}

ad::Var readout(ad::Var states, const GraphBatch& batch) {
  if (states.rows() == 0) throw DomainError("readout: no nodes");
  return ad::spmm(batch.readout(), states);
}

TrajectorySnapshots evolve(ad::Var initial, const GraphBatch& batch, const EvolutionParams& evo,
                           Eigen::Index horizon) {
  if (horizon < 1) throw DomainError("evolve: horizon must be at least 1");
  ad::Tape& tape = *initial.tape();
  TrajectorySnapshots out;
  out.snapshots.reserve(static_cast<std::size_t>(horizon));
  out.states.reserve(static_cast<std::size_t>(horizon));
  ad::Var h = initial;
  for (Eigen::Index t = 0; t < horizon; ++t) {
    const ad::Var delta = residual_step(h, time_embedding(tape, evo, t), batch, evo);
    h = ad::add(h, delta);
    if (!h.value().allFinite()) {
      throw TrainingError("evolve: non-finite state at step " + std::to_string(t));
    }
    out.states.push_back(h);
    out.snapshots.push_back(readout(h, batch));
  }
  return out;
}

}  // namespace dypro
