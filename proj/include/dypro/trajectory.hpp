#pragma once

#include <random>
#include <vector>

#include "dypro/autodiff.hpp"

namespace dypro {

/// Single-layer LSTM. The four gates are packed column-wise in the order
/// input, forget, output, candidate:
///   weight: (input + hidden) x 4*hidden, applied to [z ; h]
///   bias:   1 x 4*hidden
struct LstmParams {
  Eigen::Index input = 0;
  Eigen::Index hidden = 0;
  ad::ParamId weight = 0;
  ad::ParamId bias = 0;
};

LstmParams make_lstm_params(ad::ParameterSet& params, Eigen::Index input, Eigen::Index hidden,
                            std::mt19937_64& rng);

struct LstmState {
  ad::Var h;
  ad::Var c;
};

/// One cell update on a batch (rows are independent sequences).
LstmState lstm_step(ad::Var z, ad::Var h, ad::Var c, const LstmParams& lstm);

/// Runs the LSTM from a zero state over the snapshots and returns the mean
/// of all hidden states h_1..h_T (B x hidden).
ad::Var integrate(const std::vector<ad::Var>& snapshots, const LstmParams& lstm);

/// Integrator-free summary: elementwise mean of the raw snapshots.
ad::Var integrate_mean(const std::vector<ad::Var>& snapshots);

}  // namespace dypro
