#include "dypro/trajectory.hpp"

#include <optional>
#include <string>

#include "dypro/error.hpp"
#include "dypro/graph.hpp"

namespace dypro {

LstmParams make_lstm_params(ad::ParameterSet& params, Eigen::Index input, Eigen::Index hidden,
                            std::mt19937_64& rng) {
  if (input < 1 || hidden < 1) throw ConfigError("LSTM widths must be positive");
  LstmParams lstm;
  lstm.input = input;
  lstm.hidden = hidden;
  const Eigen::Index fan_in = input + hidden;
  lstm.weight = params.add("lstm.weight", uniform_init(fan_in, 4 * hidden, fan_in, rng));
  lstm.bias = params.add("lstm.bias", uniform_init(1, 4 * hidden, fan_in, rng));
  return lstm;
}

LstmState lstm_step(ad::Var z, ad::Var h, ad::Var c, const LstmParams& lstm) {
  if (z.cols() != lstm.input || h.cols() != lstm.hidden || c.cols() != lstm.hidden ||
      h.rows() != z.rows() || c.rows() != z.rows()) {
    throw ShapeError("lstm_step: widths z=" + std::to_string(z.cols()) +
                     " h=" + std::to_string(h.cols()) + " c=" + std::to_string(c.cols()) +
                     ", expected input " + std::to_string(lstm.input) + " hidden " +
                     std::to_string(lstm.hidden));
  }
  ad::Tape& tape = *z.tape();
  const Eigen::Index n = lstm.hidden;
  const ad::Var gates = ad::add(ad::matmul(ad::concat_cols(z, h), tape.param(lstm.weight)),
                                tape.param(lstm.bias));
  const ad::Var i = ad::sigmoid(ad::slice_cols(gates, 0, n));
  const ad::Var f = ad::sigmoid(ad::slice_cols(gates, n, n));
  const ad::Var o = ad::sigmoid(ad::slice_cols(gates, 2 * n, n));
  const ad::Var g = ad::tanh(ad::slice_cols(gates, 3 * n, n));
  const ad::Var c_next = ad::add(ad::mul(f, c), ad::mul(i, g));
  const ad::Var h_next = ad::mul(o, ad::tanh(c_next));
  return {h_next, c_next};
}

ad::Var integrate(const std::vector<ad::Var>& snapshots, const LstmParams& lstm) {
  if (snapshots.empty()) throw DomainError("integrate: empty snapshot sequence");
  ad::Tape& tape = *snapshots.front().tape();
  const Eigen::Index rows = snapshots.front().rows();
  ad::Var h = tape.constant(ad::Matrix::Zero(rows, lstm.hidden));
  ad::Var c = tape.constant(ad::Matrix::Zero(rows, lstm.hidden));
  std::optional<ad::Var> total;
  for (const ad::Var& z : snapshots) {
    auto next = lstm_step(z, h, c, lstm);
    h = next.h;
    c = next.c;
    total = total ? ad::add(*total, h) : h;
  }
  return ad::scale(*total, 1.0 / static_cast<double>(snapshots.size()));
}

ad::Var integrate_mean(const std::vector<ad::Var>& snapshots) {
  if (snapshots.empty()) throw DomainError("integrate: empty snapshot sequence");
  ad::Var total = snapshots.front();
  for (std::size_t t = 1; t < snapshots.size(); ++t) total = ad::add(total, snapshots[t]);
  return ad::scale(total, 1.0 / static_cast<double>(snapshots.size()));
}

}  // namespace dypro
