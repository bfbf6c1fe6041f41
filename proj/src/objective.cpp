#include "dypro/objective.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dypro/error.hpp"

namespace dypro {

void validate(const LossWeights& w) {
  if (!(w.alpha >= 0.0) || !(w.beta >= 0.0)) throw ConfigError("loss weights must be >= 0");
  if (w.alpha == 0.0 && w.beta == 0.0) throw ConfigError("loss weights cannot both be zero");
}

double discrete_nll(const HazardCurve& hazards, const SurvivalLabel& label, const TimeBins& bins) {
  if (static_cast<std::size_t>(hazards.size()) != bins.size()) {
    throw ShapeError("discrete_nll: " + std::to_string(hazards.size()) + " hazards for " +
                     std::to_string(bins.size()) + " bins");
  }
  const std::size_t k = label_to_bin(label.time, bins);
  auto clamped = [&](std::size_t j) {
    return std::clamp(hazards(static_cast<Eigen::Index>(j)), kHazardFloor, 1.0 - kHazardFloor);
  };
  double loss = 0.0;
  for (std::size_t j = 0; j < k; ++j) loss -= std::log(1.0 - clamped(j));
  loss -= label.event ? std::log(clamped(k)) : std::log(1.0 - clamped(k));
  return loss;
}

NllTargets make_nll_targets(std::span<const SurvivalLabel> labels, const TimeBins& bins) {
  const auto n = static_cast<Eigen::Index>(labels.size());
  const auto k_bins = static_cast<Eigen::Index>(bins.size());
  NllTargets t{ad::Matrix::Zero(n, k_bins), ad::Matrix::Zero(n, k_bins)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(label_to_bin(labels[i].time, bins));
    t.survive.row(i).head(k).setOnes();
    if (labels[i].event) {
      t.event(i, k) = 1.0;
    } else {
      t.survive(i, k) = 1.0;
    }
  }
  return t;
}

ad::Var batch_nll(ad::Var logits, const NllTargets& targets) {
  if (logits.rows() != targets.event.rows() || logits.cols() != targets.event.cols()) {
    throw ShapeError("batch_nll: logits " + std::to_string(logits.rows()) + "x" +
                     std::to_string(logits.cols()) + " vs targets " +
                     std::to_string(targets.event.rows()) + "x" +
                     std::to_string(targets.event.cols()));
  }
  ad::Tape& tape = *logits.tape();
  const ad::Var h = ad::clamp(ad::sigmoid(logits), kHazardFloor, 1.0 - kHazardFloor);
  const ad::Var one_minus =
      ad::sub(tape.constant(ad::Matrix::Ones(logits.rows(), logits.cols())), h);
  const ad::Var event_term = ad::sum_all(ad::mul(tape.constant(targets.event), ad::log(h)));
  const ad::Var survive_term =
      ad::sum_all(ad::mul(tape.constant(targets.survive), ad::log(one_minus)));
  return ad::scale(ad::add(event_term, survive_term),
                   -1.0 / static_cast<double>(std::max<Eigen::Index>(logits.rows(), 1)));
}

ad::Var combined_loss(ad::Var os_nll, ad::Var dfs_nll, const LossWeights& w) {
  return ad::add(ad::scale(os_nll, w.alpha), ad::scale(dfs_nll, w.beta));
}

// ---------------------------------------------------------------------------

OptimizerState make_optimizer_state(const ad::ParameterSet& params, double lr) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  OptimizerState state;
  state.lr = lr;
  for (const auto& v : params.values()) {
    state.first_moment.push_back(ad::Matrix::Zero(v.rows(), v.cols()));
    state.second_moment.push_back(ad::Matrix::Zero(v.rows(), v.cols()));
  }
  return state;
}

void adamw_step(ad::ParameterSet& params, const ad::Gradients& grads, OptimizerState& state,
                const AdamWConfig& config) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size()) {
    throw ShapeError("adamw_step: parameter, gradient and moment counts differ");
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!grads[p].allFinite()) {
      throw DomainError("adamw_step: non-finite gradient for '" + params.name(p) + "'");
    }
    if (grads[p].rows() != params.value(p).rows() || grads[p].cols() != params.value(p).cols()) {
      throw ShapeError("adamw_step: gradient shape mismatch for '" + params.name(p) + "'");
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  const double lr = state.lr;

  for (std::size_t p = 0; p < params.size(); ++p) {
    ad::Matrix& w = params.value(p);
    ad::Matrix& m = state.first_moment[p];
    ad::Matrix& v = state.second_moment[p];
    const ad::Matrix& g = grads[p];

    w *= 1.0 - lr * config.weight_decay;
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseProduct(g);
    const auto m_hat = m.array() / correction1;
    const auto v_hat = v.array() / correction2;
    w.array() -= lr * m_hat / (v_hat.sqrt() + config.eps);
  }
}

void plateau_schedule(OptimizerState& state, double val_loss, double factor,
                      std::size_t patience) {
  PlateauState& s = state.plateau;
  if (val_loss < s.best - kImprovementTolerance) {
    s.best = val_loss;
    s.counter = 0;
    return;
  }
  if (++s.counter > patience) {
    state.lr *= factor;
    s.counter = 0;
  }
}

StopDecision early_stop(OptimizerState& state, double val_loss, std::size_t patience) {
  EarlyStopState& s = state.early;
  ++s.evaluations;
  s.improved = val_loss < s.best - kImprovementTolerance;
  if (s.improved) {
    s.best = val_loss;
    s.counter = 0;
    s.best_evaluation = s.evaluations;
    return StopDecision::Continue;
  }
  return ++s.counter >= patience ? StopDecision::Stop : StopDecision::Continue;
}

}  // namespace dypro
