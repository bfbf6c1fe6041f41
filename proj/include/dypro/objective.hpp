#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "dypro/autodiff.hpp"
#include "dypro/survival_heads.hpp"
#include "dypro/types.hpp"

namespace dypro {

/// Hazards are clamped into [kHazardFloor, 1 - kHazardFloor] before logs.
inline constexpr double kHazardFloor = 1e-12;
/// A validation loss must beat the best by more than this to count.
inline constexpr double kImprovementTolerance = 1e-8;

struct LossWeights {
  double alpha = 1.0;  // OS
  double beta = 1.0;   // DFS

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

void validate(const LossWeights& w);

inline std::size_t label_to_bin(double time, const TimeBins& bins) { return bins.bin_of(time); }

/// Discrete-time negative log-likelihood of one label. With k the label's bin:
///   event:    -[ln h_k + sum_{j<k} ln(1 - h_j)]
///   censored: -sum_{j<=k} ln(1 - h_j)
double discrete_nll(const HazardCurve& hazards, const SurvivalLabel& label, const TimeBins& bins);

/// B x K indicator matrices selecting the ln h and ln(1 - h) terms.
struct NllTargets {
  ad::Matrix event;
  ad::Matrix survive;
};

NllTargets make_nll_targets(std::span<const SurvivalLabel> labels, const TimeBins& bins);

/// Mean discrete NLL over the batch, from B x K hazard logits.
ad::Var batch_nll(ad::Var logits, const NllTargets& targets);

inline double combined_loss(double os_nll, double dfs_nll, const LossWeights& w) {
  return w.alpha * os_nll + w.beta * dfs_nll;
}
ad::Var combined_loss(ad::Var os_nll, ad::Var dfs_nll, const LossWeights& w);

// ---------------------------------------------------------------------------
// Optimization

struct AdamWConfig {
  double lr = 5e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  friend bool operator==(const AdamWConfig&, const AdamWConfig&) = default;
};

struct PlateauState {
  double best = std::numeric_limits<double>::infinity();
  std::size_t counter = 0;
};

struct EarlyStopState {
  double best = std::numeric_limits<double>::infinity();
  std::size_t counter = 0;
  std::size_t evaluations = 0;
  std::size_t best_evaluation = 0;  // 1-based; 0 until the first evaluation
  bool improved = false;            // whether the latest evaluation set a new best
};

struct OptimizerState {
  std::vector<ad::Matrix> first_moment;
  std::vector<ad::Matrix> second_moment;
  std::size_t step = 0;
  double lr = 0.0;
  PlateauState plateau;
  EarlyStopState early;
};

OptimizerState make_optimizer_state(const ad::ParameterSet& params, double lr);

/// Decoupled weight decay, then a bias-corrected Adam update at state.lr.
/// Throws DomainError naming the parameter if a gradient is non-finite.
void adamw_step(ad::ParameterSet& params, const ad::Gradients& grads, OptimizerState& state,
                const AdamWConfig& config);

/// Reduce-on-plateau: after more than `patience` evaluations without
/// improvement the learning rate is multiplied by `factor`.
void plateau_schedule(OptimizerState& state, double val_loss, double factor,
                      std::size_t patience);

enum class StopDecision { Continue, Stop };

/// Stops once `patience` consecutive evaluations fail to improve.
StopDecision early_stop(OptimizerState& state, double val_loss, std::size_t patience);

}  // namespace dypro
