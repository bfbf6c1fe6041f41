#pragma once

// Censored-survival evaluation metrics. Undefined values are std::nullopt,
// never zero.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dypro/survival_heads.hpp"
#include "dypro/types.hpp"

namespace dypro {

/// Harrell's C-index. A pair is comparable when the shorter time is an
/// observed event and the times differ; tied risks count one half. Throws
/// DomainError when no pair is comparable.
double harrell_cindex(std::span<const double> risks, std::span<const SurvivalLabel> labels);

/// ROC AUC for "event by `horizon`": cases have an event at time <= horizon,
/// controls have time > horizon, censored-by-horizon patients are dropped.
/// Scores are P(event <= horizon); ties count one half. nullopt when either
/// group is empty.
std::optional<double> time_dependent_auc(std::span<const double> scores,
                                         std::span<const SurvivalLabel> labels, double horizon);

/// Kaplan-Meier estimate of the censoring survival G(t), treating censoring
/// as the event of interest. Right-continuous step function with G(0) = 1.
class CensoringSurvival {
 public:
  CensoringSurvival() = default;
  CensoringSurvival(std::vector<double> jump_times, std::vector<double> values);

  /// G(t).
  double at(double t) const;
  /// G(t-), the left limit.
  double before(double t) const;

  const std::vector<double>& jump_times() const noexcept { return times_; }
  const std::vector<double>& values() const noexcept { return values_; }

 private:
  std::vector<double> times_;
  std::vector<double> values_;
};

CensoringSurvival km_censoring_survival(std::span<const SurvivalLabel> labels);

struct BrierOptions {
  double weight_cap = 100.0;   // ceiling on 1/G
  std::size_t grid_points = 100;
};

struct BrierResult {
  double ibs = 0.0;
  std::size_t capped_weights = 0;  // terms where 1/G hit the cap
};

/// IPCW Brier score at a single time t.
double brier_score(std::span<const SurvivalCurve> curves, std::span<const SurvivalLabel> labels,
                   const TimeBins& bins, const CensoringSurvival& censoring, double t,
                   double weight_cap, std::size_t* capped = nullptr);

/// (1/tau) * trapezoid integral of the IPCW Brier score over a uniform grid
/// on [0, tau]. Requires 0 < tau <= last bin edge.
BrierResult integrated_brier(std::span<const SurvivalCurve> curves,
                             std::span<const SurvivalLabel> labels, const TimeBins& bins,
                             double tau, const BrierOptions& options = {});

/// Mean |pred - time| over observed events; nullopt if there are none.
std::optional<double> mae_uncensored(std::span<const double> predicted_times,
                                     std::span<const SurvivalLabel> labels);

struct ConfidenceInterval {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t used = 0;
  std::size_t discarded = 0;  // resamples where the metric was undefined
};

/// Metric over a resample, given as patient indices (with repetition).
using ResampleMetric = std::function<std::optional<double>(std::span<const std::size_t>)>;

/// Percentile bootstrap over patients. Resample r draws from a generator
/// seeded by derive_seed(seed, {r}). Throws DomainError if more than half of
/// the resamples are undefined or resamples < 100.
ConfidenceInterval bootstrap_ci(const ResampleMetric& metric, std::size_t patients,
                                std::size_t resamples, double level, std::uint64_t seed);

/// e.g. "OS C-index of 0.755 with a 95% CI of [0.711, 0.796]".
std::string format_ci(const std::string& label, double estimate, const ConfidenceInterval& ci,
                      double level);

/// Linear-interpolated quantile of sorted values (q in [0, 1]).
double sorted_quantile(std::span<const double> sorted, double q);

}  // namespace dypro
