#include "dypro/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "dypro/error.hpp"
#include "dypro/random.hpp"

namespace dypro {

namespace {

void check_sizes(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": " + std::to_string(a) + " predictions for " +
                     std::to_string(b) + " labels");
  }
}

// Counts over risk ranks, 1-based.
class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
  void add(std::size_t i) {
    for (; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
  }
  std::uint64_t prefix(std::size_t i) const {
    std::uint64_t s = 0;
    for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<std::uint64_t> tree_;
};

}  // namespace

double harrell_cindex(std::span<const double> risks, std::span<const SurvivalLabel> labels) {
  check_sizes(risks.size(), labels.size(), "harrell_cindex");
  const std::size_t n = labels.size();
  if (n < 2) throw DomainError("harrell_cindex: need at least two patients");
  for (double r : risks) {
    if (!std::isfinite(r)) throw DomainError("harrell_cindex: non-finite risk score");
  }

  std::vector<double> distinct(risks.begin(), risks.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  auto rank_of = [&](double r) {
    return static_cast<std::size_t>(std::lower_bound(distinct.begin(), distinct.end(), r) -
                                    distinct.begin()) + 1;
  };

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return labels[a].time > labels[b].time; });

  // Sweep from the latest time down; the tree holds strictly later patients.
  Fenwick tree(distinct.size());
  std::uint64_t inserted = 0;
  std::uint64_t comparable = 0;
  std::uint64_t twice_concordant = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && labels[order[j]].time == labels[order[i]].time) ++j;
    for (std::size_t g = i; g < j; ++g) {
      const std::size_t p = order[g];
      if (!labels[p].event) continue;
      const std::size_t rank = rank_of(risks[p]);
      const std::uint64_t below = tree.prefix(rank - 1);
      const std::uint64_t tied = tree.prefix(rank) - below;
      comparable += inserted;
      twice_concordant += 2 * below + tied;
    }
    for (std::size_t g = i; g < j; ++g) {
      tree.add(rank_of(risks[order[g]]));
      ++inserted;
    }
    i = j;
  }
  if (comparable == 0) throw DomainError("harrell_cindex: no comparable pairs");
  return static_cast<double>(twice_concordant) / (2.0 * static_cast<double>(comparable));
}

std::optional<double> time_dependent_auc(std::span<const double> scores,
                                         std::span<const SurvivalLabel> labels, double horizon) {
  check_sizes(scores.size(), labels.size(), "time_dependent_auc");
  if (!(horizon > 0.0)) throw DomainError("time_dependent_auc: horizon must be positive");

  std::vector<double> cases;
  std::vector<double> controls;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].time > horizon) {
      controls.push_back(scores[i]);
    } else if (labels[i].event) {
      cases.push_back(scores[i]);
    }
  }
  if (cases.empty() || controls.empty()) return std::nullopt;

  std::sort(controls.begin(), controls.end());
  double twice_wins = 0.0;
  for (double s : cases) {
    const auto lo = std::lower_bound(controls.begin(), controls.end(), s);
    const auto hi = std::upper_bound(lo, controls.end(), s);
    twice_wins += 2.0 * static_cast<double>(lo - controls.begin()) + static_cast<double>(hi - lo);
  }
  return twice_wins / (2.0 * static_cast<double>(cases.size()) *
                       static_cast<double>(controls.size()));
}

// ---------------------------------------------------------------------------

CensoringSurvival::CensoringSurvival(std::vector<double> jump_times, std::vector<double> values)
    : times_(std::move(jump_times)), values_(std::move(values)) {
  if (times_.size() != values_.size()) throw ShapeError("CensoringSurvival: size mismatch");
}

double CensoringSurvival::at(double t) const {
  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  return it == times_.begin() ? 1.0 : values_[static_cast<std::size_t>(it - times_.begin()) - 1];
}

double CensoringSurvival::before(double t) const {
  const auto it = std::lower_bound(times_.begin(), times_.end(), t);
  return it == times_.begin() ? 1.0 : values_[static_cast<std::size_t>(it - times_.begin()) - 1];
}

CensoringSurvival km_censoring_survival(std::span<const SurvivalLabel> labels) {
  if (labels.empty()) throw DomainError("km_censoring_survival: no patients");
  std::vector<SurvivalLabel> sorted(labels.begin(), labels.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const SurvivalLabel& a, const SurvivalLabel& b) { return a.time < b.time; });

  std::vector<double> times;
  std::vector<double> values;
  double g = 1.0;
  const std::size_t n = sorted.size();
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    std::size_t censored = 0;
    while (j < n && sorted[j].time == sorted[i].time) {
      censored += sorted[j].event ? 0 : 1;
      ++j;
    }
    if (censored > 0) {
      const double at_risk = static_cast<double>(n - i);
      g *= 1.0 - static_cast<double>(censored) / at_risk;
      times.push_back(sorted[i].time);
      values.push_back(g);
    }
    i = j;
  }
  return CensoringSurvival(std::move(times), std::move(values));
}

double brier_score(std::span<const SurvivalCurve> curves, std::span<const SurvivalLabel> labels,
                   const TimeBins& bins, const CensoringSurvival& censoring, double t,
                   double weight_cap, std::size_t* capped) {
  check_sizes(curves.size(), labels.size(), "brier_score");
  auto weight = [&](double g) {
    if (g <= 0.0 || 1.0 / g > weight_cap) {
      if (capped) ++*capped;
      return weight_cap;
    }
    return 1.0 / g;
  };
  const double g_t = censoring.at(t);
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double s = survival_at(curves[i], bins, t);
    if (labels[i].time <= t) {
      if (labels[i].event) total += s * s * weight(censoring.before(labels[i].time));
    } else {
      total += (1.0 - s) * (1.0 - s) * weight(g_t);
    }
  }
  return total / static_cast<double>(labels.size());
}

BrierResult integrated_brier(std::span<const SurvivalCurve> curves,
                             std::span<const SurvivalLabel> labels, const TimeBins& bins,
                             double tau, const BrierOptions& options) {
  check_sizes(curves.size(), labels.size(), "integrated_brier");
  if (labels.empty()) throw DomainError("integrated_brier: no patients");
  if (!(tau > 0.0) || tau > bins.last_edge()) {
    throw DomainError("integrated_brier: tau must lie in (0, last bin edge]");
  }
  if (options.grid_points < 2) throw DomainError("integrated_brier: grid needs two points");
  for (const auto& c : curves) {
    if (static_cast<std::size_t>(c.size()) != bins.size()) {
      throw ShapeError("integrated_brier: curve length does not match bins");
    }
  }

  const CensoringSurvival censoring = km_censoring_survival(labels);
  BrierResult result;
  const std::size_t m = options.grid_points;
  const double dt = tau / static_cast<double>(m - 1);
  double integral = 0.0;
  double previous = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double t = tau * static_cast<double>(j) / static_cast<double>(m - 1);
    const double bs =
        brier_score(curves, labels, bins, censoring, t, options.weight_cap, &result.capped_weights);
    if (j > 0) integral += 0.5 * (previous + bs) * dt;
    previous = bs;
  }
  result.ibs = integral / tau;
  return result;
}

std::optional<double> mae_uncensored(std::span<const double> predicted_times,
                                     std::span<const SurvivalLabel> labels) {
  check_sizes(predicted_times.size(), labels.size(), "mae_uncensored");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i].event) continue;
    total += std::abs(predicted_times[i] - labels[i].time);
    ++count;
  }
  if (count == 0) return std::nullopt;
  return total / static_cast<double>(count);
}

// ---------------------------------------------------------------------------

double sorted_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw DomainError("quantile of an empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

ConfidenceInterval bootstrap_ci(const ResampleMetric& metric, std::size_t patients,
                                std::size_t resamples, double level, std::uint64_t seed) {
  if (resamples < 100) throw DomainError("bootstrap_ci: need at least 100 resamples");
  if (!(level > 0.0 && level < 1.0)) throw DomainError("bootstrap_ci: level must be in (0, 1)");
  if (patients == 0) throw DomainError("bootstrap_ci: no patients");

  std::vector<double> values;
  values.reserve(resamples);
  std::vector<std::size_t> sample(patients);
  ConfidenceInterval ci;
  for (std::size_t r = 0; r < resamples; ++r) {
    std::mt19937_64 rng(derive_seed(seed, {r}));
    std::uniform_int_distribution<std::size_t> pick(0, patients - 1);
    for (auto& s : sample) s = pick(rng);
    if (auto v = metric(sample); v && std::isfinite(*v)) {
      values.push_back(*v);
    } else {
      ++ci.discarded;
    }
  }
  if (2 * ci.discarded > resamples) {
    throw DomainError("bootstrap_ci: metric undefined on " + std::to_string(ci.discarded) +
                      " of " + std::to_string(resamples) + " resamples");
  }
  std::sort(values.begin(), values.end());
  const double tail = (1.0 - level) / 2.0;
  ci.lo = sorted_quantile(values, tail);
  ci.hi = sorted_quantile(values, 1.0 - tail);
  ci.used = values.size();
  return ci;
}

std::string format_ci(const std::string& label, double estimate, const ConfidenceInterval& ci,
                      double level) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s of %.3f with a %.0f%% CI of [%.3f, %.3f]", label.c_str(),
                estimate, 100.0 * level, ci.lo, ci.hi);
  return buf;
}

}  // namespace dypro
