#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace dypro {

/// Observed time (years) and event indicator for one endpoint.
struct SurvivalLabel {
  double time = 0.0;
  bool event = false;

  friend bool operator==(const SurvivalLabel&, const SurvivalLabel&) = default;
};

/// Discrete-time grid: K bins with K+1 strictly increasing edges from 0.
/// Bins are left-closed, [edges[k], edges[k+1]).
class TimeBins {
 public:
  /// K annual bins with edges 0, 1, ..., K.
  static TimeBins annual(std::size_t k);
  explicit TimeBins(std::vector<double> edges);

  std::size_t size() const noexcept { return edges_.size() - 1; }
  const std::vector<double>& edges() const noexcept { return edges_; }
  double edge(std::size_t i) const { return edges_.at(i); }
  double last_edge() const noexcept { return edges_.back(); }
  double midpoint(std::size_t k) const { return 0.5 * (edges_.at(k) + edges_.at(k + 1)); }

  /// Largest k with edges[k] <= time; times at or past the last edge clamp
  /// to K-1. Throws DomainError for negative or non-finite times.
  std::size_t bin_of(double time) const;

  friend bool operator==(const TimeBins&, const TimeBins&) = default;

 private:
  std::vector<double> edges_;
};

enum class Task { Dfs, Os };

inline const char* task_name(Task t) noexcept { return t == Task::Dfs ? "DFS" : "OS"; }

}  // namespace dypro
