#include "dypro/types.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dypro/error.hpp"

namespace dypro {

TimeBins TimeBins::annual(std::size_t k) {
  std::vector<double> edges(k + 1);
  for (std::size_t i = 0; i <= k; ++i) edges[i] = static_cast<double>(i);
  return TimeBins(std::move(edges));
}

TimeBins::TimeBins(std::vector<double> edges) : edges_(std::move(edges)) {
  if (edges_.size() < 2) throw ConfigError("time bins need at least two edges");
  if (edges_.front() != 0.0) throw ConfigError("time bins must start at 0");
  for (std::size_t i = 1; i < edges_.size(); ++i) {
    if (!(edges_[i] > edges_[i - 1]) || !std::isfinite(edges_[i])) {
      throw ConfigError("time bin edges must be finite and strictly increasing");
    }
  }
}

std::size_t TimeBins::bin_of(double time) const {
  if (!(time >= 0.0) || !std::isfinite(time)) {
    throw DomainError("label_to_bin: invalid time " + std::to_string(time));
  }
  const auto it = std::upper_bound(edges_.begin(), edges_.end(), time);
  const auto k = static_cast<std::size_t>(std::distance(edges_.begin(), it)) - 1;
  return std::min(k, size() - 1);
}

}  // namespace dypro
