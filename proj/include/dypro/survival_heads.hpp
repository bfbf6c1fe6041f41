#pragma once

// Discrete-time survival heads. The DFS branch projects the trajectory
// summary h* to a context vector; the OS head reads [h* ; context]
// (cascade) or [h* ; 0] (decoupled).

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "dypro/autodiff.hpp"
#include "dypro/types.hpp"

namespace dypro {

/// Per-bin conditional event probabilities h_k in (0, 1).
using HazardCurve = Eigen::VectorXd;
/// S(k): probability of surviving beyond bin k.
using SurvivalCurve = Eigen::VectorXd;

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> hazards_from_logits(
    const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> h(logits.size());
  for (Eigen::Index k = 0; k < logits.size(); ++k) {
    const Scalar x = logits(k);
    if (x >= Scalar(0)) {
      h(k) = Scalar(1) / (Scalar(1) + std::exp(-x));
    } else {
      const Scalar e = std::exp(x);
      h(k) = e / (Scalar(1) + e);
    }
  }
  return h;
}

/// S(k) = prod_{j <= k} (1 - h_j).
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> survival_from_hazards(
    const Eigen::MatrixBase<Derived>& hazards) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> s(hazards.size());
  Scalar running(1);
  for (Eigen::Index k = 0; k < hazards.size(); ++k) {
    running *= Scalar(1) - hazards(k);
    s(k) = running;
  }
  return s;
}

/// Expected event time: bin midpoints weighted by the event mass in each
/// bin, with the mass surviving the last bin placed at the final edge.
template <typename Derived>
typename Derived::Scalar point_estimate_time(const Eigen::MatrixBase<Derived>& survival,
                                             const TimeBins& bins) {
  using Scalar = typename Derived::Scalar;
  Scalar previous(1);
  Scalar expected(0);
  for (Eigen::Index k = 0; k < survival.size(); ++k) {
    expected += (previous - survival(k)) * Scalar(bins.midpoint(static_cast<std::size_t>(k)));
    previous = survival(k);
  }
  return expected + previous * Scalar(bins.last_edge());
}

/// Step interpolation: the survival value of the bin containing `t`.
inline double survival_at(const SurvivalCurve& survival, const TimeBins& bins, double t) {
  return survival(static_cast<Eigen::Index>(bins.bin_of(t)));
}

struct HeadParams {
  Eigen::Index input = 0;    // width of h*
  Eigen::Index context = 0;  // d_c
  Eigen::Index bins = 0;     // K
  ad::ParamId w_context = 0, b_context = 0;
  ad::ParamId w_dfs = 0, b_dfs = 0;
  ad::ParamId w_os = 0, b_os = 0;  // (input + context) x K
};

HeadParams make_head_params(ad::ParameterSet& params, Eigen::Index input, Eigen::Index context,
                            Eigen::Index bins, std::mt19937_64& rng);

struct DfsHeadOutput {
  ad::Var logits;   // B x K
  ad::Var context;  // B x d_c, tanh-bounded
};

DfsHeadOutput dfs_head(ad::Var h_star, const HeadParams& heads);

/// With `cascade` off the context columns see a zero vector, so OS logits
/// depend on h* alone.
ad::Var os_head(ad::Var h_star, ad::Var dfs_context, const HeadParams& heads, bool cascade);

}  // namespace dypro
