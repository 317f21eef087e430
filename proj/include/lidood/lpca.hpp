#pragma once

#include "lidood/synthdata.hpp"

#include <cstdint>
#include <optional>

namespace lidood {

/// Local PCA with the Fukunaga-Olsen eigenvalue-ratio rule.
struct LpcaConfig {
  double alpha_fo = 0.001;
  /// Neighbourhood size; unset means min(100, N/10) with a floor of 10.
  std::optional<int> k_nn;

  int resolved_k(Eigen::Index n_points) const;
};

struct LpcaPoint {
  int lid = 0;
  /// Set when the neighbourhood covariance is identically zero.
  bool degenerate = false;
};

struct LpcaSummary {
  double mean_lid = 0.0;
  int n_evaluated = 0;
  int n_degenerate = 0;
};

LpcaPoint lpca_lid_point(const DataMatrix& data, Eigen::Index query, const LpcaConfig& cfg);

/// Mean LPCA estimate over all points, or over a uniform subsample (without
/// replacement) when `subsample` is set and smaller than N.
LpcaSummary lpca_lid_mean(const DataMatrix& data, const LpcaConfig& cfg,
                          std::optional<int> subsample, std::uint64_t seed);

}  // namespace lidood
