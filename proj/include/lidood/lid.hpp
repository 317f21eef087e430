#pragma once

#include <Eigen/Core>

namespace lidood {

/// Which way a singular-value count maps to an LID estimate.
enum class LidKind {
  /// LID = #{sigma_i > tau}; non-increasing in tau (flow Jacobian).
  rank_count,
  /// LID = d - #{sigma_i > tau}; non-decreasing in tau (score matrix).
  corank_count,
};

struct LidEstimate {
  double lid = 0.0;
  /// Descending, non-negative.
  Eigen::VectorXd singular_values;
  double tau = 0.0;
};

/// Number of entries strictly greater than tau.
inline int count_above(const Eigen::VectorXd& values, double tau) {
  return static_cast<int>((values.array() > tau).count());
}

/// Threshold a cached spectrum. `ambient_dim` is only used for corank_count.
inline double lid_from_spectrum(const Eigen::VectorXd& singular_values, double tau, LidKind kind,
                                int ambient_dim) {
  const int above = count_above(singular_values, tau);
  return kind == LidKind::rank_count ? above : ambient_dim - above;
}

/// Singular values of `m`, sorted descending.
Eigen::VectorXd singular_values_desc(const Eigen::MatrixXd& m);

}  // namespace lidood
