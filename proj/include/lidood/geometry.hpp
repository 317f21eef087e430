#pragma once

#include "lidood/synthdata.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

namespace lidood {

/// Log of a diagonal-covariance Gaussian density.
double diag_gaussian_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                                 const Eigen::VectorXd& var);

double mixture_log_density(const MixtureSpec& spec, const Eigen::Vector3d& x);
double mixture_density(const MixtureSpec& spec, const Eigen::Vector3d& x);

/// p(mu_out) / p(mu_in), evaluated from the full mixture.
double mixture_density_ratio(const MixtureSpec& spec);

/// (vol(mu_in), vol(mu_out)) with vol(mu_i) = w_i / p(mu_i).
std::pair<double, double> mixture_volume_ratio(const MixtureSpec& spec);

/// delta * sigma / (1 - delta): the eps at which the two component peaks have
/// equal height, ignoring cross-component tails.
double closed_form_crossover_eps(double delta, double sigma);

/// Root in eps of mixture_density_ratio = 1, with the rest of `spec` held fixed.
double exact_crossover_eps(const MixtureSpec& spec);

using LogDensityFn = std::function<double(const Eigen::VectorXd&)>;

struct BallMassEstimate {
  double r = 0.0;
  double radius = 0.0;
  double mass = 0.0;
  double log_mass = 0.0;
  double std_err = 0.0;
  long n_samples = 0;
  /// Every sampled density underflowed to zero; the relative error is unbounded.
  bool zero_density = false;
};

/// Monte Carlo mass of the ball of radius e^r * sqrt(d) around x: ball volume
/// times the mean density at uniform draws from the ball. A fixed seed reuses
/// the same unit-ball draws for every r.
BallMassEstimate ball_mass(const LogDensityFn& log_density, const Eigen::VectorXd& x, double r,
                           long n_samples, std::uint64_t seed);

struct SlopeEstimate {
  /// Mean of the pointwise slopes.
  double slope = 0.0;
  /// d log vol(B_{e^r sqrt(d)}) / dr equals d, so no correction applies.
  double implied_lid = 0.0;
  std::vector<double> r_grid;
  std::vector<BallMassEstimate> masses;
  /// d log mass / dr at each grid point (central inside, one-sided at the ends).
  std::vector<double> pointwise;
  /// Mass decreased by more than 3 standard errors somewhere along the grid.
  bool unreliable = false;
};

SlopeEstimate mass_lid_slope(const LogDensityFn& log_density, const Eigen::VectorXd& x,
                             const std::vector<double>& r_grid, long n_samples, std::uint64_t seed);

/// log N(x; mean, cov + e^{2r} I).
double gaussian_convolution_log_density(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                                        const Eigen::VectorXd& x, double r);

/// Finite-difference slopes of log rho_r(x) over r_grid, same layout as
/// mass_lid_slope. For small r the slope approaches LID - d.
SlopeEstimate convolution_slope(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                                const Eigen::VectorXd& x, const std::vector<double>& r_grid);

/// Slopes from values on a strictly increasing grid.
std::vector<double> finite_difference_slopes(const std::vector<double>& r, const std::vector<double>& f);

}  // namespace lidood
