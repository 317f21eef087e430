#include "lidood/geometry.hpp"

#include "lidood/errors.hpp"
#include "lidood/rng.hpp"

#include <Eigen/Cholesky>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace lidood {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

/// log of the volume of the unit ball in R^d.
double log_unit_ball_volume(int d) {
  const double h = 0.5 * d;
  return h * std::log(std::numbers::pi) - std::lgamma(h + 1.0);
}

}  // namespace

double diag_gaussian_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                                 const Eigen::VectorXd& var) {
  const auto diff = (x - mean).array();
  return -0.5 * ((diff * diff / var.array()).sum() + var.array().log().sum() +
                 static_cast<double>(x.size()) * kLog2Pi);
}

double mixture_log_density(const MixtureSpec& spec, const Eigen::Vector3d& x) {
  spec.validate();
  return log_add_exp(std::log(spec.w_in()) + diag_gaussian_log_density(x, spec.mu_in, spec.var_in()),
                     std::log(spec.w_out()) + diag_gaussian_log_density(x, spec.mu_out, spec.var_out()));
}

double mixture_density(const MixtureSpec& spec, const Eigen::Vector3d& x) {
  return std::exp(mixture_log_density(spec, x));
}

double mixture_density_ratio(const MixtureSpec& spec) {
  return std::exp(mixture_log_density(spec, spec.mu_out) - mixture_log_density(spec, spec.mu_in));
}

std::pair<double, double> mixture_volume_ratio(const MixtureSpec& spec) {
  return {std::exp(std::log(spec.w_in()) - mixture_log_density(spec, spec.mu_in)),
          std::exp(std::log(spec.w_out()) - mixture_log_density(spec, spec.mu_out))};
}

double closed_form_crossover_eps(double delta, double sigma) { return delta * sigma / (1.0 - delta); }

double exact_crossover_eps(const MixtureSpec& spec) {
  spec.validate();
  auto log_ratio = [&](double eps) {
    MixtureSpec s = spec;
    s.eps = eps;
    return mixture_log_density(s, s.mu_out) - mixture_log_density(s, s.mu_in);
  };
  // The log-ratio falls with eps; bracket around the closed form.
  const double guess = closed_form_crossover_eps(spec.delta, spec.sigma);
  double lo = guess / 4.0, hi = std::min(guess * 4.0, spec.sigma);
  if (!(log_ratio(lo) > 0.0 && log_ratio(hi) < 0.0))
    throw NumericError("crossover: ratio does not change sign around the closed form");
  boost::math::tools::eps_tolerance<double> tol(50);
  std::uintmax_t iters = 200;
  const auto [a, b] = boost::math::tools::toms748_solve(log_ratio, lo, hi, tol, iters);
  return 0.5 * (a + b);
}

BallMassEstimate ball_mass(const LogDensityFn& log_density, const Eigen::VectorXd& x, double r,
                           long n_samples, std::uint64_t seed) {
  if (n_samples < 100) throw InvalidArgument("ball_mass: n_samples must be >= 100");
  const int d = static_cast<int>(x.size());
  if (d < 1) throw InvalidArgument("ball_mass: empty point");
  BallMassEstimate out;
  out.r = r;
  out.radius = std::exp(r) * std::sqrt(static_cast<double>(d));
  out.n_samples = n_samples;

  Rng rng(seed);
  std::vector<double> logp(static_cast<std::size_t>(n_samples));
  Eigen::VectorXd dir(d);
  for (long i = 0; i < n_samples; ++i) {
    for (int k = 0; k < d; ++k) dir(k) = rng.normal();
    const double rad = out.radius * std::pow(rng.uniform(), 1.0 / d);
    logp[static_cast<std::size_t>(i)] = log_density(x + dir * (rad / dir.norm()));
  }
  const double log_vol = log_unit_ball_volume(d) + d * std::log(out.radius);
  const double m = *std::max_element(logp.begin(), logp.end());
  if (m == -std::numeric_limits<double>::infinity()) {
    out.zero_density = true;
    out.log_mass = m;
    return out;
  }
  double sum = 0.0, sum_sq = 0.0;
  for (double lp : logp) {
    const double w = std::exp(lp - m);
    sum += w;
    sum_sq += w * w;
  }
  const double n = static_cast<double>(n_samples);
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
  out.log_mass = log_vol + m + std::log(mean);
  out.mass = std::exp(out.log_mass);
  out.std_err = std::exp(log_vol + m) * std::sqrt(var / n);
  return out;
}

std::vector<double> finite_difference_slopes(const std::vector<double>& r, const std::vector<double>& f) {
  const std::size_t n = r.size();
  if (n < 2 || f.size() != n) throw InvalidArgument("slope: need matching grids of length >= 2");
  for (std::size_t i = 1; i < n; ++i)
    if (!(r[i] > r[i - 1])) throw InvalidArgument("slope: r_grid must be strictly increasing");
  std::vector<double> s(n);
  s[0] = (f[1] - f[0]) / (r[1] - r[0]);
  s[n - 1] = (f[n - 1] - f[n - 2]) / (r[n - 1] - r[n - 2]);
  for (std::size_t i = 1; i + 1 < n; ++i) s[i] = (f[i + 1] - f[i - 1]) / (r[i + 1] - r[i - 1]);
  return s;
}

namespace {

double mean_of(const std::vector<double>& v) {
  double t = 0.0;
  for (double x : v) t += x;
  return t / static_cast<double>(v.size());
}

}  // namespace

SlopeEstimate mass_lid_slope(const LogDensityFn& log_density, const Eigen::VectorXd& x,
                             const std::vector<double>& r_grid, long n_samples, std::uint64_t seed) {
  SlopeEstimate out;
  out.r_grid = r_grid;
  std::vector<double> logm;
  for (double r : r_grid) {
    out.masses.push_back(ball_mass(log_density, x, r, n_samples, seed));
    logm.push_back(out.masses.back().log_mass);
    if (out.masses.back().zero_density) out.unreliable = true;
  }
  for (std::size_t i = 1; i < out.masses.size(); ++i) {
    const auto& a = out.masses[i - 1];
    const auto& b = out.masses[i];
    if (b.mass < a.mass - 3.0 * std::hypot(a.std_err, b.std_err)) out.unreliable = true;
  }
  out.pointwise = finite_difference_slopes(r_grid, logm);
  out.slope = mean_of(out.pointwise);
  out.implied_lid = out.slope;
  return out;
}

double gaussian_convolution_log_density(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                                        const Eigen::VectorXd& x, double r) {
  const auto d = mean.size();
  if (cov.rows() != d || cov.cols() != d || x.size() != d)
    throw InvalidArgument("convolution: dimension mismatch");
  const Eigen::MatrixXd c = cov + std::exp(2.0 * r) * Eigen::MatrixXd::Identity(d, d);
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() != Eigen::Success) throw NumericError("convolution: covariance not positive definite");
  const Eigen::VectorXd diff = x - mean;
  const Eigen::VectorXd w = llt.matrixL().solve(diff);
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (w.squaredNorm() + log_det + static_cast<double>(d) * kLog2Pi);
}

SlopeEstimate convolution_slope(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                                const Eigen::VectorXd& x, const std::vector<double>& r_grid) {
  SlopeEstimate out;
  out.r_grid = r_grid;
  std::vector<double> f;
  for (double r : r_grid) f.push_back(gaussian_convolution_log_density(mean, cov, x, r));
  out.pointwise = finite_difference_slopes(r_grid, f);
  out.slope = mean_of(out.pointwise);
  out.implied_lid = out.slope + static_cast<double>(mean.size());
  return out;
}

}  // namespace lidood
