#pragma once

#include "lidood/lid.hpp"
#include "lidood/mlp.hpp"
#include "lidood/optim.hpp"
#include "lidood/synthdata.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace lidood {

struct FlowArch {
  int d = 2;
  int n_blocks = 6;
  int hidden_width = 64;

  bool operator==(const FlowArch&) const = default;
};

/// Bound on each coupling log-scale: s = kLogScaleBound * tanh(raw / kLogScaleBound).
inline constexpr double kLogScaleBound = 5.0;

/// Affine-coupling normalizing flow f: latent -> data with a standard normal
/// latent. Block k transforms the coordinates with index parity k % 2,
/// conditioned on the others:
///
///   y_B = z_B * exp(s(z_A)) + t(z_A),   y_A = z_A,
///
/// where (raw s, t) come from a two-hidden-layer tanh perceptron. The output
/// layers start at zero, so a fresh model is the identity map.
class FlowModel {
 public:
  explicit FlowModel(FlowArch arch, std::uint64_t init_seed = 0);

  const FlowArch& arch() const { return arch_; }
  int dim() const { return arch_.d; }
  std::size_t num_params() const { return params_.size(); }
  std::span<const double> params() const { return params_; }
  std::span<double> params() { return params_; }
  std::vector<double>& param_vector() { return params_; }

  struct Block {
    std::vector<int> cond;   // conditioning coordinates
    std::vector<int> trans;  // transformed coordinates
    Mlp net;
    std::size_t offset = 0;
  };
  const std::vector<Block>& blocks() const { return blocks_; }

  /// Fixed affine data normalisation around the coupling stack:
  /// x = scale * g(z) + shift, with g the composed couplings. Defaults to identity.
  const Eigen::VectorXd& data_shift() const { return shift_; }
  double data_scale() const { return scale_; }
  void set_normalization(Eigen::VectorXd shift, double scale);
  /// Shift = per-coordinate mean, scale = RMS per-coordinate standard deviation.
  void fit_normalization(const Eigen::MatrixXd& x_rows);

  /// x = f(z). Throws NumericError naming the block on overflow.
  Eigen::VectorXd forward(const Eigen::VectorXd& z) const;
  /// z = f^{-1}(x), exact.
  Eigen::VectorXd inverse(const Eigen::VectorXd& x) const;
  /// log p(x) = log N(z; 0, I) - log|det J(z)|.
  double log_prob(const Eigen::VectorXd& x) const;
  /// Sum of per-block log-scales along the forward pass from z (= log|det J(z)|).
  double log_abs_det_jacobian(const Eigen::VectorXd& z) const;
  /// Dense d x d Jacobian of f at z, product of per-block Jacobians.
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& z) const;

  /// Row-per-point batch log-densities.
  Eigen::VectorXd log_prob_batch(const Eigen::MatrixXd& x_rows) const;
  /// Draws n samples x = f(z), z ~ N(0, I); one row per sample.
  Eigen::MatrixXd sample(int n, Rng& rng) const;

  /// Mean negative log-likelihood of the columns of `x_cols` (d x B); adds its
  /// gradient w.r.t. the parameters into `grad`.
  double batch_nll(const Eigen::MatrixXd& x_cols, std::span<double> grad) const;

  /// LID from the Jacobian spectrum: #{sigma_i(J(f^{-1}(x))) > tau}.
  LidEstimate lid(const Eigen::VectorXd& x, double tau) const;
  /// Jacobian singular values at f^{-1}(x), descending (tau-independent part of lid()).
  Eigen::VectorXd jacobian_spectrum(const Eigen::VectorXd& x) const;

 private:
  FlowArch arch_;
  std::vector<Block> blocks_;
  std::vector<double> params_;
  Eigen::VectorXd shift_;
  double scale_ = 1.0;
};

/// Fits the data normalisation from `data` when the model has not been trained
/// yet (Adam state empty), then runs minibatch Adam on the mean NLL.
TrainingReport flow_train(FlowModel& model, const DataMatrix& data, const OptimizerConfig& opt,
                          std::uint64_t seed, AdamState* state = nullptr);

}  // namespace lidood
