#pragma once

#include "lidood/rng.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace lidood {

enum class Activation { tanh, silu };

/// Fully connected perceptron over a flat parameter vector. Batches are
/// column-major: one column per example. Hidden layers use a smooth
/// activation, the output layer is affine.
///
/// Parameter layout per layer: weight matrix (out x in, column-major), then bias.
class Mlp {
 public:
  Mlp() = default;
  /// `widths` = {in, hidden..., out}; at least two entries.
  Mlp(std::vector<int> widths, Activation act);

  int in_dim() const { return widths_.front(); }
  int out_dim() const { return widths_.back(); }
  const std::vector<int>& widths() const { return widths_; }
  Activation activation() const { return act_; }
  std::size_t num_params() const { return n_params_; }

  /// Scaled-normal weights, zero biases; optionally zero the output layer.
  void init(std::span<double> params, Rng& rng, bool zero_output) const;

  struct Cache {
    Eigen::MatrixXd input;
    std::vector<Eigen::MatrixXd> pre;   // pre-activations of hidden layers
    std::vector<Eigen::MatrixXd> post;  // activations of hidden layers
  };

  Eigen::MatrixXd forward(std::span<const double> params, const Eigen::MatrixXd& x,
                          Cache* cache = nullptr) const;

  /// Accumulates dL/dparams into `grad` (added, not overwritten) and returns dL/dx.
  Eigen::MatrixXd backward(std::span<const double> params, const Cache& cache,
                           const Eigen::MatrixXd& grad_out, std::span<double> grad) const;

  /// d(out)/d(in) at a single input: out_dim x in_dim.
  Eigen::MatrixXd input_jacobian(std::span<const double> params, const Eigen::VectorXd& x) const;

  /// Forward-mode directional derivatives: column j of the result is
  /// J(x_j) v_j, where x_j, v_j are the j-th columns.
  Eigen::MatrixXd jvp(std::span<const double> params, const Eigen::MatrixXd& x,
                      const Eigen::MatrixXd& v) const;

 private:
  struct Layer {
    int in = 0, out = 0;
    std::size_t w_offset = 0, b_offset = 0;
  };
  std::vector<int> widths_;
  std::vector<Layer> layers_;
  Activation act_ = Activation::tanh;
  std::size_t n_params_ = 0;
};

}  // namespace lidood
