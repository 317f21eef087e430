#pragma once

#include "lidood/rng.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace lidood {

struct OptimizerConfig {
  double learning_rate = 1e-3;
  int batch_size = 128;
  long steps = 2000;
  /// Gradient value clipping (elementwise); <= 0 disables.
  double clip_value = 1.0;
  /// Cosine decay of the learning rate to zero over `steps`.
  bool cosine_decay = false;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam moment estimates; persisted with checkpoints so training can resume.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;

  void reset(std::size_t n_params);
};

struct TrainingReport {
  std::vector<double> loss_trace;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  long steps_run = 0;
  /// Set when a non-finite loss or gradient stopped training; parameters were
  /// rolled back to the last finite step.
  bool aborted = false;
  std::string message;
};

/// Clip then apply one Adam update in place.
void adam_step(std::span<double> params, std::span<double> grad, AdamState& state,
               const OptimizerConfig& cfg);

/// Computes the minibatch loss for `batch` (row indices into the dataset),
/// writing its gradient into `grad` (pre-zeroed).
using BatchLossFn =
    std::function<double(std::span<const Eigen::Index> batch, Rng& rng, std::span<double> grad)>;

/// Minibatch Adam loop shared by the model trainers. Batches are drawn by
/// reshuffling the dataset each epoch.
TrainingReport run_adam(std::vector<double>& params, Eigen::Index n_data,
                        const OptimizerConfig& cfg, std::uint64_t seed, AdamState& state,
                        const BatchLossFn& loss_fn);

}  // namespace lidood
