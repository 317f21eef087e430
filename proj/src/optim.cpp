#include "lidood/optim.hpp"

#include "lidood/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>

namespace lidood {

void AdamState::reset(std::size_t n_params) {
  m.assign(n_params, 0.0);
  v.assign(n_params, 0.0);
  step = 0;
}

void adam_step(std::span<double> params, std::span<double> grad, AdamState& state,
               const OptimizerConfig& cfg) {
  if (state.m.size() != params.size()) state.reset(params.size());
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double g = grad[i];
    if (cfg.clip_value > 0.0) g = std::clamp(g, -cfg.clip_value, cfg.clip_value);
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }
}

TrainingReport run_adam(std::vector<double>& params, Eigen::Index n_data,
                        const OptimizerConfig& cfg, std::uint64_t seed, AdamState& state,
                        const BatchLossFn& loss_fn) {
  if (n_data < 1) throw InvalidArgument("training: empty dataset");
  if (cfg.batch_size < 1) throw InvalidArgument("training: batch_size must be >= 1");
  if (cfg.steps < 0) throw InvalidArgument("training: steps must be >= 0");
  if (state.m.size() != params.size()) state.reset(params.size());

  const auto start = std::chrono::steady_clock::now();
  TrainingReport report;
  report.seed = seed;
  Rng rng(seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n_data));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::size_t cursor = order.size();
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), order.size());
  std::vector<Eigen::Index> idx(batch);
  std::vector<double> grad(params.size());
  std::vector<double> last_good = params;
  AdamState last_state = state;
  OptimizerConfig step_cfg = cfg;

  for (long step = 0; step < cfg.steps; ++step) {
    for (std::size_t i = 0; i < batch; ++i) {
      if (cursor == order.size()) {
        for (std::size_t k = order.size() - 1; k > 0; --k)
          std::swap(order[k], order[rng.below(k + 1)]);
        cursor = 0;
      }
      idx[i] = order[cursor++];
    }
    std::fill(grad.begin(), grad.end(), 0.0);
    const double loss = loss_fn(idx, rng, grad);
    const bool finite = std::isfinite(loss) &&
                        std::all_of(grad.begin(), grad.end(), [](double g) { return std::isfinite(g); });
    if (!finite) {
      params = last_good;
      state = last_state;
      report.aborted = true;
      report.message = "non-finite loss at step " + std::to_string(state.step + 1) +
                       "; parameters restored to last finite step";
      break;
    }
    report.loss_trace.push_back(loss);
    last_good = params;
    last_state = state;
    if (cfg.cosine_decay) {
      step_cfg.learning_rate = cfg.learning_rate * 0.5 *
          (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(cfg.steps)));
    }
    adam_step(params, grad, state, step_cfg);
    ++report.steps_run;
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace lidood
