#pragma once

#include "lidood/lid.hpp"
#include "lidood/mlp.hpp"
#include "lidood/optim.hpp"
#include "lidood/synthdata.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace lidood {

/// Variance-preserving SDE dx = -beta(t) x / 2 dt + sqrt(beta(t)) dw with
/// beta(t) = beta0 + beta1 t on [0, T].
struct VpSde {
  double beta0 = 0.1;
  double beta1 = 20.0;
  double T = 1.0;
  /// Lower time cutoff for training, likelihoods and sampling.
  double t_min = 1e-3;

  double beta(double t) const { return beta0 + beta1 * t; }
  /// Mean scale of x_t | x_0.
  double alpha(double t) const;
  /// Standard deviation of x_t | x_0: sqrt(1 - alpha^2).
  double sigma(double t) const;

  bool operator==(const VpSde&) const = default;
};

struct ScoreArch {
  int d = 2;
  std::vector<int> hidden{128, 128};
  int time_embed_dim = 16;

  bool operator==(const ScoreArch&) const = default;
};

/// Time-conditioned score network. The perceptron sees [x, emb(t)] with a
/// sinusoidal emb, and the score is its output divided by sigma(t), so the
/// network regresses the (negated) injected noise.
class ScoreModel {
 public:
  explicit ScoreModel(ScoreArch arch, std::uint64_t init_seed = 0, VpSde sde = {});

  const ScoreArch& arch() const { return arch_; }
  const VpSde& sde() const { return sde_; }
  int dim() const { return arch_.d; }
  const Mlp& net() const { return net_; }
  std::size_t num_params() const { return params_.size(); }
  std::span<const double> params() const { return params_; }
  std::span<double> params() { return params_; }
  std::vector<double>& param_vector() { return params_; }

  Eigen::VectorXd time_embedding(double t) const;

  /// Scores for the columns of x_cols, all at time t.
  Eigen::MatrixXd score(const Eigen::MatrixXd& x_cols, double t) const;
  /// Scores with a per-column time.
  Eigen::MatrixXd score(const Eigen::MatrixXd& x_cols, const Eigen::VectorXd& t) const;

  /// Exact divergence of the score in x (d directional derivatives).
  double divergence_exact(const Eigen::VectorXd& x, double t) const;
  /// Hutchinson estimate with `n_probes` Rademacher vectors.
  double divergence_hutchinson(const Eigen::VectorXd& x, double t, int n_probes, Rng& rng) const;

  /// Denoising score-matching loss with likelihood weighting beta(t), for
  /// fixed times and noise draws; averages over columns and adds the
  /// parameter gradient into `grad`.
  double dsm_loss(const Eigen::MatrixXd& x0_cols, const Eigen::VectorXd& t,
                  const Eigen::MatrixXd& noise, std::span<double> grad) const;

 private:
  Eigen::MatrixXd net_input(const Eigen::MatrixXd& x_cols, const Eigen::VectorXd& t) const;

  ScoreArch arch_;
  VpSde sde_;
  Mlp net_;
  std::vector<double> params_;
};

enum class TraceMode { exact, hutchinson };

struct LikelihoodConfig {
  int ode_steps = 25;
  TraceMode trace = TraceMode::exact;
  int hutchinson_samples = 25;
  std::uint64_t seed = 0;

  void validate() const;
  /// Exact divergence up to d = 16, Hutchinson above.
  static LikelihoodConfig defaults_for(int d);
};

struct DmLidConfig {
  double t0 = 0.01;
  /// Number of score probes; 0 means 4d.
  int k = 0;
  double tau = 1.0;
  bool drift_correction = true;

  int resolved_k(int d) const { return k > 0 ? k : 4 * d; }
  void validate(int d, const VpSde& sde) const;
};

/// Score field s(x_cols, t) -> d x n; lets the LID estimator run on closed-form scores.
using ScoreFn = std::function<Eigen::MatrixXd(const Eigen::MatrixXd& x_cols, double t)>;

TrainingReport dm_train(ScoreModel& model, const DataMatrix& data, const OptimizerConfig& opt,
                        std::uint64_t seed, AdamState* state = nullptr);

/// Euler-Maruyama integration of the reverse SDE from N(0, I) at T down to t_min.
DataMatrix dm_sample(const ScoreModel& model, int n, int sde_steps, std::uint64_t seed);
/// Same, from given initial states (d x n columns), drawing step noise from `rng`.
Eigen::MatrixXd reverse_sde(const ScoreModel& model, Eigen::MatrixXd y_cols, int sde_steps,
                            Rng& rng);

/// Probability-flow ODE likelihood (Euler, t_min -> T) with a N(0, I) terminal density.
double dm_log_prob(const ScoreModel& model, const Eigen::VectorXd& x, const LikelihoodConfig& cfg);

/// Singular values of the k x d probe matrix S(x) built from closed-form VP
/// marginal draws at t0 (descending).
Eigen::VectorXd dm_score_spectrum(const ScoreFn& score, const VpSde& sde, const Eigen::VectorXd& x,
                                  const DmLidConfig& cfg, std::uint64_t seed);
Eigen::VectorXd dm_score_spectrum(const ScoreModel& model, const Eigen::VectorXd& x,
                                  const DmLidConfig& cfg, std::uint64_t seed);

/// LID = d - #{sigma_i(S(x)) > tau}.
LidEstimate dm_lid(const ScoreFn& score, const VpSde& sde, const Eigen::VectorXd& x,
                   const DmLidConfig& cfg, std::uint64_t seed);
LidEstimate dm_lid(const ScoreModel& model, const Eigen::VectorXd& x, const DmLidConfig& cfg,
                   std::uint64_t seed);

}  // namespace lidood
