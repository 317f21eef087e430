#pragma once

#include "lidood/calibrate.hpp"
#include "lidood/diffusion.hpp"
#include "lidood/flow.hpp"
#include "lidood/lpca.hpp"
#include "lidood/ood.hpp"
#include "lidood/optim.hpp"
#include "lidood/synthdata.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace lidood {

/// Dataset recipe. kind is one of: lollipop, mixture, mixture_in, mixture_out,
/// embedded_gaussian, gaussian, file.
struct DataConfig {
  std::string kind;
  int n = 1000;
  std::string file;
  LollipopProportions lollipop;
  MixtureSpec mixture;
  EmbeddedGaussianSpec embedded;
  int gaussian_dim = 2;

  int dim() const;
};

enum class ModelKind { flow, diffusion };

struct ModelConfig {
  ModelKind kind = ModelKind::flow;
  FlowArch flow;
  ScoreArch score;
  VpSde sde;
};

struct LidConfig {
  /// Overrides the calibrated threshold when set.
  std::optional<double> tau;
  DmLidConfig dm;
};

struct CalibrateStageConfig {
  CalibrationConfig bisect;
  LpcaConfig lpca;
  /// Training points used for the LPCA target; all when unset.
  std::optional<int> lpca_subsample;
};

struct EvaluateConfig {
  DualRocConfig roc;
  LikelihoodConfig likelihood;
  /// Fresh in-distribution queries drawn from the [data] recipe.
  int n_in = 500;
};

struct ParadoxConfig {
  int n_train = 20000;
  int n_generate = 20000;
  int n_query = 500;
};

/// Slope experiment. target: gaussian (ball mass of N(0, diag(variances))),
/// convolution (closed-form smoothed density of the same, zero variances
/// allowed) or flow (checkpoint in the run directory).
struct SlopeConfig {
  std::string target = "gaussian";
  std::vector<double> variances{1.0, 1.0};
  /// Query point; the origin (or, for flows, the first training point) when empty.
  std::vector<double> point;
  double r_min = -6.0;
  double r_max = -4.0;
  int r_points = 5;
  long n_samples = 100000;

  std::vector<double> grid() const;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DataConfig data;
  std::optional<DataConfig> ood_data;
  ModelConfig model;
  OptimizerConfig train;
  bool resume = false;
  CalibrateStageConfig calibrate;
  LidConfig lid;
  EvaluateConfig evaluate;
  ParadoxConfig paradox;
  SlopeConfig slope;

  /// Independent seed for one pipeline stage, derived from `seed`.
  std::uint64_t stage_seed(const std::string& stage) const;
};

/// Parses INI text. Unknown sections or keys and malformed values raise
/// ConfigError naming the offending field.
ExperimentConfig parse_config(const std::string& ini_text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every field, including defaults, as INI text.
std::string resolved_config_text(const ExperimentConfig& cfg);

/// FNV-1a hash of the resolved text, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

std::string to_string(ModelKind k);

}  // namespace lidood
