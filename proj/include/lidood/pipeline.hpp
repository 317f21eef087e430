#pragma once

#include "lidood/config.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace lidood {

/// File names inside a run directory.
struct RunLayout {
  std::filesystem::path dir;

  std::filesystem::path config() const { return dir / "config.ini"; }
  std::filesystem::path data() const { return dir / "data.csv"; }
  std::filesystem::path ood_data() const { return dir / "ood.csv"; }
  std::filesystem::path checkpoint() const { return dir / "model.ckpt"; }
  std::filesystem::path loss_trace() const { return dir / "loss_trace.csv"; }
  std::filesystem::path train_report() const { return dir / "train_report.json"; }
  std::filesystem::path calibration() const { return dir / "calibration.json"; }
  std::filesystem::path scores() const { return dir / "scores.csv"; }
  std::filesystem::path report() const { return dir / "report.json"; }
  std::filesystem::path roc(const std::string& family) const { return dir / ("roc_" + family + ".csv"); }
  std::filesystem::path paradox_report() const { return dir / "paradox_report.json"; }
  std::filesystem::path slope() const { return dir / "slope.csv"; }
};

DataMatrix make_dataset(const DataConfig& cfg, std::uint64_t seed);

/// A trained model of either kind behind one scoring interface.
class ModelHandle {
 public:
  ModelHandle(FlowModel flow);
  ModelHandle(ScoreModel dm, DmLidConfig lid_cfg, LikelihoodConfig likelihood, std::uint64_t lid_seed);

  ModelKind kind() const { return flow_ ? ModelKind::flow : ModelKind::diffusion; }
  int dim() const;
  LidKind lid_kind() const { return flow_ ? LidKind::rank_count : LidKind::corank_count; }

  double log_prob(const Eigen::VectorXd& x) const;
  Eigen::VectorXd spectrum(const Eigen::VectorXd& x) const;
  double lid(const Eigen::VectorXd& x, double tau) const;

  const FlowModel* flow() const { return flow_ ? &*flow_ : nullptr; }
  const ScoreModel* diffusion() const { return dm_ ? &*dm_ : nullptr; }

 private:
  std::optional<FlowModel> flow_;
  std::optional<ScoreModel> dm_;
  DmLidConfig lid_cfg_;
  LikelihoodConfig likelihood_;
  std::uint64_t lid_seed_ = 0;
};

ModelHandle load_model(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint);

/// Mean LPCA estimate over the training data (or the configured subsample).
LpcaSummary lpca_target(const DataMatrix& data, const CalibrateStageConfig& cfg, std::uint64_t seed);

TauCalibration calibrate_model(const ModelHandle& model, const DataMatrix& data, double target,
                               const CalibrationConfig& cfg, std::uint64_t seed);

/// Log-probability and LID per row of `data`.
std::vector<ScoredPoint> score_dataset(const ModelHandle& model, const DataMatrix& data, double tau,
                                       bool is_ood);

void write_scores_csv(const std::filesystem::path& path, const std::vector<ScoredPoint>& scores,
                      const std::string& provenance);
/// Frontier with the (0,0) and (1,1) anchors, columns fpr,tpr.
void write_roc_csv(const std::filesystem::path& path, const RocReport& roc, const std::string& provenance);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

/// Config hash plus every stage seed, embedded in each artifact.
nlohmann::json provenance(const ExperimentConfig& cfg);
std::string provenance_line(const ExperimentConfig& cfg);

nlohmann::json cmd_gen_data(const ExperimentConfig& cfg, const RunLayout& run);
nlohmann::json cmd_train(const ExperimentConfig& cfg, const RunLayout& run);
nlohmann::json cmd_calibrate(const ExperimentConfig& cfg, const RunLayout& run);
nlohmann::json cmd_evaluate(const ExperimentConfig& cfg, const RunLayout& run);
nlohmann::json cmd_paradox_demo(const ExperimentConfig& cfg, const RunLayout& run);
nlohmann::json cmd_mass_slope(const ExperimentConfig& cfg, const RunLayout& run);

/// Writes the frozen resolved config into the run directory (creating it).
void prepare_run_dir(const ExperimentConfig& cfg, const RunLayout& run);

}  // namespace lidood
