#pragma once

#include "lidood/calibrate.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace lidood {

struct DualThresholds {
  double psi_L = 0.0;
  double psi_LID = 0.0;
};

struct ScoredPoint {
  double log_prob = 0.0;
  double lid = 0.0;
  bool is_ood = false;
};

/// OOD iff log_prob < psi_L, or else lid < psi_LID.
inline bool classify(const ScoredPoint& p, const DualThresholds& th) {
  if (p.log_prob < th.psi_L) return true;
  return p.lid < th.psi_LID;
}

enum class ClassifierFamily { single_likelihood, single_lid, dual };

std::string to_string(ClassifierFamily f);
ClassifierFamily family_from_string(const std::string& s);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  bool operator==(const RocPoint&) const = default;
};

struct RocReport {
  ClassifierFamily family = ClassifierFamily::single_likelihood;
  /// Pareto frontier, strictly increasing in both FPR and TPR. Anchors (0,0)
  /// and (1,1) are implied.
  std::vector<RocPoint> points;
  double auc = 0.0;
  long n_candidates_evaluated = 0;
  /// Size of the full candidate grid before any subsampling.
  long n_candidates_total = 0;
};

/// Non-dominated subset under (lower FPR, higher TPR), sorted by FPR.
std::vector<RocPoint> pareto_frontier(std::vector<RocPoint> candidates);

/// Area under the right-continuous step interpolation of a frontier, with
/// anchors (0,0) and (1,1).
double step_auc(const std::vector<RocPoint>& frontier);

/// Positives are the OOD points. With higher_is_in the score is larger for
/// in-distribution data, so a point is flagged when its score falls below the
/// threshold. AUC is the Mann-Whitney statistic (ties count one half).
RocReport single_threshold_roc(std::span<const std::pair<double, bool>> scores, bool higher_is_in);

struct DualRocConfig {
  long cap = 500000;
  double eps = 1e-10;
  std::uint64_t seed = 0;
};

/// Optimal ROC of the dual-threshold family over the grid of observed score
/// values offset by +-eps. Grids larger than `cap` are uniformly subsampled;
/// the single-score edges of the grid are always evaluated on top of the sample.
RocReport dual_threshold_roc(std::span<const ScoredPoint> points, const DualRocConfig& cfg = {});

struct ScoreSummary {
  long n = 0;
  double mean_log_prob = 0.0;
  double mean_lid = 0.0;
  /// Quantiles at kSummaryLevels.
  std::vector<double> log_prob_quantiles;
  std::vector<double> lid_quantiles;
};

inline constexpr double kSummaryLevels[] = {0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0};

ScoreSummary summarize(std::span<const ScoredPoint> points);

struct EvalReport {
  RocReport likelihood;
  RocReport lid;
  RocReport dual;
  ScoreSummary in;
  ScoreSummary ood;
  std::optional<TauCalibration> calibration;
  std::uint64_t seed = 0;
};

/// `in` and `ood` truth flags are taken from the list they come in.
EvalReport evaluate_task(std::span<const ScoredPoint> in, std::span<const ScoredPoint> ood,
                         std::optional<TauCalibration> calibration, const DualRocConfig& cfg = {});

nlohmann::json to_json(const RocReport& r);
nlohmann::json to_json(const ScoreSummary& s);
nlohmann::json to_json(const EvalReport& r);
RocReport roc_from_json(const nlohmann::json& j);
ScoreSummary summary_from_json(const nlohmann::json& j);
EvalReport eval_report_from_json(const nlohmann::json& j);

}  // namespace lidood
