#pragma once

#include "lidood/lid.hpp"
#include "lidood/synthdata.hpp"

#include "json.hpp"

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

namespace lidood {

struct CalibrationConfig {
  int subsample_size = 80;
  double search_lo = 0.0;
  double search_hi = 1e10;
  int steps = 50;

  void validate() const;
};

struct TauCalibration {
  double tau = 0.0;
  double target_lid = 0.0;
  int subsample_size = 0;
  double search_lo = 0.0;
  double search_hi = 0.0;
  int steps = 0;
  /// Final bracket; `tau` is its midpoint.
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  /// (probe tau, mean LID at that tau), one entry per bisection step.
  std::vector<std::pair<double, double>> trace;
  std::uint64_t seed = 0;
};

/// Bisection on a monotone mean-LID curve. For rank_count the curve is
/// non-increasing in tau, for corank_count non-decreasing.
TauCalibration bisect_tau(const std::function<double(double)>& mean_lid, double target, LidKind kind,
                          const CalibrationConfig& cfg);

/// Model LID of one point at a given tau.
using PointLidFn = std::function<double(const Eigen::VectorXd& x, double tau)>;
/// Singular-value spectrum of one point (tau independent).
using SpectrumFn = std::function<Eigen::VectorXd(const Eigen::VectorXd& x)>;

/// Calibrate against `target` on a seeded subsample of `data`, calling the
/// estimator afresh at every probe.
TauCalibration calibrate_tau(const PointLidFn& estimator, LidKind kind, const DataMatrix& data,
                             double target, const CalibrationConfig& cfg, std::uint64_t seed);

/// Same search, but each subsample spectrum is computed once and re-thresholded
/// at every probe.
TauCalibration calibrate_tau_cached(const SpectrumFn& spectrum, LidKind kind, const DataMatrix& data,
                                    double target, const CalibrationConfig& cfg, std::uint64_t seed);

nlohmann::json to_json(const TauCalibration& cal);
TauCalibration calibration_from_json(const nlohmann::json& j);

}  // namespace lidood
