#include "lidood/calibrate.hpp"

#include "lidood/errors.hpp"
#include "lidood/rng.hpp"


#include <cmath>

namespace lidood {

void CalibrationConfig::validate() const {
  if (subsample_size < 1) throw InvalidArgument("calibrate: subsample_size must be >= 1");
  if (!(search_lo < search_hi) || !std::isfinite(search_lo) || !std::isfinite(search_hi))
    throw InvalidArgument("calibrate: need finite search_lo < search_hi");
  if (steps < 1) throw InvalidArgument("calibrate: steps must be >= 1");
}

TauCalibration bisect_tau(const std::function<double(double)>& mean_lid, double target, LidKind kind,
                          const CalibrationConfig& cfg) {
  cfg.validate();
  TauCalibration out;
  out.target_lid = target;
  out.subsample_size = cfg.subsample_size;
  out.search_lo = cfg.search_lo;
  out.search_hi = cfg.search_hi;
  out.steps = cfg.steps;
  double lo = cfg.search_lo;
  double hi = cfg.search_hi;
  for (int i = 0; i < cfg.steps; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double m = mean_lid(mid);
    out.trace.emplace_back(mid, m);
    // Rank counts fall as tau grows: too few dimensions means tau is too large.
    const bool tau_too_large = kind == LidKind::rank_count ? m < target : m > target;
    if (tau_too_large)
      hi = mid;
    else
      lo = mid;
  }
  out.bracket_lo = lo;
  out.bracket_hi = hi;
  out.tau = 0.5 * (lo + hi);
  return out;
}

namespace {

std::vector<Eigen::VectorXd> subsample_points(const DataMatrix& data, int size, std::uint64_t seed) {
  if (data.size() < 1) throw InvalidArgument("calibrate: empty dataset");
  Rng rng(seed);
  std::vector<Eigen::VectorXd> pts;
  for (auto i : sample_indices(data.size(), size, rng)) pts.emplace_back(data.points.row(i).transpose());
  return pts;
}

void check_target(double target, const DataMatrix& data) {
  if (!(target >= 0.0 && target <= static_cast<double>(data.dim())))
    throw InvalidArgument("calibrate: target LID must lie in [0, d]");
}

}  // namespace

TauCalibration calibrate_tau(const PointLidFn& estimator, LidKind kind, const DataMatrix& data,
                             double target, const CalibrationConfig& cfg, std::uint64_t seed) {
  check_target(target, data);
  cfg.validate();
  const auto pts = subsample_points(data, cfg.subsample_size, seed);
  auto mean = [&](double tau) {
    double total = 0.0;
    for (const auto& x : pts) total += estimator(x, tau);
    return total / static_cast<double>(pts.size());
  };
  auto out = bisect_tau(mean, target, kind, cfg);
  out.subsample_size = static_cast<int>(pts.size());
  out.seed = seed;
  return out;
}

TauCalibration calibrate_tau_cached(const SpectrumFn& spectrum, LidKind kind, const DataMatrix& data,
                                    double target, const CalibrationConfig& cfg, std::uint64_t seed) {
  check_target(target, data);
  cfg.validate();
  std::vector<Eigen::VectorXd> spectra;
  for (const auto& x : subsample_points(data, cfg.subsample_size, seed)) spectra.push_back(spectrum(x));
  const int d = static_cast<int>(data.dim());
  auto mean = [&](double tau) {
    double total = 0.0;
    for (const auto& sv : spectra) total += lid_from_spectrum(sv, tau, kind, d);
    return total / static_cast<double>(spectra.size());
  };
  auto out = bisect_tau(mean, target, kind, cfg);
  out.subsample_size = static_cast<int>(spectra.size());
  out.seed = seed;
  return out;
}

nlohmann::json to_json(const TauCalibration& cal) {
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& [tau, m] : cal.trace) trace.push_back({tau, m});
  return {{"tau", cal.tau},
          {"target_lid", cal.target_lid},
          {"subsample_size", cal.subsample_size},
          {"search_lo", cal.search_lo},
          {"search_hi", cal.search_hi},
          {"steps", cal.steps},
          {"bracket", {cal.bracket_lo, cal.bracket_hi}},
          {"seed", cal.seed},
          {"trace", trace}};
}

TauCalibration calibration_from_json(const nlohmann::json& j) {
  try {
    TauCalibration cal;
    cal.tau = j.at("tau").get<double>();
    cal.target_lid = j.at("target_lid").get<double>();
    cal.subsample_size = j.at("subsample_size").get<int>();
    cal.search_lo = j.at("search_lo").get<double>();
    cal.search_hi = j.at("search_hi").get<double>();
    cal.steps = j.at("steps").get<int>();
    cal.bracket_lo = j.at("bracket").at(0).get<double>();
    cal.bracket_hi = j.at("bracket").at(1).get<double>();
    cal.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& p : j.at("trace")) cal.trace.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    if (!(cal.tau > 0.0)) throw ConfigError("calibration: tau must be positive");
    return cal;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("calibration report: ") + e.what());
  }
}

}  // namespace lidood
