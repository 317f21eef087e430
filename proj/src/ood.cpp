#include "lidood/ood.hpp"

#include "lidood/errors.hpp"
#include "lidood/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace lidood {

std::string to_string(ClassifierFamily f) {
  switch (f) {
    case ClassifierFamily::single_likelihood: return "single_likelihood";
    case ClassifierFamily::single_lid: return "single_lid";
    case ClassifierFamily::dual: return "dual";
  }
  return "unknown";
}

ClassifierFamily family_from_string(const std::string& s) {
  if (s == "single_likelihood") return ClassifierFamily::single_likelihood;
  if (s == "single_lid") return ClassifierFamily::single_lid;
  if (s == "dual") return ClassifierFamily::dual;
  throw ConfigError("unknown classifier family '" + s + "'");
}

std::vector<RocPoint> pareto_frontier(std::vector<RocPoint> candidates) {
  std::sort(candidates.begin(), candidates.end(), [](const RocPoint& a, const RocPoint& b) {
    return a.fpr != b.fpr ? a.fpr < b.fpr : a.tpr > b.tpr;
  });
  std::vector<RocPoint> front;
  double best = -1.0;
  for (const auto& p : candidates) {
    if (p.tpr > best) {
      front.push_back(p);
      best = p.tpr;
    }
  }
  return front;
}

double step_auc(const std::vector<RocPoint>& frontier) {
  double area = 0.0;
  RocPoint prev{0.0, 0.0};
  for (const auto& p : frontier) {
    area += (p.fpr - prev.fpr) * prev.tpr;
    prev = p;
  }
  area += (1.0 - prev.fpr) * prev.tpr;
  return area;
}

namespace {

struct ClassCounts {
  long n_in = 0;
  long n_ood = 0;
};

void require_both_classes(long n_in, long n_ood) {
  if (n_in == 0 || n_ood == 0)
    throw InvalidArgument("roc: both in-distribution and OOD points are required");
}

void require_finite(double v) {
  if (!std::isfinite(v)) throw InvalidArgument("roc: scores must be finite");
}

class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
  void add(std::size_t i) {
    for (++i; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
  }
  /// Sum over positions [0, n).
  long prefix(std::size_t n) const {
    long s = 0;
    for (; n > 0; n -= n & (~n + 1)) s += tree_[n];
    return s;
  }

 private:
  std::vector<long> tree_;
};

std::vector<double> offset_grid(std::vector<double> values, double eps) {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  std::vector<double> grid;
  grid.reserve(2 * values.size());
  for (double v : values) {
    grid.push_back(v - eps);
    grid.push_back(v + eps);
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

/// Uniform sample of `k` distinct integers from [0, n) (Floyd), sorted.
std::vector<long> floyd_sample(long n, long k, Rng& rng) {
  std::unordered_set<long> chosen;
  chosen.reserve(static_cast<std::size_t>(k) * 2);
  for (long j = n - k; j < n; ++j) {
    const auto t = static_cast<long>(rng.below(static_cast<std::uint64_t>(j + 1)));
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  std::vector<long> out(chosen.begin(), chosen.end());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

RocReport single_threshold_roc(std::span<const std::pair<double, bool>> scores, bool higher_is_in) {
  const long n = static_cast<long>(scores.size());
  std::vector<std::pair<double, bool>> s(scores.begin(), scores.end());
  long n_ood = 0;
  for (auto& [v, ood] : s) {
    require_finite(v);
    if (!higher_is_in) v = -v;
    n_ood += ood ? 1 : 0;
  }
  const long n_in = n - n_ood;
  require_both_classes(n_in, n_ood);
  std::sort(s.begin(), s.end());

  // Sweep thresholds upward; flag everything strictly below. Tied groups move
  // together. Ranks with midrank ties give the Mann-Whitney count.
  RocReport out;
  out.family = ClassifierFamily::single_likelihood;
  std::vector<RocPoint> cands{{0.0, 0.0}};
  double in_rank_sum = 0.0;
  long fp = 0, tp = 0;
  for (long i = 0; i < n;) {
    long j = i;
    long g_in = 0, g_ood = 0;
    while (j < n && s[static_cast<std::size_t>(j)].first == s[static_cast<std::size_t>(i)].first) {
      (s[static_cast<std::size_t>(j)].second ? g_ood : g_in) += 1;
      ++j;
    }
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    in_rank_sum += midrank * static_cast<double>(g_in);
    fp += g_in;
    tp += g_ood;
    cands.push_back({static_cast<double>(fp) / n_in, static_cast<double>(tp) / n_ood});
    i = j;
  }
  out.n_candidates_evaluated = out.n_candidates_total = static_cast<long>(cands.size());
  out.points = pareto_frontier(std::move(cands));
  const double u = in_rank_sum - 0.5 * static_cast<double>(n_in) * static_cast<double>(n_in + 1);
  out.auc = u / (static_cast<double>(n_in) * static_cast<double>(n_ood));
  return out;
}

RocReport dual_threshold_roc(std::span<const ScoredPoint> points, const DualRocConfig& cfg) {
  if (cfg.cap < 1) throw InvalidArgument("dual roc: cap must be >= 1");
  if (!(cfg.eps > 0.0)) throw InvalidArgument("dual roc: eps must be positive");
  const std::size_t n = points.size();
  long n_ood = 0;
  std::vector<double> lps, lids;
  for (const auto& p : points) {
    require_finite(p.log_prob);
    require_finite(p.lid);
    n_ood += p.is_ood ? 1 : 0;
    lps.push_back(p.log_prob);
    lids.push_back(p.lid);
  }
  const long n_in = static_cast<long>(n) - n_ood;
  require_both_classes(n_in, n_ood);

  const std::vector<double> grid_l = offset_grid(lps, cfg.eps);
  const std::vector<double> grid_d = offset_grid(lids, cfg.eps);
  const long n_l = static_cast<long>(grid_l.size());
  const long n_d = static_cast<long>(grid_d.size());
  const long total = n_l * n_d;

  // Candidate c encodes (i, j) = (c / n_d, c % n_d).
  std::vector<long> cands;
  if (total <= cfg.cap) {
    cands.resize(static_cast<std::size_t>(total));
    std::iota(cands.begin(), cands.end(), 0L);
  } else {
    Rng rng(cfg.seed);
    cands = floyd_sample(total, cfg.cap, rng);
    for (long i = 0; i < n_l; ++i) cands.push_back(i * n_d);  // lowest psi_LID
    for (long j = 0; j < n_d; ++j) cands.push_back(j);  // lowest psi_L
    std::sort(cands.begin(), cands.end());
    cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
  }

  // Flagged(i, j) = #{lp < a_i} + #{lid < b_j} - #{lp < a_i and lid < b_j}, per
  // class. Sweep psi_LID upward, inserting points by LID into a Fenwick tree
  // keyed by log-prob rank.
  std::vector<std::size_t> by_lp(n), by_lid(n);
  std::iota(by_lp.begin(), by_lp.end(), std::size_t{0});
  std::iota(by_lid.begin(), by_lid.end(), std::size_t{0});
  std::sort(by_lp.begin(), by_lp.end(), [&](auto a, auto b) { return lps[a] < lps[b]; });
  std::sort(by_lid.begin(), by_lid.end(), [&](auto a, auto b) { return lids[a] < lids[b]; });
  std::vector<std::size_t> lp_rank(n);
  std::vector<double> lp_sorted(n);
  std::vector<long> ood_below_lp(n + 1, 0);  // OOD count among the first k by log-prob
  for (std::size_t k = 0; k < n; ++k) {
    lp_rank[by_lp[k]] = k;
    lp_sorted[k] = lps[by_lp[k]];
    ood_below_lp[k + 1] = ood_below_lp[k] + (points[by_lp[k]].is_ood ? 1 : 0);
  }

  std::sort(cands.begin(), cands.end(),
            [n_d](long a, long b) { return a % n_d != b % n_d ? a % n_d < b % n_d : a < b; });
  Fenwick tree_in(n), tree_ood(n);
  long lid_in = 0, lid_ood = 0;
  std::size_t inserted = 0;
  std::vector<RocPoint> rocs;
  rocs.reserve(cands.size());
  for (long c : cands) {
    const double a = grid_l[static_cast<std::size_t>(c / n_d)];
    const double b = grid_d[static_cast<std::size_t>(c % n_d)];
    while (inserted < n && lids[by_lid[inserted]] < b) {
      const std::size_t p = by_lid[inserted++];
      if (points[p].is_ood) {
        tree_ood.add(lp_rank[p]);
        ++lid_ood;
      } else {
        tree_in.add(lp_rank[p]);
        ++lid_in;
      }
    }
    const auto k = static_cast<std::size_t>(std::lower_bound(lp_sorted.begin(), lp_sorted.end(), a) -
                                            lp_sorted.begin());
    const long lp_ood = ood_below_lp[k];
    const long lp_in = static_cast<long>(k) - lp_ood;
    const long tp = lp_ood + lid_ood - tree_ood.prefix(k);
    const long fp = lp_in + lid_in - tree_in.prefix(k);
    rocs.push_back({static_cast<double>(fp) / n_in, static_cast<double>(tp) / n_ood});
  }

  RocReport out;
  out.family = ClassifierFamily::dual;
  out.n_candidates_evaluated = static_cast<long>(rocs.size());
  out.n_candidates_total = total;
  out.points = pareto_frontier(std::move(rocs));
  out.auc = step_auc(out.points);
  return out;
}

namespace {

double quantile_sorted(const std::vector<double>& v, double q) {
  if (v.empty()) return std::nan("");
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

ScoreSummary summarize(std::span<const ScoredPoint> points) {
  ScoreSummary s;
  s.n = static_cast<long>(points.size());
  std::vector<double> lp, lid;
  for (const auto& p : points) {
    lp.push_back(p.log_prob);
    lid.push_back(p.lid);
  }
  if (s.n > 0) {
    s.mean_log_prob = std::accumulate(lp.begin(), lp.end(), 0.0) / static_cast<double>(s.n);
    s.mean_lid = std::accumulate(lid.begin(), lid.end(), 0.0) / static_cast<double>(s.n);
  }
  std::sort(lp.begin(), lp.end());
  std::sort(lid.begin(), lid.end());
  for (double q : kSummaryLevels) {
    s.log_prob_quantiles.push_back(quantile_sorted(lp, q));
    s.lid_quantiles.push_back(quantile_sorted(lid, q));
  }
  return s;
}

EvalReport evaluate_task(std::span<const ScoredPoint> in, std::span<const ScoredPoint> ood,
                         std::optional<TauCalibration> calibration, const DualRocConfig& cfg) {
  if (in.empty() || ood.empty()) throw InvalidArgument("evaluate: both score sets must be non-empty");
  std::vector<ScoredPoint> all;
  for (auto p : in) {
    p.is_ood = false;
    all.push_back(p);
  }
  for (auto p : ood) {
    p.is_ood = true;
    all.push_back(p);
  }
  std::vector<std::pair<double, bool>> lp, lid;
  for (const auto& p : all) {
    lp.emplace_back(p.log_prob, p.is_ood);
    lid.emplace_back(p.lid, p.is_ood);
  }
  EvalReport r;
  r.likelihood = single_threshold_roc(lp, true);
  r.lid = single_threshold_roc(lid, true);
  r.lid.family = ClassifierFamily::single_lid;
  r.dual = dual_threshold_roc(all, cfg);
  r.in = summarize(in);
  r.ood = summarize(ood);
  r.calibration = std::move(calibration);
  r.seed = cfg.seed;
  return r;
}

nlohmann::json to_json(const RocReport& r) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : r.points) pts.push_back({p.fpr, p.tpr});
  return {{"family", to_string(r.family)},
          {"auc", r.auc},
          {"n_candidates_evaluated", r.n_candidates_evaluated},
          {"n_candidates_total", r.n_candidates_total},
          {"frontier", pts}};
}

nlohmann::json to_json(const ScoreSummary& s) {
  return {{"n", s.n},
          {"mean_log_prob", s.mean_log_prob},
          {"mean_lid", s.mean_lid},
          {"quantile_levels", kSummaryLevels},
          {"log_prob_quantiles", s.log_prob_quantiles},
          {"lid_quantiles", s.lid_quantiles}};
}

nlohmann::json to_json(const EvalReport& r) {
  return {{"likelihood", to_json(r.likelihood)},
          {"lid", to_json(r.lid)},
          {"dual", to_json(r.dual)},
          {"in", to_json(r.in)},
          {"ood", to_json(r.ood)},
          {"calibration", r.calibration ? to_json(*r.calibration) : nlohmann::json(nullptr)},
          {"seed", r.seed}};
}

RocReport roc_from_json(const nlohmann::json& j) {
  RocReport r;
  r.family = family_from_string(j.at("family").get<std::string>());
  r.auc = j.at("auc").get<double>();
  r.n_candidates_evaluated = j.at("n_candidates_evaluated").get<long>();
  r.n_candidates_total = j.at("n_candidates_total").get<long>();
  for (const auto& p : j.at("frontier")) r.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return r;
}

ScoreSummary summary_from_json(const nlohmann::json& j) {
  ScoreSummary s;
  s.n = j.at("n").get<long>();
  s.mean_log_prob = j.at("mean_log_prob").get<double>();
  s.mean_lid = j.at("mean_lid").get<double>();
  s.log_prob_quantiles = j.at("log_prob_quantiles").get<std::vector<double>>();
  s.lid_quantiles = j.at("lid_quantiles").get<std::vector<double>>();
  return s;
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.likelihood = roc_from_json(j.at("likelihood"));
    r.lid = roc_from_json(j.at("lid"));
    r.dual = roc_from_json(j.at("dual"));
    r.in = summary_from_json(j.at("in"));
    r.ood = summary_from_json(j.at("ood"));
    if (!j.at("calibration").is_null()) r.calibration = calibration_from_json(j.at("calibration"));
    r.seed = j.at("seed").get<std::uint64_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("evaluation report: ") + e.what());
  }
}

}  // namespace lidood
