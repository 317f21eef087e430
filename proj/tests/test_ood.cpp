#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "lidood/errors.hpp"
#include "lidood/ood.hpp"
#include "lidood/rng.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace lidood;

namespace {

// Exhaustive evaluation of every threshold pair over the offset grid, with an
// O(N^2) dominance test for the frontier.
struct BruteForce {
  std::vector<RocPoint> frontier;
  double auc = 0.0;
  long auc_numerator = 0;  // area in units of 1 / (n_in n_ood)
  long n_in = 0, n_ood = 0;
};

BruteForce brute_force(const std::vector<ScoredPoint>& pts, double eps = 1e-10) {
  std::set<double> gl, gd;
  for (const auto& p : pts) {
    gl.insert(p.log_prob - eps);
    gl.insert(p.log_prob + eps);
    gd.insert(p.lid - eps);
    gd.insert(p.lid + eps);
  }
  BruteForce out;
  for (const auto& p : pts) (p.is_ood ? out.n_ood : out.n_in) += 1;
  std::set<std::pair<long, long>> counts;
  for (double a : gl)
    for (double b : gd) {
      long fp = 0, tp = 0;
      for (const auto& p : pts)
        if (classify(p, {a, b})) (p.is_ood ? tp : fp) += 1;
      counts.insert({fp, tp});
    }
  std::vector<std::pair<long, long>> front;
  for (const auto& c : counts) {
    bool dominated = false;
    for (const auto& o : counts)
      if (o != c && o.first <= c.first && o.second >= c.second) dominated = true;
    if (!dominated) front.push_back(c);
  }
  std::sort(front.begin(), front.end());
  long prev_fp = 0, prev_tp = 0;
  for (const auto& [fp, tp] : front) {
    out.auc_numerator += (fp - prev_fp) * prev_tp;
    prev_fp = fp;
    prev_tp = tp;
    out.frontier.push_back({static_cast<double>(fp) / out.n_in, static_cast<double>(tp) / out.n_ood});
  }
  out.auc_numerator += (out.n_in - prev_fp) * prev_tp;
  out.auc = step_auc(out.frontier);
  return out;
}

std::vector<ScoredPoint> random_points(int n, std::uint64_t seed, int lid_levels = 4) {
  Rng rng(seed);
  std::vector<ScoredPoint> pts;
  for (int i = 0; i < n; ++i) {
    ScoredPoint p;
    p.is_ood = i % 3 == 0;
    p.log_prob = std::round(4.0 * (rng.normal() + (p.is_ood ? 0.3 : 0.0))) / 4.0;
    p.lid = static_cast<double>(rng.below(static_cast<std::uint64_t>(lid_levels))) - (p.is_ood ? 0.5 : 0.0);
    pts.push_back(p);
  }
  return pts;
}

std::vector<std::pair<double, bool>> likelihood_scores(const std::vector<ScoredPoint>& pts) {
  std::vector<std::pair<double, bool>> s;
  for (const auto& p : pts) s.emplace_back(p.log_prob, p.is_ood);
  return s;
}

}  // namespace

TEST_CASE("classify follows the three cases") {
  CHECK(classify({-10.0, 99.0, false}, {0.0, 2.0}));
  CHECK(classify({5.0, 1.0, false}, {0.0, 2.0}));
  CHECK_FALSE(classify({5.0, 3.0, false}, {0.0, 2.0}));
  CHECK_FALSE(classify({0.0, 2.0, false}, {0.0, 2.0}));
}

TEST_CASE("single threshold roc") {
  std::vector<std::pair<double, bool>> s{{0.9, false}, {0.8, false}, {0.1, true}, {0.2, true}};
  const RocReport r = single_threshold_roc(s, true);
  CHECK(r.auc == 1.0);
  CHECK(step_auc(r.points) == 1.0);
  CHECK(single_threshold_roc(s, false).auc == 0.0);

  std::vector<std::pair<double, bool>> same{{1.0, false}, {1.0, true}, {1.0, true}, {1.0, false}};
  CHECK(single_threshold_roc(same, true).auc == 0.5);

  const auto pts = random_points(60, 3);
  const auto lp = likelihood_scores(pts);
  const double a = single_threshold_roc(lp, true).auc;
  CHECK(single_threshold_roc(lp, false).auc == doctest::Approx(1.0 - a).epsilon(1e-15));

  // Mann-Whitney by direct pair counting.
  double wins = 0.0;
  long pairs = 0;
  for (const auto& [vi, oi] : lp)
    for (const auto& [vo, oo] : lp)
      if (!oi && oo) {
        wins += vi > vo ? 1.0 : vi == vo ? 0.5 : 0.0;
        ++pairs;
      }
  CHECK(a == doctest::Approx(wins / pairs).epsilon(1e-14));

  std::vector<std::pair<double, bool>> one_class{{1.0, false}, {2.0, false}};
  CHECK_THROWS_AS(single_threshold_roc(one_class, true), InvalidArgument);
}

TEST_CASE("pareto frontier and step auc") {
  std::vector<RocPoint> c{{0.5, 0.5}, {0.2, 0.6}, {0.2, 0.6}, {0.7, 0.9}, {0.1, 0.1}, {0.7, 0.8}, {0.3, 0.6}};
  const auto f = pareto_frontier(c);
  CHECK(f == std::vector<RocPoint>{{0.1, 0.1}, {0.2, 0.6}, {0.7, 0.9}});
  CHECK(step_auc(f) == doctest::Approx(0.1 * 0.0 + 0.1 * 0.1 + 0.5 * 0.6 + 0.3 * 0.9));
  CHECK(step_auc({}) == 0.0);
  CHECK(step_auc({{0.0, 1.0}}) == 1.0);
  for (const auto& cand : c)
    for (const auto& fp : f) CHECK_FALSE((cand.fpr <= fp.fpr && cand.tpr >= fp.tpr && !(cand == fp)));
}

TEST_CASE("dual roc equals the brute-force oracle") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const int n = 10 + static_cast<int>(seed % 4) * 10;
    const auto pts = random_points(n, seed);
    const RocReport r = dual_threshold_roc(pts);
    const BruteForce bf = brute_force(pts);
    CHECK(r.points == bf.frontier);
    CHECK(r.auc == bf.auc);
    CHECK(r.auc == doctest::Approx(static_cast<double>(bf.auc_numerator) / (bf.n_in * bf.n_ood)).epsilon(1e-14));
    CHECK(r.n_candidates_evaluated == r.n_candidates_total);
    CHECK(r.auc >= 0.0);
    CHECK(r.auc <= 1.0);
    for (std::size_t i = 1; i < r.points.size(); ++i) {
      CHECK(r.points[i].fpr > r.points[i - 1].fpr);
      CHECK(r.points[i].tpr > r.points[i - 1].tpr);
    }
  }
}

TEST_CASE("family containment") {
  for (std::uint64_t seed = 30; seed < 50; ++seed) {
    auto pts = random_points(40, seed);
    // Continuous log-probs: no ties, so the Mann-Whitney and step areas coincide.
    Rng rng(seed);
    for (auto& p : pts) p.log_prob += 1e-3 * rng.uniform();
    const double single = single_threshold_roc(likelihood_scores(pts), true).auc;
    const double dual = dual_threshold_roc(pts).auc;
    CHECK(dual >= single);
  }
}

TEST_CASE("uninformative lid collapses the dual family") {
  auto pts = random_points(40, 7);
  Rng rng(7);
  for (auto& p : pts) {
    p.lid = 2.0;
    p.log_prob += 1e-3 * rng.uniform();
  }
  CHECK(dual_threshold_roc(pts).auc == doctest::Approx(single_threshold_roc(likelihood_scores(pts), true).auc));
}

TEST_CASE("monotone relabeling invariance") {
  for (std::uint64_t seed = 60; seed < 70; ++seed) {
    const auto pts = random_points(30, seed);
    const RocReport base = dual_threshold_roc(pts);
    auto warped = pts;
    for (auto& p : warped) {
      p.log_prob = 2.0 * p.log_prob + std::pow(p.log_prob, 3) + 5.0;
      p.lid = std::exp(p.lid);
    }
    const RocReport w = dual_threshold_roc(warped);
    CHECK(w.points == base.points);
    CHECK(w.auc == base.auc);
  }
}

TEST_CASE("subsampled grid") {
  const auto pts = random_points(200, 5, 50);
  DualRocConfig exact_cfg;
  const RocReport exact = dual_threshold_roc(pts, exact_cfg);
  DualRocConfig cfg;
  cfg.cap = 500;
  cfg.seed = 9;
  const RocReport sub = dual_threshold_roc(pts, cfg);
  CHECK(sub.n_candidates_total == exact.n_candidates_total);
  CHECK(sub.n_candidates_total > cfg.cap);
  CHECK(sub.n_candidates_evaluated < sub.n_candidates_total);
  CHECK(sub.auc <= exact.auc);
  CHECK(dual_threshold_roc(pts, cfg).auc == sub.auc);
  Rng rng(2);
  auto cont = pts;
  for (auto& p : cont) p.log_prob += 1e-3 * rng.uniform();
  CHECK(dual_threshold_roc(cont, cfg).auc >= single_threshold_roc(likelihood_scores(cont), true).auc);
}

TEST_CASE("dual roc preconditions") {
  std::vector<ScoredPoint> in_only{{1.0, 1.0, false}, {2.0, 1.0, false}};
  CHECK_THROWS_AS(dual_threshold_roc(in_only), InvalidArgument);
  std::vector<ScoredPoint> bad{{std::nan(""), 1.0, false}, {2.0, 1.0, true}};
  CHECK_THROWS_AS(dual_threshold_roc(bad), InvalidArgument);
}

TEST_CASE("evaluate task and report round trip") {
  const auto pts = random_points(50, 11);
  std::vector<ScoredPoint> in, ood;
  for (const auto& p : pts) (p.is_ood ? ood : in).push_back(p);
  TauCalibration cal;
  cal.tau = 0.25;
  cal.target_lid = 1.5;
  cal.steps = 2;
  cal.trace = {{0.5, 1.0}, {0.25, 1.5}};
  const EvalReport r = evaluate_task(in, ood, cal);
  CHECK(r.likelihood.family == ClassifierFamily::single_likelihood);
  CHECK(r.lid.family == ClassifierFamily::single_lid);
  CHECK(r.dual.family == ClassifierFamily::dual);
  CHECK(r.in.n == static_cast<long>(in.size()));
  CHECK(r.ood.n == static_cast<long>(ood.size()));
  CHECK(r.in.log_prob_quantiles.size() == std::size(kSummaryLevels));

  const nlohmann::json j = to_json(r);
  const EvalReport back = eval_report_from_json(nlohmann::json::parse(j.dump()));
  CHECK(to_json(back) == j);
  CHECK(back.dual.points == r.dual.points);
  CHECK(back.likelihood.auc == r.likelihood.auc);
  REQUIRE(back.calibration);
  CHECK(back.calibration->trace == cal.trace);
  CHECK_THROWS_AS(eval_report_from_json(nlohmann::json::object()), ConfigError);
  CHECK_THROWS_AS(evaluate_task(in, {}, std::nullopt), InvalidArgument);
}

TEST_CASE("summary quantiles") {
  std::vector<ScoredPoint> pts;
  for (int i = 0; i <= 100; ++i) pts.push_back({static_cast<double>(i), 100.0 - i, false});
  const ScoreSummary s = summarize(pts);
  CHECK(s.mean_log_prob == 50.0);
  CHECK(s.log_prob_quantiles == std::vector<double>{0, 5, 25, 50, 75, 95, 100});
  CHECK(s.lid_quantiles == std::vector<double>{0, 5, 25, 50, 75, 95, 100});
}
