#include "lidood/lpca.hpp"

#include "lidood/errors.hpp"
#include "lidood/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>

namespace lidood {

int LpcaConfig::resolved_k(Eigen::Index n_points) const {
  if (k_nn) return *k_nn;
  return std::max(10, static_cast<int>(std::min<Eigen::Index>(100, n_points / 10)));
}

LpcaPoint lpca_lid_point(const DataMatrix& data, Eigen::Index query, const LpcaConfig& cfg) {
  const Eigen::Index n = data.size();
  const int k = cfg.resolved_k(n);
  if (!(cfg.alpha_fo > 0.0 && cfg.alpha_fo < 1.0))
    throw InvalidArgument("lpca: alpha_fo must lie in (0, 1)");
  if (k < 2) throw InvalidArgument("lpca: k_nn must be >= 2");
  if (n <= k) throw InvalidArgument("lpca: need more points than k_nn");
  if (query < 0 || query >= n) throw InvalidArgument("lpca: query index out of range");

  // Brute-force neighbours; ties broken by lower index.
  const Eigen::RowVectorXd q = data.points.row(query);
  std::vector<std::pair<double, Eigen::Index>> dist;
  dist.reserve(static_cast<std::size_t>(n - 1));
  for (Eigen::Index i = 0; i < n; ++i)
    if (i != query) dist.emplace_back((data.points.row(i) - q).squaredNorm(), i);
  std::partial_sort(dist.begin(), dist.begin() + k, dist.end());

  Eigen::MatrixXd nbhd(k, data.dim());
  for (int i = 0; i < k; ++i) nbhd.row(i) = data.points.row(dist[static_cast<std::size_t>(i)].second);
  nbhd.rowwise() -= nbhd.colwise().mean();
  const Eigen::MatrixXd cov = (nbhd.transpose() * nbhd) / static_cast<double>(k);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd& ev = eig.eigenvalues();
  const double largest = ev.maxCoeff();
  if (!(largest > 0.0)) return {0, true};
  const double cutoff = cfg.alpha_fo * largest;
  return {static_cast<int>((ev.array() > cutoff).count()), false};
}

LpcaSummary lpca_lid_mean(const DataMatrix& data, const LpcaConfig& cfg,
                          std::optional<int> subsample, std::uint64_t seed) {
  const Eigen::Index n = data.size();
  if (subsample && *subsample < 1) throw InvalidArgument("lpca: subsample must be >= 1");
  Rng rng(seed);
  std::vector<Eigen::Index> idx;
  if (subsample && *subsample < n)
    idx = sample_indices(n, *subsample, rng);
  else
    for (Eigen::Index i = 0; i < n; ++i) idx.push_back(i);
  LpcaSummary out;
  double total = 0.0;
  for (auto i : idx) {
    const auto p = lpca_lid_point(data, i, cfg);
    total += p.lid;
    out.n_degenerate += p.degenerate ? 1 : 0;
  }
  out.n_evaluated = static_cast<int>(idx.size());
  out.mean_lid = total / static_cast<double>(idx.size());
  return out;
}

}  // namespace lidood
