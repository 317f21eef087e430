#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace lidood {

/// N x d table of points, one row per point, with optional integer labels.
struct DataMatrix {
  Eigen::MatrixXd points;
  std::optional<std::vector<int>> labels;
  std::uint64_t seed = 0;

  Eigen::Index size() const { return points.rows(); }
  Eigen::Index dim() const { return points.cols(); }
  bool has_labels() const { return labels.has_value(); }

  /// Throws InvalidArgument if an entry is non-finite or labels have the wrong length.
  void validate() const;
};

/// Two-component Gaussian mixture in R^3: a thick (2-D) in-component and a
/// thin (1-D) out-component with weight delta.
struct MixtureSpec {
  double delta = 0.01;
  double sigma = 1.0;
  double eps = 0.004;
  Eigen::Vector3d mu_in = Eigen::Vector3d::Zero();
  Eigen::Vector3d mu_out{0.0, 11.0, 0.0};

  double w_in() const { return 1.0 - delta; }
  double w_out() const { return delta; }
  Eigen::Vector3d var_in() const { return {sigma * sigma, sigma * sigma, eps * eps}; }
  Eigen::Vector3d var_out() const { return {eps * eps, sigma * sigma, eps * eps}; }
  void validate() const;
};

enum class Embedding { coordinate_replication, random_rotation };

struct EmbeddedGaussianSpec {
  int intrinsic_dim = 2;
  int ambient_dim = 4;
  int n_samples = 1000;
  Embedding embedding = Embedding::coordinate_replication;
  void validate() const;
};

// Lollipop geometry: candy disk, diagonal stick from the origin to the disk
// boundary, and one isolated point. Labels equal the true LID of each piece.
namespace lollipop {
inline constexpr double kCandyCenter = 3.0;
inline constexpr double kCandyRadius = 1.0;
inline const Eigen::Vector2d kIsolatedPoint{4.5, 0.5};
/// Coordinate (both axes) where the stick meets the candy boundary.
double stick_end();
inline constexpr int kLabelPoint = 0;
inline constexpr int kLabelStick = 1;
inline constexpr int kLabelCandy = 2;
/// Recover the label of a point from its coordinates; -1 if it lies on no piece.
int classify(const Eigen::Vector2d& x, double tol = 1e-12);
}  // namespace lollipop

struct LollipopProportions {
  double candy = 0.60;
  double stick = 0.35;
  double point = 0.05;
};

DataMatrix gen_lollipop(int n, std::uint64_t seed, LollipopProportions props = {});
DataMatrix gen_embedded_gaussian(const EmbeddedGaussianSpec& spec, std::uint64_t seed);

/// Labels: 0 = in-component, 1 = out-component.
DataMatrix gen_mixture(const MixtureSpec& spec, int n, std::uint64_t seed);
/// Samples from a single mixture component (label fixed to 0 or 1).
DataMatrix gen_mixture_component(const MixtureSpec& spec, bool out_component, int n,
                                 std::uint64_t seed);

void save_csv(const DataMatrix& data, const std::filesystem::path& path);
DataMatrix load_csv(const std::filesystem::path& path);

}  // namespace lidood
