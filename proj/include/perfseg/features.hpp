#pragma once

// Per-supervoxel feature vectors: statistics of shared-basis PCA modes and
// their six-direction neighbourhood gradients.

#include <Eigen/Dense>
#include <array>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "perfseg/supervoxel.hpp"

namespace perfseg {

inline constexpr int kFeatureModes = 5;
inline constexpr int kStatColumns = 2 * kFeatureModes;
inline constexpr int kFeatureColumns = 2 * kStatColumns;

/// [mean b1..b5, sd b1..b5, grad(mean b1..b5), grad(sd b1..b5)]
std::vector<std::string> feature_column_names();

/// Order of the two normalisation passes relative to the gradient.
enum class GradientOrder {
  /// Normalise the 10 stats, take gradients, then normalise the gradients.
  kAfterNormalization,
  /// Gradients of the raw stats; all 20 columns normalised together.
  kBeforeNormalization,
};

/// Per supervoxel and mode: mean and sample s.d. (1/(n-1), 0 for n = 1)
/// of the coefficients. `coeffs` has one row per grid voxel.
Eigen::MatrixXd supervoxel_stats(const SupervoxelMap& map, const Eigen::MatrixXd& coeffs);

/// Neighbour ids in the order +x, -x, +y, -y, +z, -z.
using DirectionNeighbors = std::array<int, 6>;

DirectionNeighbors direction_neighbors(const SupervoxelMap& map, int i);
std::vector<DirectionNeighbors> direction_neighbors(const SupervoxelMap& map);

/// sqrt(sum over axes of (f(dir+) - f(dir-))^2) for every column.
Eigen::MatrixXd neighborhood_gradient(const Eigen::MatrixXd& stats,
                                      std::span<const DirectionNeighbors> dirs);

struct ColumnNormalization {
  std::vector<double> mins;
  std::vector<double> maxs;
  std::vector<bool> degenerate;

  static ColumnNormalization fit(const Eigen::MatrixXd& rows);
  /// Affine map to [0, 1]; results are clamped to [lo, hi].
  Eigen::MatrixXd apply(const Eigen::MatrixXd& rows, double lo = -0.5, double hi = 1.5) const;
  int columns() const { return static_cast<int>(mins.size()); }
};

/// Raw, un-normalised ingredients of one case's features.
struct CaseFeatures {
  Eigen::MatrixXd stats;  // N_s x 10
  std::vector<DirectionNeighbors> dirs;
};

CaseFeatures case_features(const SupervoxelMap& map, const Eigen::MatrixXd& coeffs);

struct FeatureNormalization {
  GradientOrder order = GradientOrder::kAfterNormalization;
  /// Stat columns (10) and gradient columns (10); with kBeforeNormalization
  /// `stats` covers all 20 columns and `gradients` is empty.
  ColumnNormalization stats;
  ColumnNormalization gradients;
};

FeatureNormalization fit_feature_normalization(std::span<const CaseFeatures> cases,
                                               GradientOrder order = GradientOrder::kAfterNormalization);

/// N_s x 20 normalised feature matrix.
Eigen::MatrixXd assemble_features(const CaseFeatures& c, const FeatureNormalization& norm);

nlohmann::json normalization_to_json(const FeatureNormalization& n);
FeatureNormalization normalization_from_json(const nlohmann::json& j);

/// Column names plus row-major values.
nlohmann::json features_to_json(const Eigen::MatrixXd& features);

}  // namespace perfseg
