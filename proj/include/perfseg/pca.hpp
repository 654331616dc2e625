#pragma once

// Principal components of signal-enhancement curves.

#include <Eigen/Dense>
#include <vector>

#include "json.hpp"

namespace perfseg {

struct PcaBasis {
  Eigen::VectorXd mean_curve;
  /// One orthonormal component per row (modes x T).
  Eigen::MatrixXd components;
  /// Descending, non-negative.
  Eigen::VectorXd eigenvalues;
  /// Trace of the covariance (sum of all T eigenvalues).
  double total_variance = 0.0;

  int length() const { return static_cast<int>(mean_curve.size()); }
  int modes() const { return static_cast<int>(components.rows()); }
  /// Cumulative fraction of variance captured by the first 1..m modes.
  std::vector<double> explained_variance() const;
};

struct PcaOptions {
  /// Width (in samples) of the 1D Gaussian applied to each curve before
  /// fitting; 0 disables smoothing.
  double smoothing_sigma = 1.0;
};

/// Gaussian smoothing with mirrored ("reflect") boundaries, kernel radius
/// round(4 sigma).
Eigen::VectorXd gaussian_smooth(const Eigen::VectorXd& curve, double sigma);
/// Smooths every row in place.
void smooth_rows(Eigen::MatrixXd& curves, double sigma);

/// Top-m eigenvectors of the sample covariance (1/(N-1)) of the (smoothed)
/// curves, one curve per row. Each component's largest-magnitude entry is
/// made positive.
PcaBasis fit_pca(const Eigen::MatrixXd& curves, int modes, const PcaOptions& options = {});

Eigen::VectorXd project(const PcaBasis& basis, const Eigen::VectorXd& curve);
/// Projects every row; result is N x modes.
Eigen::MatrixXd project_rows(const PcaBasis& basis, const Eigen::MatrixXd& curves);
Eigen::VectorXd reconstruct(const PcaBasis& basis, const Eigen::VectorXd& coefficients);

struct NormalizedModes {
  /// N x m, each column mapped affinely onto [0, 1].
  Eigen::MatrixXd values;
  std::vector<double> mins;
  std::vector<double> maxs;
  /// Columns with zero range; mapped to 0.5.
  std::vector<bool> degenerate;
};

NormalizedModes normalize_modes(const Eigen::MatrixXd& coefficients, int modes);

nlohmann::json basis_to_json(const PcaBasis& basis);
PcaBasis basis_from_json(const nlohmann::json& j);

}  // namespace perfseg
