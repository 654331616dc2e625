#pragma once

// Linear discriminant analysis over supervoxel features, and the training
// labels derived from partial overlaps with an expert mask.

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "perfseg/supervoxel.hpp"
#include "perfseg/volume.hpp"

namespace perfseg {

enum class PriorMode { kFrequency, kUniform };

struct LdaOptions {
  /// Ridge added to the pooled covariance diagonal, relative to trace / d.
  double ridge = 1e-4;
  PriorMode priors = PriorMode::kFrequency;
  /// Width of the probability rows; labels must lie in [0, n_classes).
  int n_classes = kTissueCount;
};

struct LdaModel {
  /// Class ids seen in training, ascending. Other ids get probability 0.
  std::vector<int> classes;
  Eigen::MatrixXd means;       // classes x d
  Eigen::MatrixXd covariance;  // d x d, ridge included
  Eigen::VectorXd priors;      // per entry of `classes`
  double ridge = 0.0;
  int n_classes = kTissueCount;

  int dims() const { return static_cast<int>(means.cols()); }
};

/// Class means, pooled within-class covariance (1/(N-K)) plus ridge, priors.
/// Classes without samples are left out; a class with a single sample is an
/// error.
LdaModel train_lda(const Eigen::MatrixXd& x, std::span<const int> y, const LdaOptions& options = {});

/// Linear discriminant per trained class: x' S^-1 mu - mu' S^-1 mu / 2 + log prior.
Eigen::MatrixXd discriminant_scores(const LdaModel& model, const Eigen::MatrixXd& x);

struct PartPotentials {
  /// One row per supervoxel, one column per tissue id; rows sum to 1.
  Eigen::MatrixXd prob;

  int count() const { return static_cast<int>(prob.rows()); }
  Eigen::VectorXd column(Tissue t) const { return prob.col(static_cast<int>(t)); }
};

/// Softmax of the discriminant scores.
PartPotentials predict_proba(const LdaModel& model, const Eigen::MatrixXd& x);

/// Per supervoxel: the part whose overlap fraction reaches 0.5, else a
/// two-class LDA on mean coefficients decides supervoxels with 10-50%
/// overlap, else background.
std::vector<int> make_training_labels(const SupervoxelMap& map, const LabelVolume& expert,
                                      const Eigen::MatrixXd& coeffs,
                                      std::vector<std::string>* warnings = nullptr);

nlohmann::json lda_to_json(const LdaModel& model);
LdaModel lda_from_json(const nlohmann::json& j);

}  // namespace perfseg
