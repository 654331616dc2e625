#pragma once

// End-to-end segmentation: preprocessing, perfusion-supervoxels, features,
// unaries, pieces-of-parts refinement, post-processing and evaluation, plus
// leave-one-out cross-validation over a set of cases.

#include <Eigen/Dense>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "perfseg/classifier.hpp"
#include "perfseg/evaluate.hpp"
#include "perfseg/features.hpp"
#include "perfseg/parts.hpp"
#include "perfseg/pca.hpp"
#include "perfseg/preprocess.hpp"
#include "perfseg/supervoxel.hpp"

namespace perfseg {

enum class RoiMode { kAuto, kFull, kBox };

struct PipelineConfig {
  SlicParams slic;
  double t_s = 0.5;
  double t_p = 0.15;
  double dt_target_s = 12.0;
  RoiMode roi_mode = RoiMode::kAuto;
  Box roi_box;
  RoiShrink shrink;
  double percentile = 80.0;
  double smoothing_sigma = 1.0;
  int clustering_modes = 3;
  GradientOrder gradient_order = GradientOrder::kAfterNormalization;
  double lda_ridge = 1e-4;
  SpatialOptions spatial;
  double epsilon_msg = 1e-6;
  double unary_weight = 1.0;
  double pairwise_weight = 1.0;
  int roc_thresholds = 1000;
  /// 0 picks the hardware concurrency.
  int threads = 0;
  bool keep_intermediates = false;

  /// Throws ConfigError naming the offending parameter.
  void validate() const;
  nlohmann::json to_json() const;
  /// Starts from `base` and overrides the keys present; unknown keys are
  /// a ConfigError.
  static PipelineConfig from_json(const nlohmann::json& j, const PipelineConfig& base);
  static PipelineConfig from_json(const nlohmann::json& j);
};

PipelineConfig load_config(const std::filesystem::path& path, const PipelineConfig& base = {});

/// Runs fn with errors re-raised as the same category, prefixed by the case
/// id and stage name.
void run_stage(const std::string& case_id, const std::string& stage, const std::function<void()>& fn);

/// Everything about a case that does not depend on training.
struct PreparedCase {
  std::string id;
  SeVolume se;
  /// Smoothed SE curves, one row per voxel of the analysed grid.
  Eigen::MatrixXd curves;
  PcaBasis clustering_basis;
  SupervoxelMap map;
  /// Expert labels on the analysed grid and on the source grid.
  std::optional<LabelVolume> truth;
  std::optional<LabelVolume> truth_full;
};

PreparedCase prepare_case(const std::string& id, const Volume4D& scan, const PipelineConfig& config,
                          std::optional<LabelVolume> truth = std::nullopt);
PreparedCase prepare_from_se(const std::string& id, SeVolume se, const PipelineConfig& config,
                             std::optional<LabelVolume> truth = std::nullopt);

/// SE curves of every voxel of the analysed grid, one row each, smoothed
/// with `sigma` samples.
Eigen::MatrixXd se_curves(const SeVolume& se, double sigma);

/// Truncates, or extends by holding the last sample, so rows have `length`
/// columns.
Eigen::MatrixXd fit_curve_length(const Eigen::MatrixXd& curves, int length);

/// Shared-basis coefficients (one row per voxel of the analysed grid).
Eigen::MatrixXd feature_coefficients(const PreparedCase& c, const PcaBasis& reference);

struct Model {
  PcaBasis reference;
  FeatureNormalization normalization;
  LdaModel lda;
  PartsModel parts;
  nlohmann::json params = nlohmann::json::object();
};

nlohmann::json model_to_json(const Model& m);
Model model_from_json(const nlohmann::json& j);
void save_model(const Model& m, const std::filesystem::path& path);
/// A missing or unreadable file is a ConfigError.
Model load_model(const std::filesystem::path& path);

/// The reference basis comes from the first case.
Model train_model(std::span<const PreparedCase* const> cases, const PipelineConfig& config,
                  std::vector<std::string>* warnings = nullptr);

struct CaseResult {
  std::string id;
  Eigen::MatrixXd features;
  PartPotentials unary;
  BeliefMap beliefs;
  /// Tumour unary and root belief per voxel of the source grid (0 outside the ROI).
  std::vector<double> unary_voxels;
  std::vector<double> pop_voxels;
  /// Unary >= T_s with and without the largest-component filter; root belief >= T_p.
  ThresholdResult seg_sv;
  ThresholdResult seg_sv_nopost;
  ThresholdResult seg_pop;
};

CaseResult segment_case(const PreparedCase& c, const Model& model, const PipelineConfig& config);

struct CaseMetrics {
  std::string id;
  double dsc_sv = 0.0;
  double dsc_sv_nopost = 0.0;
  double dsc_pop = 0.0;
  double sensitivity_pop = 0.0;
  double specificity_pop = 0.0;
  /// Over the analysed region; NaN when it holds no tumour or only tumour.
  double auc_sv = 0.0;
  double auc_pop = 0.0;
  bool detected_sv = false;
  bool detected_pop = false;
};

CaseMetrics evaluate_case(const PreparedCase& c, const CaseResult& r, const PipelineConfig& config);

struct CaseInput {
  std::string id;
  std::filesystem::path scan;
  std::optional<std::filesystem::path> truth;
};

/// Subdirectories holding scan.json (or scan.nii), with gt.json when present;
/// sorted by name.
std::vector<CaseInput> discover_cases(const std::filesystem::path& dir);

struct CrossvalReport {
  std::vector<CaseMetrics> cases;
  std::vector<std::string> warnings;
  double median_dsc_sv = 0.0;
  double median_dsc_sv_nopost = 0.0;
  double median_dsc_pop = 0.0;
  int detections_sv = 0;
  int detections_pop = 0;
};

/// Leave-one-out over prepared cases that carry ground truth (at least 3).
CrossvalReport crossval(std::span<const PreparedCase> cases, const PipelineConfig& config);

/// Loads and prepares each case (in parallel) and runs crossval. Cases
/// without ground truth are skipped with a warning.
CrossvalReport crossval(std::span<const CaseInput> inputs, const PipelineConfig& config);

void write_metrics_csv(const CrossvalReport& report, std::ostream& out);

/// Writes the SE volume, supervoxel map and (when given) the feature matrix
/// of a case into `dir`.
void write_intermediates(const std::filesystem::path& dir, const PreparedCase& c,
                         const CaseResult* result = nullptr);

double median(std::vector<double> values);

/// Calls fn(i) for i in [0, n) on up to `threads` workers; the exception of
/// the lowest failing index is rethrown.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace perfseg
