#pragma once

// Binary segmentation from belief maps, and overlap / ROC metrics.

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "perfseg/volume.hpp"

namespace perfseg {

struct ThresholdResult {
  /// Tumour = 1, everything else 0.
  LabelVolume mask;
  std::size_t voxels = 0;
  bool no_detection = false;
};

/// belief >= t, then (optionally) only the largest 26-connected component.
ThresholdResult threshold_and_lcc(std::span<const double> belief, const VolumeHeader& grid, double t,
                                  bool keep_largest = true);

/// Dice overlap of the non-zero voxels; two empty masks score 1.
double dsc(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  double sensitivity() const;
  double specificity() const;
};

Confusion confusion(std::span<const std::uint8_t> seg, std::span<const std::uint8_t> truth);

struct RocPoint {
  double threshold = 0.0;
  double sensitivity = 0.0;
  double specificity = 1.0;
};

struct RocCurve {
  /// Thresholds strictly decreasing; the first lies above every belief.
  std::vector<RocPoint> points;
  double auc = 0.0;
};

/// Sweeps the distinct belief values (evenly subsampled down to
/// n_thresholds when there are more), plus 0 and 1; AUC by trapezoid.
RocCurve roc(std::span<const double> belief, std::span<const std::uint8_t> truth, int n_thresholds = 1000);

/// DSC > 0.2.
bool detection_flag(double dsc_value);

/// Fixed six-decimal formatting used by every CSV writer.
std::string format_metric(double value);

void write_roc_csv(const RocCurve& curve, std::ostream& out);

}  // namespace perfseg
