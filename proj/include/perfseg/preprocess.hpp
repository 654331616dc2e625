#pragma once

// Raw dynamic scan -> normalised signal-enhancement (SE) volume.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "perfseg/volume.hpp"

namespace perfseg {

/// Fractions trimmed from the Otsu bounding box, stored as divisors so the
/// integer arithmetic floors exactly (width/3 per side, height/4 from the
/// top, height/8 from the bottom).
struct RoiShrink {
  int x_side_divisor = 3;
  int y_top_divisor = 4;
  int y_bottom_divisor = 8;
  /// Row 0 is the anatomical top of the image.
  bool top_is_row_zero = true;
};

/// Otsu threshold of a sample set (256-bin histogram over [min, max]).
/// Throws DataError when all values are equal.
double otsu_threshold(std::span<const double> values, int bins = 256);

/// Tight bounding box of voxels whose time-mean exceeds the Otsu threshold.
Box otsu_bounding_box(const Volume4D& v);

/// Otsu bounding box shrunk by `shrink`; z is left untouched.
Box otsu_roi(const Volume4D& v, const RoiShrink& shrink = {});

/// Frame of steepest rise of the spatial-mean signal, argmax over t in
/// [1, T) of mean(t) - mean(t-1). Earliest frame wins ties.
int detect_injection(const Volume4D& v);
int detect_injection(std::span<const double> mean_curve);

struct SeVolume {
  /// SE values (divided by norm_scale) on the analysed grid.
  Volume4D se;
  int injection_index = 1;
  double norm_scale = 1.0;
  /// Voxels whose baseline fell below the air threshold; their SE is 0.
  std::vector<std::uint8_t> air;
  /// Analysed region in the coordinates of the source scan.
  Box roi;
  VolumeHeader source_header;

  std::size_t air_count() const;
};

/// Per-voxel SE against the mean of frames [0, injection_index), scaled by
/// the nearest-rank 80th percentile of per-voxel maximum SE.
SeVolume to_se(const Volume4D& v, int injection_index, double percentile = 80.0);

/// Nearest-rank percentile (rank = ceil(p/100 * n)).
double nearest_rank_percentile(std::vector<double> values, double percentile);

/// Linear interpolation of each voxel curve onto t0 + k * dt_target_s.
SeVolume resample_time(const SeVolume& v, double dt_target_s = 12.0);

/// Resamples a single curve sampled at t0 + i * dt_src.
std::vector<double> resample_curve(std::span<const double> values, double t0, double dt_src,
                                   double dt_target);

struct PreprocessOptions {
  double dt_target_s = 12.0;
  /// Explicit region; Otsu ROI when empty.
  std::optional<Box> roi;
  RoiShrink shrink;
  double percentile = 80.0;
};

/// detect_injection -> ROI -> crop -> to_se -> resample_time.
SeVolume preprocess(const Volume4D& raw, const PreprocessOptions& options = {});

/// SE volume written as a scalar volume with an "se" metadata block.
void write_se(const SeVolume& v, const std::filesystem::path& header_path);
SeVolume read_se(const std::filesystem::path& header_path);

nlohmann::json box_to_json(const Box& b);
Box box_from_json(const nlohmann::json& j);

}  // namespace perfseg
