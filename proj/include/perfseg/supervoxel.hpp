#pragma once

// Perfusion-supervoxels: SLIC clustering over an n-feature volume with a
// joint feature/spatial distance measured in millimetres.

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "perfseg/components.hpp"
#include "perfseg/volume.hpp"

namespace perfseg {

struct SlicParams {
  /// Mean voxels per supervoxel (S_n).
  int size_voxels = 350;
  /// Compactness c; the spatial term is scaled by r = S / c.
  double compactness = 0.05;
  int max_iters = 10;
  double tol_mm = 0.1;
  /// Classic SLIC moves each seed to the lowest-gradient voxel of its
  /// 3x3x3 neighbourhood. Off by default.
  bool perturb_seeds = false;

  void validate() const;
};

struct SupervoxelMap {
  VolumeHeader grid;  // T = 1
  /// Supervoxel id per voxel; -1 outside the ROI.
  std::vector<std::int32_t> labels;
  std::vector<std::array<double, 3>> centroids_mm;
  std::vector<std::size_t> sizes;
  /// count() x n_features.
  Eigen::MatrixXd mean_features;
  /// Sorted neighbour ids per supervoxel.
  std::vector<std::vector<int>> adjacency;

  int count() const { return static_cast<int>(sizes.size()); }
  GridDims dims() const { return {grid.nx(), grid.ny(), grid.nz()}; }
};

struct SlicDiagnostics {
  int seeds = 0;
  int iterations = 0;
  double grid_spacing_mm = 0.0;
  /// Energy sum(D^2) after each assignment and each update step, in order.
  std::vector<double> energy;
  /// Number of supervoxels before connectivity enforcement.
  int clusters_before_merge = 0;
};

/// D = sqrt(d_f^2 + (d_s / r)^2) with d_f^2 the mean squared feature
/// difference and d_s the Euclidean distance in mm.
double slic_distance(std::span<const double> b_i, std::span<const double> b_j,
                     const std::array<double, 3>& x_i, const std::array<double, 3>& x_j, double r);

/// floor(N_v / S_n), at least 1.
int seed_count(std::size_t roi_voxels, int size_voxels);

/// Isotropic seed spacing S = (N_v * dx * dy * dz / k)^(1/3) in mm.
double grid_spacing_mm(std::size_t roi_voxels, const VolumeHeader& grid, int seeds);

/// `features` holds one row per voxel of `grid` (rows outside `roi` are
/// ignored), values expected in [0, 1].
SupervoxelMap run_slic(const Eigen::MatrixXd& features, const VolumeHeader& grid,
                       const SlicParams& params, const Box& roi,
                       SlicDiagnostics* diagnostics = nullptr);

/// Recomputes sizes, centroids and mean features from the labels.
void compute_statistics(SupervoxelMap& map, const Eigen::MatrixXd& features);

/// Fills `adjacency` from 26-neighbourhood contacts.
void build_adjacency(SupervoxelMap& map);

/// Label raw (uint32, -1 stored as 0xFFFFFFFF) plus a JSON summary with
/// centroids, sizes, mean features and adjacency.
void write_supervoxels(const SupervoxelMap& map, const std::filesystem::path& header_path);
SupervoxelMap read_supervoxels(const std::filesystem::path& header_path);

}  // namespace perfseg
