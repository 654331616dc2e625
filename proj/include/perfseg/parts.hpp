#pragma once

// Pieces-of-parts: a star-shaped parts model (tumour root; lumen and
// bladder children) where every supervoxel is a candidate for every part.
// Exact two-pass belief propagation over the tree.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "perfseg/classifier.hpp"
#include "perfseg/supervoxel.hpp"

namespace perfseg {

/// Separable Gaussian over the child-minus-root centroid offset (mm).
struct OffsetGaussian {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> sigma{5.0, 5.0, 5.0};

  /// Unnormalised density exp(-|(d - mean) / sigma|^2 / 2).
  double density(const std::array<double, 3>& offset) const;
};

/// 1D Gaussian over a candidate's relative superior-inferior position
/// (z - z_centre) / z_extent.
struct LocationPrior {
  double mean = 0.0;
  double sigma = 1.0;

  double weight(double rel_z) const;
};

struct ChildPart {
  Tissue tissue = Tissue::kLumen;
  OffsetGaussian offset;
  std::optional<LocationPrior> location;
};

struct PartsModel {
  Tissue root = Tissue::kTumour;
  std::vector<ChildPart> children;
  double epsilon_msg = 1e-6;
  /// Exponents on the unary and pairwise factors (1, 1 is the plain product).
  double unary_weight = 1.0;
  double pairwise_weight = 1.0;

  void validate() const;
};

/// Candidate geometry for inference.
struct PartsCandidates {
  std::vector<std::array<double, 3>> centroids_mm;
  std::vector<double> rel_z;

  int count() const { return static_cast<int>(centroids_mm.size()); }
};

PartsCandidates candidates_from_map(const SupervoxelMap& map);

/// One training case: supervoxel centroids with their class labels.
struct SpatialCase {
  std::vector<std::array<double, 3>> centroids_mm;
  std::vector<int> labels;
  double z_centre_mm = 0.0;
  double z_extent_mm = 1.0;
};

SpatialCase spatial_case(const SupervoxelMap& map, std::vector<int> labels);

struct SpatialOptions {
  double sigma_floor_mm = 5.0;
  /// Floor for the location prior s.d., in units of the z extent.
  double location_sigma_floor = 0.05;
  bool bladder_location_prior = true;
};

/// Per-axis sample mean and s.d. (floored) of child-minus-root part centroid
/// offsets across cases.
PartsModel train_spatial(std::span<const SpatialCase> cases, const SpatialOptions& options = {},
                         std::vector<std::string>* warnings = nullptr);

struct BeliefMap {
  /// Root belief per candidate, max-normalised.
  std::vector<double> root;
  /// Per child (model order): belief per candidate, max-normalised.
  std::vector<std::vector<double>> child;
  /// Per child: m-_{c->r} after max-normalisation and flooring.
  std::vector<std::vector<double>> messages;
  /// Per child: every raw message was zero (messages sit at the floor).
  std::vector<bool> message_flat;
  /// Per child: belief is identically zero.
  std::vector<bool> child_zero;
  bool root_zero = false;
};

/// psi_c with the child's location prior applied.
std::vector<double> child_potential(const PartPotentials& pot, const PartsCandidates& cand,
                                    const ChildPart& child);

/// Leaves-to-root pass: fills root, messages and message_flat.
BeliefMap collect_evidence(const PartPotentials& pot, const PartsCandidates& cand, const PartsModel& model);

/// Root-to-leaves pass: fills child and child_zero.
void distribute_evidence(BeliefMap& beliefs, const PartPotentials& pot, const PartsCandidates& cand,
                         const PartsModel& model);

BeliefMap pieces_of_parts(const PartPotentials& pot, const PartsCandidates& cand, const PartsModel& model);

struct Marginals {
  std::vector<double> root;
  std::vector<std::vector<double>> child;
};

/// Exact marginals by summing over every assignment of distinct candidates
/// to the parts. At most 20 candidates.
Marginals enumerate_oracle(const PartPotentials& pot, const PartsCandidates& cand, const PartsModel& model);

nlohmann::json parts_to_json(const PartsModel& model);
PartsModel parts_from_json(const nlohmann::json& j);

}  // namespace perfseg
