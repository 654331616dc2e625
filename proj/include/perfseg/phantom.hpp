#pragma once

// Synthetic dynamic phantoms with known tissue labels.
//
// Geometry is in mm with voxel (0,0,0) at the origin. A cylindrical body
// holds a lumen running along z, a tumour shell on part of the lumen wall,
// enhancing wall elsewhere around the lumen, and an ellipsoidal bladder.

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "perfseg/volume.hpp"

namespace perfseg {

struct Ellipsoid {
  std::array<double, 3> centre_mm{0.0, 0.0, 0.0};
  std::array<double, 3> radii_mm{1.0, 1.0, 1.0};

  bool contains(const std::array<double, 3>& p) const;
};

enum class Curve { kBackground, kWall, kTumour, kLumen, kBladder };

struct PhantomSpec {
  std::array<int, 4> dims{64, 64, 24, 20};
  std::array<double, 3> spacing_mm{1.0, 1.0, 2.0};
  double dt_s = 12.0;
  std::uint64_t seed = 1;
  double noise_sigma = 2.0;
  double baseline = 100.0;
  double air_level = 0.0;
  /// First frame with contrast.
  int injection_frame = 3;

  /// Body: elliptic cylinder along z.
  std::array<double, 2> body_centre_mm{31.5, 31.5};
  std::array<double, 2> body_radii_mm{31.0, 31.0};

  std::array<double, 2> lumen_centre_mm{32.0, 42.0};
  double lumen_radius_mm = 3.0;
  double wall_thickness_mm = 2.0;

  /// Tumour: shell between the lumen radius and tumour_outer_radius_mm,
  /// covering tumour_arc_deg around tumour_arc_centre_deg, over a z range.
  double tumour_outer_radius_mm = 7.5;
  double tumour_arc_deg = 270.0;
  double tumour_arc_centre_deg = 90.0;
  double tumour_z_centre_mm = 18.0;
  double tumour_z_half_mm = 8.0;

  Ellipsoid bladder{{32.0, 22.0, 34.0}, {9.0, 5.0, 10.0}};
  /// Tumour-like enhancing blob that is not tumour.
  std::optional<Ellipsoid> decoy;

  double background_amplitude = 0.1;
  double wall_amplitude = 0.5;
  double tumour_amplitude = 1.2;
  /// Per-voxel uniform amplitude factor in [1 - j, 1 + j].
  double tumour_jitter = 0.3;
  double bladder_amplitude = 1.0;
  /// Bladder ramp starts at this fraction of the scan duration.
  double bladder_start_fraction = 0.6;

  void validate() const;
};

/// Enhancement template (relative signal change) of a tissue at time t_s,
/// before any amplitude jitter.
double enhancement(const PhantomSpec& spec, Curve curve, double t_s);

struct Phantom {
  Volume4D scan;
  LabelVolume truth;
  /// Decoy voxels (labelled background in `truth`).
  std::vector<std::uint8_t> decoy;
};

/// Throws ConfigError when structures overlap or leave the body.
Phantom generate(const PhantomSpec& spec);

/// Moves the lumen and tumour together (x +-2, y +-3 mm), the tumour along
/// z (+-8 mm), rotates the tumour arc, and moves the bladder (x +-3, y +-2,
/// z +-10 mm).
PhantomSpec jitter_geometry(const PhantomSpec& base, std::uint64_t seed);

/// n jittered cases with per-case seeds derived from `seed`.
std::vector<PhantomSpec> cohort(int n, std::uint64_t seed, const PhantomSpec& base = {});

}  // namespace perfseg
