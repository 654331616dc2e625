#include "perfseg/phantom.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "perfseg/error.hpp"

namespace perfseg {

bool Ellipsoid::contains(const std::array<double, 3>& p) const {
  double q = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double z = (p[a] - centre_mm[a]) / radii_mm[a];
    q += z * z;
  }
  return q <= 1.0;
}

void PhantomSpec::validate() const {
  for (int a = 0; a < 4; ++a)
    if (dims[a] < 1) throw ConfigError("phantom dims must be positive");
  if (dims[3] < 3) throw ConfigError("phantom needs at least 3 frames");
  for (double s : spacing_mm)
    if (!(s > 0.0)) throw ConfigError("phantom spacing must be positive");
  if (!(dt_s > 0.0)) throw ConfigError("phantom dt must be positive");
  if (noise_sigma < 0.0) throw ConfigError("noise sigma must be non-negative");
  if (!(baseline > 0.0)) throw ConfigError("baseline must be positive");
  if (injection_frame < 1 || injection_frame >= dims[3]) throw ConfigError("injection frame outside [1, T)");
  if (!(lumen_radius_mm > 0.0) || !(tumour_outer_radius_mm > lumen_radius_mm)) {
    throw ConfigError("tumour shell must lie outside the lumen");
  }
  if (tumour_jitter < 0.0 || tumour_jitter >= 1.0) throw ConfigError("tumour jitter must lie in [0, 1)");
  for (double r : bladder.radii_mm)
    if (!(r > 0.0)) throw ConfigError("bladder radii must be positive");
  if (decoy)
    for (double r : decoy->radii_mm)
      if (!(r > 0.0)) throw ConfigError("decoy radii must be positive");
}

double enhancement(const PhantomSpec& spec, Curve curve, double t_s) {
  const double onset = (spec.injection_frame - 1) * spec.dt_s;
  const double end = (spec.dims[3] - 1) * spec.dt_s;
  const double tau = t_s - onset;
  if (tau <= 0.0) return 0.0;
  switch (curve) {
    case Curve::kBackground:
      return spec.background_amplitude * tau / (end - onset);
    case Curve::kWall:
      return spec.wall_amplitude * (1.0 - std::exp(-tau / 60.0));
    case Curve::kTumour:
      return spec.tumour_amplitude * (1.0 - std::exp(-tau / 15.0)) * std::exp(-tau / 600.0);
    case Curve::kLumen:
      return 0.0;
    case Curve::kBladder: {
      const double start = spec.bladder_start_fraction * end;
      return t_s > start ? spec.bladder_amplitude * (t_s - start) / (end - start) : 0.0;
    }
  }
  return 0.0;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

enum class Region : std::uint8_t { kAir, kBackground, kWall, kTumour, kLumen, kBladder, kDecoy };

double angle_between_deg(double a, double b) {
  double d = std::fmod(std::fabs(a - b), 360.0);
  return d > 180.0 ? 360.0 - d : d;
}

}  // namespace

Phantom generate(const PhantomSpec& spec) {
  spec.validate();
  VolumeHeader h;
  h.dims = spec.dims;
  h.spacing_mm = spec.spacing_mm;
  h.dt_s = spec.dt_s;
  h.validate();
  const std::size_t nv = h.voxels();

  std::vector<Region> region(nv, Region::kAir);
  std::size_t clashes = 0, outside = 0;
  for (std::size_t v = 0; v < nv; ++v) {
    const auto p = h.position_mm(v);
    const double bx = (p[0] - spec.body_centre_mm[0]) / spec.body_radii_mm[0];
    const double by = (p[1] - spec.body_centre_mm[1]) / spec.body_radii_mm[1];
    const bool body = bx * bx + by * by <= 1.0;

    const double lx = p[0] - spec.lumen_centre_mm[0];
    const double ly = p[1] - spec.lumen_centre_mm[1];
    const double radius = std::hypot(lx, ly);
    const double angle = std::atan2(ly, lx) * 180.0 / std::numbers::pi;
    const bool in_tumour_z = std::fabs(p[2] - spec.tumour_z_centre_mm) <= spec.tumour_z_half_mm;
    const bool in_arc = angle_between_deg(angle, spec.tumour_arc_centre_deg) <= spec.tumour_arc_deg / 2.0;

    Region r = body ? Region::kBackground : Region::kAir;
    int claims = 0;
    if (radius <= spec.lumen_radius_mm) {
      r = Region::kLumen;
      ++claims;
    } else if (in_tumour_z && in_arc && radius <= spec.tumour_outer_radius_mm) {
      r = Region::kTumour;
      ++claims;
    } else if (radius <= spec.lumen_radius_mm + spec.wall_thickness_mm) {
      r = Region::kWall;
      ++claims;
    }
    if (spec.bladder.contains(p)) {
      r = Region::kBladder;
      ++claims;
    }
    if (spec.decoy && spec.decoy->contains(p)) {
      r = Region::kDecoy;
      ++claims;
    }
    if (claims > 1) ++clashes;
    if (claims > 0 && !body) ++outside;
    region[v] = r;
  }
  if (clashes) throw ConfigError("phantom structures overlap in " + std::to_string(clashes) + " voxels");
  if (outside) throw ConfigError("phantom structures leave the body in " + std::to_string(outside) + " voxels");

  std::vector<double> curves[5];
  for (int c = 0; c < 5; ++c) {
    curves[c].resize(spec.dims[3]);
    for (int t = 0; t < spec.dims[3]; ++t) curves[c][t] = enhancement(spec, static_cast<Curve>(c), h.time_of(t));
  }

  std::vector<float> data(h.samples());
  std::vector<std::uint8_t> labels(nv, 0), decoy(nv, 0);
  for (std::size_t v = 0; v < nv; ++v) {
    std::mt19937_64 rng(splitmix64(spec.seed ^ splitmix64(v)));
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> jitter(1.0 - spec.tumour_jitter, 1.0 + spec.tumour_jitter);
    const Region r = region[v];
    const std::vector<double>* curve = nullptr;
    double amplitude = 1.0;
    switch (r) {
      case Region::kAir: break;
      case Region::kBackground: curve = &curves[static_cast<int>(Curve::kBackground)]; break;
      case Region::kWall: curve = &curves[static_cast<int>(Curve::kWall)]; break;
      case Region::kLumen:
        curve = &curves[static_cast<int>(Curve::kLumen)];
        labels[v] = static_cast<std::uint8_t>(Tissue::kLumen);
        break;
      case Region::kBladder:
        curve = &curves[static_cast<int>(Curve::kBladder)];
        labels[v] = static_cast<std::uint8_t>(Tissue::kBladder);
        break;
      case Region::kTumour:
      case Region::kDecoy:
        curve = &curves[static_cast<int>(Curve::kTumour)];
        amplitude = jitter(rng);
        if (r == Region::kTumour) labels[v] = static_cast<std::uint8_t>(Tissue::kTumour);
        else decoy[v] = 1;
        break;
    }
    for (int t = 0; t < spec.dims[3]; ++t) {
      const double clean = curve ? spec.baseline * (1.0 + amplitude * (*curve)[t]) : spec.air_level;
      const double n = spec.noise_sigma > 0.0 ? spec.noise_sigma * noise(rng) : 0.0;
      data[v + nv * static_cast<std::size_t>(t)] = static_cast<float>(clean + n);
    }
  }
  Phantom out;
  out.scan = Volume4D(h, std::move(data));
  out.truth = LabelVolume(h.spatial(), std::move(labels));
  out.decoy = std::move(decoy);
  return out;
}

PhantomSpec jitter_geometry(const PhantomSpec& base, std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed));
  auto uniform = [&](double half) { return std::uniform_real_distribution<double>(-half, half)(rng); };
  PhantomSpec s = base;
  s.seed = seed;
  s.lumen_centre_mm[0] += uniform(2.0);
  s.lumen_centre_mm[1] += uniform(3.0);
  s.tumour_z_centre_mm += uniform(8.0);
  s.tumour_arc_centre_deg = std::uniform_real_distribution<double>(0.0, 360.0)(rng);
  s.bladder.centre_mm[0] += uniform(3.0);
  s.bladder.centre_mm[1] += uniform(2.0);
  s.bladder.centre_mm[2] += uniform(10.0);
  return s;
}

std::vector<PhantomSpec> cohort(int n, std::uint64_t seed, const PhantomSpec& base) {
  std::vector<PhantomSpec> out;
  for (int i = 0; i < n; ++i) out.push_back(jitter_geometry(base, splitmix64(seed + static_cast<std::uint64_t>(i))));
  return out;
}

}  // namespace perfseg
