#pragma once

// Scalar and label volumes on a regular grid, plus their on-disk format.
//
// Layout is x fastest, then y, z, t:
//   index = x + X * (y + Y * (z + Z * t))
// Every module in the library uses this convention.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace perfseg {

enum class Tissue : std::uint8_t {
  kBackground = 0,
  kTumour = 1,
  kLumen = 2,
  kBladder = 3,
};

inline constexpr int kTissueCount = 4;

const std::map<std::uint8_t, std::string>& default_legend();

struct VolumeHeader {
  std::array<int, 4> dims{1, 1, 1, 1};
  std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
  double dt_s = 1.0;
  double t0_s = 0.0;

  int nx() const { return dims[0]; }
  int ny() const { return dims[1]; }
  int nz() const { return dims[2]; }
  int frames() const { return dims[3]; }
  std::size_t voxels() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  std::size_t samples() const { return voxels() * dims[3]; }
  double time_of(int frame) const { return t0_s + frame * dt_s; }
  double voxel_volume_mm3() const {
    return spacing_mm[0] * spacing_mm[1] * spacing_mm[2];
  }
  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(y) +
                static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(z));
  }
  std::array<int, 3> coords(std::size_t voxel) const;
  /// Physical position of a voxel centre; the grid origin sits at (0,0,0) mm.
  std::array<double, 3> position_mm(std::size_t voxel) const;

  /// Throws MalformedInputError when a dimension or spacing is invalid.
  void validate() const;
  /// Same header with T = 1.
  VolumeHeader spatial() const;

  bool operator==(const VolumeHeader&) const = default;
};

/// Inclusive-exclusive spatial index box.
struct Box {
  std::array<int, 3> lo{0, 0, 0};
  std::array<int, 3> hi{0, 0, 0};

  static Box full(const VolumeHeader& h) { return {{0, 0, 0}, {h.nx(), h.ny(), h.nz()}}; }
  int extent(int axis) const { return hi[axis] - lo[axis]; }
  std::size_t voxels() const {
    return empty() ? 0
                   : static_cast<std::size_t>(extent(0)) * extent(1) * extent(2);
  }
  bool empty() const { return extent(0) <= 0 || extent(1) <= 0 || extent(2) <= 0; }
  bool contains(int x, int y, int z) const {
    return x >= lo[0] && x < hi[0] && y >= lo[1] && y < hi[1] && z >= lo[2] && z < hi[2];
  }
  bool contains(const Box& other) const;

  bool operator==(const Box&) const = default;
};

class Volume4D {
 public:
  Volume4D() = default;
  /// Zero-filled volume.
  explicit Volume4D(VolumeHeader header);
  /// Validates the header, the data length and finiteness of every sample.
  Volume4D(VolumeHeader header, std::vector<float> data);

  const VolumeHeader& header() const { return header_; }
  std::span<const float> data() const { return data_; }
  std::size_t size() const { return data_.size(); }

  float at(int x, int y, int z, int t = 0) const {
    return data_[header_.index(x, y, z) + header_.voxels() * static_cast<std::size_t>(t)];
  }
  float sample(std::size_t voxel, int t) const {
    return data_[voxel + header_.voxels() * static_cast<std::size_t>(t)];
  }

  bool operator==(const Volume4D&) const = default;

 private:
  VolumeHeader header_;
  std::vector<float> data_;
};

class LabelVolume {
 public:
  LabelVolume() = default;
  explicit LabelVolume(VolumeHeader header);
  LabelVolume(VolumeHeader header, std::vector<std::uint8_t> labels,
              std::map<std::uint8_t, std::string> legend = default_legend());

  const VolumeHeader& header() const { return header_; }
  std::span<const std::uint8_t> labels() const { return labels_; }
  const std::map<std::uint8_t, std::string>& legend() const { return legend_; }
  std::uint8_t at(int x, int y, int z) const { return labels_[header_.index(x, y, z)]; }

  /// Binary mask of one label value.
  std::vector<std::uint8_t> mask_of(std::uint8_t label) const;

  bool operator==(const LabelVolume&) const = default;

 private:
  VolumeHeader header_;
  std::vector<std::uint8_t> labels_;
  std::map<std::uint8_t, std::string> legend_;
};

// --- cropping -------------------------------------------------------------

Volume4D crop(const Volume4D& v, const Box& box);
LabelVolume crop(const LabelVolume& v, const Box& box);
/// Places a cropped label volume back into a zero-filled grid of `full`.
LabelVolume embed(const LabelVolume& cropped, const Box& box, const VolumeHeader& full);
std::vector<double> embed(std::span<const double> cropped, const Box& box,
                          const VolumeHeader& full, double fill = 0.0);

// --- I/O --------------------------------------------------------------------
//
// A volume is a JSON header plus a raw little-endian payload sharing the
// basename ("scan.json" + "scan.raw").  Scalars are float32, labels uint8.

std::filesystem::path raw_path_for(const std::filesystem::path& header_path);

nlohmann::json header_to_json(const VolumeHeader& h, const std::string& kind);
VolumeHeader header_from_json(const nlohmann::json& j);
nlohmann::json read_header_json(const std::filesystem::path& header_path);

Volume4D read_volume(const std::filesystem::path& header_path);
/// `extra` keys are merged into the header JSON (used for sidecar metadata).
void write_volume(const Volume4D& v, const std::filesystem::path& header_path,
                  const nlohmann::json& extra = nlohmann::json::object());

LabelVolume read_labels(const std::filesystem::path& header_path);
void write_labels(const LabelVolume& v, const std::filesystem::path& header_path,
                  const nlohmann::json& extra = nlohmann::json::object());

/// Minimal NIfTI-1 single-file reader (".nii", magic "n+1"): float32,
/// int16 and uint8 payloads, converted to float on read.
Volume4D read_nifti(const std::filesystem::path& path);

/// Dispatches on extension: ".nii" goes through read_nifti, anything else
/// through read_volume.
Volume4D load_volume(const std::filesystem::path& path);

// Little-endian helpers shared by the readers and writers.
void append_le_f32(std::vector<char>& out, float value);
float read_le_f32(const char* bytes);

}  // namespace perfseg
