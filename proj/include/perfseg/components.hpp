#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace perfseg {

using GridDims = std::array<int, 3>;

/// Calls fn(neighbor_index) for each in-bounds voxel of the 26-neighbourhood.
template <typename Fn>
void for_each_neighbor26(const GridDims& dims, std::size_t voxel, Fn&& fn) {
  const std::size_t nx = dims[0], ny = dims[1];
  const int x = static_cast<int>(voxel % nx);
  const int y = static_cast<int>((voxel / nx) % ny);
  const int z = static_cast<int>(voxel / (nx * ny));
  for (int dz = -1; dz <= 1; ++dz) {
    const int zz = z + dz;
    if (zz < 0 || zz >= dims[2]) continue;
    for (int dy = -1; dy <= 1; ++dy) {
      const int yy = y + dy;
      if (yy < 0 || yy >= dims[1]) continue;
      for (int dx = -1; dx <= 1; ++dx) {
        const int xx = x + dx;
        if (xx < 0 || xx >= dims[0] || (dx == 0 && dy == 0 && dz == 0)) continue;
        fn(static_cast<std::size_t>(xx) + nx * (static_cast<std::size_t>(yy) + ny * zz));
      }
    }
  }
}

struct ComponentLabeling {
  /// Component id per voxel, -1 where the key was negative.
  std::vector<int> component;
  std::vector<std::size_t> sizes;
  /// Smallest linear index in each component; increasing with component id.
  std::vector<std::size_t> first_voxel;
  /// Key shared by the component's voxels.
  std::vector<int> key;

  int count() const { return static_cast<int>(sizes.size()); }
};

/// 26-connected components of voxels sharing the same non-negative key.
ComponentLabeling connected_components(const GridDims& dims, std::span<const int> keys);

/// Keeps the largest 26-connected foreground component of a binary mask.
/// Ties go to the component with the smallest minimal linear index.
std::vector<std::uint8_t> largest_component(const GridDims& dims,
                                            std::span<const std::uint8_t> mask);

}  // namespace perfseg
