#include "perfseg/components.hpp"

#include <stdexcept>

namespace perfseg {

ComponentLabeling connected_components(const GridDims& dims, std::span<const int> keys) {
  const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  if (keys.size() != n) throw std::invalid_argument("connected_components: size mismatch");
  ComponentLabeling out;
  out.component.assign(n, -1);
  std::vector<std::size_t> stack;
  for (std::size_t seed = 0; seed < n; ++seed) {
    if (keys[seed] < 0 || out.component[seed] >= 0) continue;
    const int id = out.count();
    const int key = keys[seed];
    out.component[seed] = id;
    out.first_voxel.push_back(seed);
    out.key.push_back(key);
    std::size_t size = 0;
    stack.assign(1, seed);
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      ++size;
      for_each_neighbor26(dims, v, [&](std::size_t w) {
        if (keys[w] == key && out.component[w] < 0) {
          out.component[w] = id;
          stack.push_back(w);
        }
      });
    }
    out.sizes.push_back(size);
  }
  return out;
}

std::vector<std::uint8_t> largest_component(const GridDims& dims,
                                            std::span<const std::uint8_t> mask) {
  std::vector<int> keys(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) keys[i] = mask[i] ? 0 : -1;
  const auto cc = connected_components(dims, keys);
  std::vector<std::uint8_t> out(mask.size(), 0);
  if (cc.count() == 0) return out;
  int best = 0;
  // Components are numbered in order of first voxel, so strict > keeps the
  // earliest one on ties.
  for (int c = 1; c < cc.count(); ++c) {
    if (cc.sizes[c] > cc.sizes[best]) best = c;
  }
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = cc.component[i] == best ? 1 : 0;
  return out;
}

}  // namespace perfseg
