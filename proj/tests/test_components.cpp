#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <queue>
#include <random>

#include "perfseg/components.hpp"

using namespace perfseg;

namespace {

// Breadth-first flood fill over the 26-neighbourhood written out with
// explicit offsets.
std::vector<int> flood_fill_oracle(const GridDims& d, const std::vector<std::uint8_t>& mask,
                                   std::vector<std::size_t>& sizes) {
  std::vector<int> comp(mask.size(), -1);
  sizes.clear();
  for (std::size_t s = 0; s < mask.size(); ++s) {
    if (!mask[s] || comp[s] >= 0) continue;
    const int id = static_cast<int>(sizes.size());
    sizes.push_back(0);
    std::queue<std::size_t> q;
    q.push(s);
    comp[s] = id;
    while (!q.empty()) {
      const std::size_t v = q.front();
      q.pop();
      ++sizes[id];
      const int x = static_cast<int>(v % d[0]);
      const int y = static_cast<int>(v / d[0] % d[1]);
      const int z = static_cast<int>(v / (d[0] * d[1]));
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int a = x + dx, b = y + dy, c = z + dz;
            if (a < 0 || b < 0 || c < 0 || a >= d[0] || b >= d[1] || c >= d[2]) continue;
            const std::size_t n = a + static_cast<std::size_t>(d[0]) * (b + static_cast<std::size_t>(d[1]) * c);
            if (mask[n] && comp[n] < 0) {
              comp[n] = id;
              q.push(n);
            }
          }
    }
  }
  return comp;
}

}  // namespace

TEST_CASE("blobs of 100 and 5 voxels keep the 100-voxel blob") {
  const GridDims d{20, 20, 5};
  std::vector<std::uint8_t> mask(20 * 20 * 5, 0);
  auto at = [&](int x, int y, int z) -> std::uint8_t& { return mask[x + 20 * (y + 20 * z)]; };
  for (int z = 0; z < 4; ++z)
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 5; ++x) at(x, y, z) = 1;
  for (int x = 12; x < 17; ++x) at(x, 15, 3) = 1;
  const auto kept = largest_component(d, mask);
  CHECK(std::count(kept.begin(), kept.end(), 1) == 100);
  CHECK(at(14, 15, 3) == 1);
  CHECK(kept[14 + 20 * (15 + 20 * 3)] == 0);
}

TEST_CASE("diagonal contact is 26-connected") {
  const GridDims d{3, 3, 3};
  std::vector<std::uint8_t> mask(27, 0);
  mask[0] = 1;
  mask[1 + 3 * (1 + 3 * 1)] = 1;
  mask[2 + 3 * (2 + 3 * 2)] = 1;
  const auto kept = largest_component(d, mask);
  CHECK(std::count(kept.begin(), kept.end(), 1) == 3);
}

TEST_CASE("ties go to the component with the smallest first index") {
  const GridDims d{7, 1, 1};
  const std::vector<std::uint8_t> mask{0, 1, 1, 0, 0, 1, 1};
  const auto kept = largest_component(d, mask);
  CHECK(kept == std::vector<std::uint8_t>{0, 1, 1, 0, 0, 0, 0});
}

TEST_CASE("empty mask stays empty") {
  const std::vector<std::uint8_t> mask(8, 0);
  CHECK(largest_component({2, 2, 2}, mask) == mask);
}

TEST_CASE("largest component matches the flood-fill oracle on random masks") {
  std::mt19937 rng(2024);
  for (int trial = 0; trial < 40; ++trial) {
    const GridDims d{3 + static_cast<int>(rng() % 10), 3 + static_cast<int>(rng() % 10), 1 + static_cast<int>(rng() % 6)};
    const double density = 0.05 + 0.3 * (trial % 5) / 4.0;
    std::bernoulli_distribution on(density);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(d[0]) * d[1] * d[2]);
    for (auto& m : mask) m = on(rng);
    std::vector<std::size_t> sizes;
    const auto comp = flood_fill_oracle(d, mask, sizes);
    std::vector<std::uint8_t> expect(mask.size(), 0);
    if (!sizes.empty()) {
      // Components are discovered in increasing first-index order, so the
      // first maximum is the tie winner.
      const int best = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
      for (std::size_t i = 0; i < mask.size(); ++i) expect[i] = comp[i] == best;
    }
    CHECK(largest_component(d, mask) == expect);

    std::vector<int> keys(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) keys[i] = mask[i] ? 0 : -1;
    const auto lab = connected_components(d, keys);
    REQUIRE(lab.count() == static_cast<int>(sizes.size()));
    for (int c = 0; c < lab.count(); ++c) CHECK(lab.sizes[c] == sizes[c]);
    for (std::size_t i = 0; i < mask.size(); ++i) CHECK(lab.component[i] == comp[i]);
  }
}

TEST_CASE("components never join different keys") {
  const GridDims d{4, 1, 1};
  const std::vector<int> keys{0, 0, 1, 1};
  const auto lab = connected_components(d, keys);
  REQUIRE(lab.count() == 2);
  CHECK(lab.key == std::vector<int>{0, 1});
  CHECK(lab.first_voxel == std::vector<std::size_t>{0, 2});
}
