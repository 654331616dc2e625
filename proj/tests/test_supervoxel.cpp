#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <queue>
#include <random>
#include <set>

#include "perfseg/error.hpp"
#include "perfseg/supervoxel.hpp"
#include "test_util.hpp"

using namespace perfseg;
using perfseg::test::TempDir;

namespace {

VolumeHeader grid(int x, int y, int z, std::array<double, 3> spacing = {1.0, 1.0, 1.0}) {
  VolumeHeader h;
  h.dims = {x, y, z, 1};
  h.spacing_mm = spacing;
  return h;
}

// Number of 26-connected pieces of each label, by breadth-first search.
std::vector<int> pieces_per_label(const SupervoxelMap& m) {
  const auto& h = m.grid;
  std::vector<int> pieces(m.count(), 0);
  std::vector<char> seen(m.labels.size(), 0);
  for (std::size_t s = 0; s < m.labels.size(); ++s) {
    if (m.labels[s] < 0 || seen[s]) continue;
    const int l = m.labels[s];
    ++pieces[l];
    std::queue<std::size_t> q;
    q.push(s);
    seen[s] = 1;
    while (!q.empty()) {
      const auto c = h.coords(q.front());
      q.pop();
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int x = c[0] + dx, y = c[1] + dy, z = c[2] + dz;
            if (x < 0 || y < 0 || z < 0 || x >= h.nx() || y >= h.ny() || z >= h.nz()) continue;
            const auto n = h.index(x, y, z);
            if (!seen[n] && m.labels[n] == l) {
              seen[n] = 1;
              q.push(n);
            }
          }
    }
  }
  return pieces;
}

Eigen::MatrixXd smooth_random_features(const VolumeHeader& h, int n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 0.05);
  Eigen::MatrixXd f(static_cast<Eigen::Index>(h.voxels()), n);
  std::vector<std::array<double, 4>> waves(n);
  for (auto& w : waves) w = {u(rng) * 0.4, u(rng) * 0.4, u(rng) * 0.4, u(rng) * 6.0};
  for (std::size_t v = 0; v < h.voxels(); ++v) {
    const auto c = h.coords(v);
    for (int j = 0; j < n; ++j) {
      const auto& w = waves[j];
      const double s = std::sin(w[0] * c[0] + w[1] * c[1] + w[2] * c[2] + w[3]);
      f(static_cast<Eigen::Index>(v), j) = std::clamp(0.5 + 0.4 * s + g(rng), 0.0, 1.0);
    }
  }
  return f;
}

}  // namespace

TEST_CASE("SLIC distance") {
  const std::vector<double> a{0.0}, b{0.1};
  const double r = 7.0 / 0.05;
  const double d = slic_distance(a, b, {0, 0, 0}, {10, 0, 0}, r);
  CHECK(d == doctest::Approx(std::sqrt(0.1 * 0.1 + (10.0 / 140.0) * (10.0 / 140.0))).epsilon(1e-12));
  CHECK(d == doctest::Approx(0.12289).epsilon(1e-4));
  CHECK(slic_distance(a, a, {1, 2, 3}, {1, 2, 3}, r) == 0.0);
  // The feature term averages over the n features.
  const std::vector<double> p{0.0, 0.0, 0.0}, q{0.3, 0.0, 0.0};
  CHECK(slic_distance(p, q, {0, 0, 0}, {0, 0, 0}, 1.0) == doctest::Approx(std::sqrt(0.09 / 3.0)));
  // Large compactness r -> 0 is not reachable; tiny spatial weight leaves d_f.
  CHECK(slic_distance(a, b, {0, 0, 0}, {10, 0, 0}, 1e12) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("seed count and spacing") {
  CHECK(seed_count(350000, 350) == 1000);
  CHECK(seed_count(100, 350) == 1);
  CHECK(seed_count(699, 350) == 1);
  const auto h = grid(10, 10, 10, {1.0, 1.0, 2.0});
  CHECK(grid_spacing_mm(1000, h, 16) == doctest::Approx(std::cbrt(1000.0 * 2.0 / 16.0)));
}

TEST_CASE("parameter validation") {
  SlicParams p;
  p.size_voxels = 7;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.compactness = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p.compactness = 1.5;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  const auto h = grid(4, 4, 4);
  SlicParams big;
  big.size_voxels = 100;
  CHECK_THROWS_AS(run_slic(Eigen::MatrixXd::Zero(64, 1), h, big, Box::full(h)), DataError);
  CHECK_THROWS_AS(run_slic(Eigen::MatrixXd::Zero(63, 1), h, SlicParams{16}, Box::full(h)), DataError);
}

TEST_CASE("two homogeneous blocks with k = 2 split along the block boundary") {
  for (int boundary : {3, 4, 5}) {
    const auto h = grid(8, 4, 4);
    Eigen::MatrixXd f(128, 3);
    for (std::size_t v = 0; v < 128; ++v) {
      const double value = h.coords(v)[0] < boundary ? 0.1 : 0.9;
      f.row(static_cast<Eigen::Index>(v)).setConstant(value);
    }
    SlicParams p;
    p.size_voxels = 64;
    SlicDiagnostics d;
    const auto m = run_slic(f, h, p, Box::full(h), &d);
    CHECK(d.seeds == 2);
    REQUIRE(m.count() == 2);
    const int left = m.labels[0];
    for (std::size_t v = 0; v < 128; ++v) CHECK((m.labels[v] == left) == (h.coords(v)[0] < boundary));
    CHECK(m.sizes[left] == static_cast<std::size_t>(boundary * 16));
  }
}

TEST_CASE("invariants on random feature volumes") {
  for (unsigned seed = 1; seed <= 6; ++seed) {
    const auto h = grid(16, 14, 10, {1.0, 1.0, 1.5 + 0.1 * seed});
    const auto f = smooth_random_features(h, 3, seed);
    const Box roi{{1, 2, 0}, {15, 13, 9}};
    SlicParams p;
    p.size_voxels = 40 + 20 * static_cast<int>(seed);
    SlicDiagnostics d;
    const auto m = run_slic(f, h, p, roi, &d);
    // Seeds sit on a per-axis grid of round(extent / S) points.
    const int k = seed_count(roi.voxels(), p.size_voxels);
    const double s = grid_spacing_mm(roi.voxels(), h, k);
    int expected = 1;
    for (int a = 0; a < 3; ++a)
      expected *= std::max(1, static_cast<int>(std::lround(roi.extent(a) * h.spacing_mm[a] / s)));
    CHECK(d.grid_spacing_mm == doctest::Approx(s));
    CHECK(d.seeds == expected);

    std::size_t total = 0;
    for (auto s : m.sizes) total += s;
    CHECK(total == roi.voxels());
    for (std::size_t v = 0; v < h.voxels(); ++v) {
      const auto c = h.coords(v);
      if (roi.contains(c[0], c[1], c[2])) CHECK((m.labels[v] >= 0 && m.labels[v] < m.count()));
      else CHECK(m.labels[v] == -1);
    }
    for (int pieces : pieces_per_label(m)) CHECK(pieces == 1);
    for (std::size_t k = 1; k < d.energy.size(); ++k) CHECK(d.energy[k] <= d.energy[k - 1] + 1e-9);

    for (int i = 0; i < m.count(); ++i) {
      for (int j : m.adjacency[i]) {
        CHECK(j != i);
        CHECK(std::binary_search(m.adjacency[j].begin(), m.adjacency[j].end(), i));
      }
    }
    SupervoxelMap copy = m;
    compute_statistics(copy, f);
    CHECK(copy.sizes == m.sizes);
  }
}

TEST_CASE("constant features tile the seed grid") {
  for (int s : {100, 350, 900}) {
    const auto h = grid(32, 32, 16);
    const Eigen::MatrixXd f = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(h.voxels()), 3, 0.5);
    SlicParams p;
    p.size_voxels = s;
    const auto m = run_slic(f, h, p, Box::full(h));
    for (auto size : m.sizes) {
      CHECK(size >= static_cast<std::size_t>(s / 2));
      CHECK(size <= static_cast<std::size_t>(2 * s));
    }
  }
}

TEST_CASE("compactness does not roughen constant-feature supervoxels") {
  auto surface_ratio = [](const SupervoxelMap& m) {
    std::vector<double> faces(m.count(), 0.0);
    const auto& h = m.grid;
    for (std::size_t v = 0; v < m.labels.size(); ++v) {
      const auto c = h.coords(v);
      const int l = m.labels[v];
      const int d[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
      for (const auto& o : d) {
        const int x = c[0] + o[0], y = c[1] + o[1], z = c[2] + o[2];
        if (x < 0 || y < 0 || z < 0 || x >= h.nx() || y >= h.ny() || z >= h.nz() || m.labels[h.index(x, y, z)] != l)
          faces[l] += 1.0;
      }
    }
    double mean = 0.0;
    for (int i = 0; i < m.count(); ++i) mean += faces[i] / static_cast<double>(m.sizes[i]);
    return mean / m.count();
  };
  for (int trial = 0; trial < 5; ++trial) {
    const auto h = grid(20 + trial, 18, 12);
    const Eigen::MatrixXd f = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(h.voxels()), 3, 0.3);
    SlicParams lo, hi;
    lo.size_voxels = hi.size_voxels = 120;
    lo.compactness = 0.01;
    hi.compactness = 0.5;
    CHECK(surface_ratio(run_slic(f, h, hi, Box::full(h))) <= surface_ratio(run_slic(f, h, lo, Box::full(h))) + 1e-12);
  }
}

TEST_CASE("adjacency") {
  SUBCASE("two supervoxels sharing a face") {
    SupervoxelMap m;
    m.grid = grid(2, 1, 1);
    m.labels = {0, 1};
    compute_statistics(m, Eigen::MatrixXd::Zero(2, 1));
    build_adjacency(m);
    CHECK(m.adjacency[0] == std::vector<int>{1});
    CHECK(m.adjacency[1] == std::vector<int>{0});
  }
  SUBCASE("2x2 checkerboard of blocks") {
    SupervoxelMap m;
    m.grid = grid(4, 4, 1);
    m.labels.resize(16);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) m.labels[m.grid.index(x, y, 0)] = (x / 2) + 2 * (y / 2);
    compute_statistics(m, Eigen::MatrixXd::Zero(16, 1));
    build_adjacency(m);
    // Corner contact makes every block touch every other block.
    for (int i = 0; i < 4; ++i) CHECK(m.adjacency[i].size() == 3);
  }
  SUBCASE("symmetric on random label maps") {
    std::mt19937 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
      SupervoxelMap m;
      m.grid = grid(6, 5, 4);
      m.labels.resize(120);
      for (auto& l : m.labels) l = static_cast<int>(rng() % 7);
      std::set<int> used(m.labels.begin(), m.labels.end());
      if (used.size() != 7) continue;
      compute_statistics(m, Eigen::MatrixXd::Zero(120, 1));
      build_adjacency(m);
      for (int i = 0; i < 7; ++i)
        for (int j : m.adjacency[i]) CHECK(std::count(m.adjacency[j].begin(), m.adjacency[j].end(), i) == 1);
    }
  }
  SUBCASE("label gaps are rejected") {
    SupervoxelMap m;
    m.grid = grid(2, 1, 1);
    m.labels = {0, 2};
    CHECK_THROWS_AS(compute_statistics(m, Eigen::MatrixXd::Zero(2, 1)), DataError);
  }
}

TEST_CASE("supervoxel maps round-trip") {
  const auto h = grid(12, 10, 6);
  const auto f = smooth_random_features(h, 3, 9);
  SlicParams p;
  p.size_voxels = 60;
  const Box roi{{1, 1, 0}, {11, 10, 6}};
  const auto m = run_slic(f, h, p, roi);
  TempDir dir("sv");
  write_supervoxels(m, dir / "sv.json");
  const auto back = read_supervoxels(dir / "sv.json");
  CHECK(back.labels == m.labels);
  CHECK(back.sizes == m.sizes);
  CHECK(back.adjacency == m.adjacency);
  CHECK(back.grid == m.grid);
  for (int i = 0; i < m.count(); ++i)
    for (int a = 0; a < 3; ++a) CHECK(back.centroids_mm[i][a] == doctest::Approx(m.centroids_mm[i][a]));
  CHECK((back.mean_features - m.mean_features).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::filesystem::file_size(dir / "sv.raw") == 4 * h.voxels());
  CHECK_THROWS_AS(read_labels(dir / "sv.json"), MalformedInputError);
}
