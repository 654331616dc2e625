#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "perfseg/error.hpp"
#include "perfseg/preprocess.hpp"
#include "test_util.hpp"

using namespace perfseg;
using perfseg::test::TempDir;

namespace {

Volume4D from_curves(int nx, int ny, int nz, const std::vector<std::vector<float>>& curves, double dt = 12.0) {
  VolumeHeader h;
  const int frames = static_cast<int>(curves.front().size());
  h.dims = {nx, ny, nz, frames};
  h.dt_s = dt;
  std::vector<float> data(h.samples());
  const std::size_t nv = h.voxels();
  for (std::size_t i = 0; i < nv; ++i)
    for (int t = 0; t < frames; ++t) data[i + nv * t] = curves[i][t];
  return Volume4D(h, std::move(data));
}

// Bright block on a dark background, static.
Volume4D block_image(int nx, int ny, Box fg) {
  VolumeHeader h;
  h.dims = {nx, ny, 1, 1};
  std::vector<float> data(h.voxels(), 5.0f);
  for (int y = 0; y < ny; ++y)
    for (int x = 0; x < nx; ++x)
      if (fg.contains(x, y, 0)) data[h.index(x, y, 0)] = 200.0f;
  return Volume4D(h, std::move(data));
}

}  // namespace

TEST_CASE("Otsu box shrink follows the integer fractions") {
  SUBCASE("width 120, height 80") {
    const auto v = block_image(130, 90, Box{{5, 0, 0}, {125, 80, 1}});
    CHECK(otsu_bounding_box(v) == Box{{5, 0, 0}, {125, 80, 1}});
    const Box roi = otsu_roi(v);
    CHECK(roi.extent(0) == 40);
    CHECK(roi.lo[0] == 45);
    CHECK(roi.lo[1] == 20);
    CHECK(roi.hi[1] == 70);
    CHECK(roi.lo[2] == 0);
    CHECK(roi.hi[2] == 1);
  }
  SUBCASE("fractions floor") {
    const auto v = block_image(40, 40, Box{{0, 3, 0}, {31, 34, 1}});
    const Box roi = otsu_roi(v);
    CHECK(roi.lo[0] == 10);
    CHECK(roi.hi[0] == 21);
    CHECK(roi.lo[1] == 3 + 7);
    CHECK(roi.hi[1] == 34 - 3);
  }
  SUBCASE("bottom-up row convention swaps the trims") {
    const auto v = block_image(130, 90, Box{{5, 0, 0}, {125, 80, 1}});
    RoiShrink s;
    s.top_is_row_zero = false;
    const Box roi = otsu_roi(v, s);
    CHECK(roi.lo[1] == 10);
    CHECK(roi.hi[1] == 60);
  }
  SUBCASE("ROI lies inside the Otsu box on random images") {
    std::mt19937 rng(9);
    for (int trial = 0; trial < 10; ++trial) {
      const int x0 = static_cast<int>(rng() % 10), y0 = static_cast<int>(rng() % 10);
      const Box fg{{x0, y0, 0}, {x0 + 12 + static_cast<int>(rng() % 20), y0 + 9 + static_cast<int>(rng() % 20), 1}};
      const auto v = block_image(50, 50, fg);
      CHECK(otsu_bounding_box(v).contains(otsu_roi(v)));
    }
  }
  SUBCASE("uniform image cannot be thresholded") {
    const auto v = block_image(10, 10, Box{});
    CHECK_THROWS_AS(otsu_roi(v), DataError);
  }
}

TEST_CASE("injection frame is the steepest rise of the mean curve") {
  CHECK(detect_injection(std::vector<double>{100, 100, 101, 150, 180}) == 3);
  CHECK(detect_injection(std::vector<double>{7, 7, 7, 7}) == 1);
  CHECK(detect_injection(std::vector<double>{1, 9, 9, 9}) == 1);
  CHECK_THROWS_AS(detect_injection(std::vector<double>{1, 2}), DataError);

  const auto v = from_curves(2, 1, 1, {{100, 100, 101, 150, 180}, {100, 100, 101, 150, 180}});
  CHECK(detect_injection(v) == 3);
}

TEST_CASE("signal enhancement") {
  SUBCASE("[100,100,200] with injection 2") {
    const auto se = to_se(from_curves(1, 1, 1, {{100, 100, 200}}), 2);
    CHECK(se.norm_scale == 1.0);
    CHECK(se.se.sample(0, 0) == 0.0f);
    CHECK(se.se.sample(0, 1) == 0.0f);
    CHECK(se.se.sample(0, 2) == 1.0f);
  }
  SUBCASE("air voxels are flagged and zero") {
    const auto se = to_se(from_curves(2, 1, 1, {{100, 100, 200}, {0, 0, 0}}), 2);
    CHECK(se.air == std::vector<std::uint8_t>{0, 1});
    for (int t = 0; t < 3; ++t) CHECK(se.se.sample(1, t) == 0.0f);
    CHECK(se.air_count() == 1);
  }
  SUBCASE("80th percentile of 2.0 halves every value") {
    // Peak SE values 0.5, 1, 1.5, 2, 4: nearest rank ceil(0.8 * 5) = 4 -> 2.0.
    const std::vector<float> peaks{0.5f, 1.0f, 1.5f, 2.0f, 4.0f};
    std::vector<std::vector<float>> curves;
    for (float p : peaks) curves.push_back({100.0f, 100.0f, 100.0f * (1.0f + p)});
    const auto se = to_se(from_curves(5, 1, 1, curves), 2);
    CHECK(se.norm_scale == 2.0);
    for (int i = 0; i < 5; ++i) CHECK(se.se.sample(i, 2) == doctest::Approx(peaks[i] / 2.0));
  }
  SUBCASE("baseline frames are exactly zero before scaling") {
    std::mt19937 rng(4);
    std::uniform_real_distribution<float> u(50.0f, 150.0f);
    std::vector<std::vector<float>> curves;
    for (int i = 0; i < 12; ++i) {
      const float b = u(rng);
      curves.push_back({b, b, b, b * 1.7f, b * (1.0f + static_cast<float>(i) / 10.0f)});
    }
    const auto se = to_se(from_curves(12, 1, 1, curves), 3);
    for (int i = 0; i < 12; ++i)
      for (int t = 0; t < 3; ++t) CHECK(se.se.sample(i, t) == 0.0f);
  }
  SUBCASE("non-positive scale is an error") {
    CHECK_THROWS_AS(to_se(from_curves(1, 1, 1, {{100, 100, 100}}), 2), DataError);
    CHECK_THROWS_AS(to_se(from_curves(1, 1, 1, {{100, 100, 200}}), 3), DataError);
  }
}

TEST_CASE("nearest-rank percentile") {
  CHECK(nearest_rank_percentile({5, 1, 4, 2, 3}, 80.0) == 4.0);
  CHECK(nearest_rank_percentile({5, 1, 4, 2, 3}, 100.0) == 5.0);
  CHECK(nearest_rank_percentile({10, 20, 30, 40}, 50.0) == 20.0);
  CHECK(nearest_rank_percentile({3}, 1.0) == 3.0);
}

TEST_CASE("linear resampling in time") {
  const auto r = resample_curve(std::vector<double>{0, 1, 2}, 0.0, 15.0, 12.0);
  REQUIRE(r.size() == 3);
  CHECK(r[0] == 0.0);
  CHECK(r[1] == doctest::Approx(0.8));
  CHECK(r[2] == doctest::Approx(1.6));

  std::mt19937 rng(17);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> curve(5 + trial % 7);
    for (auto& c : curve) c = n(rng);
    const double dt_src = 3.0 + trial;
    const auto same = resample_curve(curve, 0.0, dt_src, dt_src);
    REQUIRE(same.size() == curve.size());
    for (std::size_t i = 0; i < curve.size(); ++i) CHECK(same[i] == doctest::Approx(curve[i]).epsilon(1e-6));
    // A target that divides the span lands on both endpoints.
    const double span = dt_src * (curve.size() - 1);
    const auto r2 = resample_curve(curve, 0.0, dt_src, span / 4.0);
    REQUIRE(r2.size() == 5);
    CHECK(r2.front() == curve.front());
    CHECK(r2.back() == doctest::Approx(curve.back()).epsilon(1e-12));
  }
}

TEST_CASE("resample_time keeps a 12 s volume unchanged") {
  auto se = to_se(from_curves(2, 1, 1, {{100, 100, 150, 180}, {100, 100, 120, 190}}), 2);
  const auto same = resample_time(se, 12.0);
  CHECK(same.se == se.se);
  const auto coarse = resample_time(se, 18.0);
  CHECK(coarse.se.header().frames() == 3);
  CHECK(coarse.se.header().dt_s == 18.0);
  CHECK(coarse.se.sample(0, 1) == doctest::Approx(0.5 * (se.se.sample(0, 1) + se.se.sample(0, 2))));
}

TEST_CASE("preprocess chains ROI, SE and resampling, and SE files round-trip") {
  VolumeHeader h;
  h.dims = {12, 12, 2, 6};
  h.dt_s = 6.0;
  std::vector<float> data(h.samples());
  for (int t = 0; t < 6; ++t)
    for (int z = 0; z < 2; ++z)
      for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 12; ++x) {
          const bool body = x >= 2 && x < 11 && y >= 1 && y < 9;
          const float enh = t >= 3 ? 0.1f * static_cast<float>(x + t) : 0.0f;
          data[h.index(x, y, z) + h.voxels() * t] = body ? 100.0f * (1.0f + enh) : 1.0f;
        }
  const Volume4D raw(h, data);
  const auto se = preprocess(raw, {});
  CHECK(se.roi == otsu_roi(raw));
  CHECK(se.source_header == h);
  CHECK(se.se.header().dt_s == 12.0);
  CHECK(se.se.header().frames() == 3);
  CHECK(se.norm_scale > 0.0);

  PreprocessOptions full;
  full.roi = Box::full(h);
  full.dt_target_s = 6.0;
  const auto se_full = preprocess(raw, full);
  CHECK(se_full.se.header().nx() == 12);
  CHECK(se_full.air_count() == 0);

  TempDir dir("se");
  write_se(se, dir / "se.json");
  const auto back = read_se(dir / "se.json");
  CHECK(back.se == se.se);
  CHECK(back.roi == se.roi);
  CHECK(back.norm_scale == se.norm_scale);
  CHECK(back.injection_index == se.injection_index);
  CHECK(back.air == se.air);
  CHECK(back.source_header == se.source_header);
  CHECK_THROWS_AS(read_se(dir / "missing.json"), MalformedInputError);
}
