#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "perfseg/error.hpp"
#include "perfseg/evaluate.hpp"

using namespace perfseg;

namespace {

// Probability that a random positive outscores a random negative, ties half.
double mann_whitney(const std::vector<double>& b, const std::vector<std::uint8_t>& t) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (!t[i]) continue;
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (t[j]) continue;
      wins += b[i] > b[j] ? 1.0 : b[i] == b[j] ? 0.5 : 0.0;
      pairs += 1.0;
    }
  }
  return wins / pairs;
}

}  // namespace

TEST_CASE("DSC identities") {
  const std::vector<std::uint8_t> a{1, 1, 0, 0}, b{0, 0, 1, 1}, half{1, 0, 0, 0}, empty(4, 0);
  CHECK(dsc(a, a) == 1.0);
  CHECK(dsc(a, b) == 0.0);
  // 2 * 1 / (2 + 2)
  CHECK(dsc(a, std::vector<std::uint8_t>{1, 0, 1, 0}) == 0.5);
  CHECK(dsc(a, half) == doctest::Approx(2.0 / 3.0));
  CHECK(dsc(empty, empty) == 1.0);
  CHECK(dsc(a, empty) == 0.0);
  CHECK(dsc(std::vector<std::uint8_t>{3, 0}, std::vector<std::uint8_t>{1, 0}) == 1.0);
  CHECK_THROWS_AS(dsc(a, std::vector<std::uint8_t>{1}), DataError);
}

TEST_CASE("confusion counts") {
  const std::vector<std::uint8_t> seg{1, 1, 0, 0, 1}, truth{1, 0, 1, 0, 1};
  const auto c = confusion(seg, truth);
  CHECK(c.tp == 2);
  CHECK(c.fp == 1);
  CHECK(c.fn == 1);
  CHECK(c.tn == 1);
  CHECK(c.sensitivity() == doctest::Approx(2.0 / 3.0));
  CHECK(c.specificity() == 0.5);
  CHECK(Confusion{}.sensitivity() == 0.0);
}

TEST_CASE("thresholding keeps the largest 26-connected component") {
  VolumeHeader h;
  h.dims = {6, 6, 1, 1};
  std::vector<double> b(36, 0.0);
  // Diagonal chain of three (one 26-component) and a pair far away.
  b[0] = b[7] = b[14] = 0.9;
  b[5] = b[11] = 0.8;
  const auto r = threshold_and_lcc(b, h, 0.5);
  CHECK(r.voxels == 3);
  CHECK(r.mask.labels()[14] == 1);
  CHECK(r.mask.labels()[5] == 0);
  const auto all = threshold_and_lcc(b, h, 0.5, false);
  CHECK(all.voxels == 5);
  CHECK(threshold_and_lcc(b, h, 0.8).voxels == 3);
  const auto none = threshold_and_lcc(b, h, 0.95);
  CHECK(none.no_detection);
  CHECK(none.voxels == 0);
  CHECK_THROWS_AS(threshold_and_lcc(b, h, 1.5), ConfigError);
  CHECK_THROWS_AS(threshold_and_lcc(std::vector<double>(3), h, 0.5), DataError);
}

TEST_CASE("ROC and AUC") {
  SUBCASE("separable beliefs") {
    const std::vector<double> b{0.9, 0.8, 0.3, 0.1};
    const std::vector<std::uint8_t> t{1, 1, 0, 0};
    const auto c = roc(b, t);
    CHECK(c.auc == 1.0);
    CHECK(c.points.front().sensitivity == 0.0);
    CHECK(c.points.front().specificity == 1.0);
    CHECK(c.points.back().sensitivity == 1.0);
    CHECK(c.points.back().specificity == 0.0);
    for (std::size_t i = 1; i < c.points.size(); ++i) CHECK(c.points[i].threshold < c.points[i - 1].threshold);
  }
  SUBCASE("constant beliefs") {
    const std::vector<double> b(10, 0.4);
    std::vector<std::uint8_t> t(10, 0);
    t[2] = t[7] = t[8] = 1;
    CHECK(std::fabs(roc(b, t).auc - 0.5) <= 1e-12);
  }
  SUBCASE("inverted beliefs") {
    CHECK(roc(std::vector<double>{0.1, 0.9}, std::vector<std::uint8_t>{1, 0}).auc == 0.0);
  }
  SUBCASE("matches the pairwise comparison probability") {
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<double> b(400);
      std::vector<std::uint8_t> t(400);
      for (std::size_t i = 0; i < b.size(); ++i) {
        t[i] = u(rng) < 0.3;
        // Rounded so ties occur.
        b[i] = std::round((0.3 * t[i] + 0.7 * u(rng)) * 50.0) / 50.0;
      }
      CHECK(std::fabs(roc(b, t).auc - mann_whitney(b, t)) < 1e-6);
    }
  }
  SUBCASE("monotone transforms leave the AUC unchanged") {
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> b(300), sq(300);
    std::vector<std::uint8_t> t(300);
    for (std::size_t i = 0; i < b.size(); ++i) {
      t[i] = u(rng) < 0.5;
      b[i] = 0.5 * u(rng) + 0.3 * t[i];
      sq[i] = b[i] * b[i];
    }
    CHECK(roc(b, t).auc == doctest::Approx(roc(sq, t).auc).epsilon(1e-12));
  }
  SUBCASE("threshold subsampling") {
    std::vector<double> b(5000);
    std::vector<std::uint8_t> t(5000);
    for (std::size_t i = 0; i < b.size(); ++i) {
      b[i] = static_cast<double>(i) / 5000.0;
      t[i] = i >= 2500;
    }
    const auto c = roc(b, t, 100);
    CHECK(c.points.size() <= 103);
    CHECK(c.auc > 0.999);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(roc(std::vector<double>{0.1, 0.2}, std::vector<std::uint8_t>{1, 1}), DataError);
    CHECK_THROWS_AS(roc(std::vector<double>{0.1}, std::vector<std::uint8_t>{1, 0}), DataError);
    CHECK_THROWS_AS(roc(std::vector<double>{0.1, 0.2}, std::vector<std::uint8_t>{1, 0}, 1), ConfigError);
  }
}

TEST_CASE("detection flag and formatting") {
  CHECK(!detection_flag(0.2));
  CHECK(detection_flag(0.2000001));
  CHECK(format_metric(0.5) == "0.500000");
  CHECK(format_metric(2.0 / 3.0) == "0.666667");
  std::ostringstream os;
  write_roc_csv(roc(std::vector<double>{0.9, 0.1}, std::vector<std::uint8_t>{1, 0}), os);
  const auto text = os.str();
  CHECK(text.rfind("threshold,sens,spec\n", 0) == 0);
  CHECK(text.find("\n0.90000000000000002,1.000000,1.000000\n") != std::string::npos);
}
