#include "perfseg/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "perfseg/components.hpp"
#include "perfseg/error.hpp"

namespace perfseg {

ThresholdResult threshold_and_lcc(std::span<const double> belief, const VolumeHeader& grid, double t,
                                  bool keep_largest) {
  if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("threshold must lie in [0, 1]");
  const VolumeHeader h = grid.spatial();
  if (belief.size() != h.voxels()) throw DataError("belief map does not match the grid");
  std::vector<std::uint8_t> mask(belief.size(), 0);
  for (std::size_t i = 0; i < belief.size(); ++i) mask[i] = belief[i] >= t ? 1 : 0;
  if (keep_largest) mask = largest_component({h.nx(), h.ny(), h.nz()}, mask);
  ThresholdResult out;
  out.voxels = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
  out.no_detection = out.voxels == 0;
  out.mask = LabelVolume(h, std::move(mask));
  return out;
}

double dsc(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) throw DataError("DSC of masks with different sizes");
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0, y = b[i] != 0;
    na += x;
    nb += y;
    both += x && y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

double Confusion::sensitivity() const {
  return tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
}

double Confusion::specificity() const {
  return tn + fp ? static_cast<double>(tn) / static_cast<double>(tn + fp) : 0.0;
}

Confusion confusion(std::span<const std::uint8_t> seg, std::span<const std::uint8_t> truth) {
  if (seg.size() != truth.size()) throw DataError("confusion counts of masks with different sizes");
  Confusion c;
  for (std::size_t i = 0; i < seg.size(); ++i) {
    const bool s = seg[i] != 0, t = truth[i] != 0;
    if (s && t) ++c.tp;
    else if (s) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

RocCurve roc(std::span<const double> belief, std::span<const std::uint8_t> truth, int n_thresholds) {
  if (belief.size() != truth.size()) throw DataError("ROC: beliefs and truth differ in size");
  if (n_thresholds < 2) throw ConfigError("ROC needs at least 2 thresholds");
  std::vector<std::pair<double, bool>> samples(belief.size());
  std::size_t positives = 0;
  for (std::size_t i = 0; i < belief.size(); ++i) {
    samples[i] = {belief[i], truth[i] != 0};
    positives += truth[i] != 0;
  }
  const std::size_t negatives = samples.size() - positives;
  if (positives == 0 || negatives == 0) throw DataError("ROC needs both positive and negative voxels");
  std::sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  std::vector<double> unique;
  for (const auto& s : samples)
    if (unique.empty() || s.first != unique.back()) unique.push_back(s.first);
  std::vector<double> thresholds;
  if (unique.size() > static_cast<std::size_t>(n_thresholds)) {
    const std::size_t u = unique.size();
    for (int i = 0; i < n_thresholds; ++i) {
      const auto idx = static_cast<std::size_t>(std::llround(static_cast<double>(i) * (u - 1) / (n_thresholds - 1)));
      thresholds.push_back(unique[idx]);
    }
  } else {
    thresholds = unique;
  }
  thresholds.push_back(0.0);
  thresholds.push_back(1.0);
  // The leading threshold sits above every belief so the curve starts at (0, 0).
  const double top = std::max(1.0, unique.front());
  thresholds.push_back(std::nextafter(top, std::numeric_limits<double>::infinity()));
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  RocCurve curve;
  std::size_t cursor = 0, tp = 0, fp = 0;
  for (double t : thresholds) {
    while (cursor < samples.size() && samples[cursor].first >= t) {
      samples[cursor].second ? ++tp : ++fp;
      ++cursor;
    }
    curve.points.push_back({t, static_cast<double>(tp) / static_cast<double>(positives),
                            static_cast<double>(negatives - fp) / static_cast<double>(negatives)});
  }
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    const double dx = (1.0 - b.specificity) - (1.0 - a.specificity);
    curve.auc += dx * 0.5 * (a.sensitivity + b.sensitivity);
  }
  return curve;
}

bool detection_flag(double dsc_value) { return dsc_value > 0.2; }

std::string format_metric(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", value);
  return buf;
}

void write_roc_csv(const RocCurve& curve, std::ostream& out) {
  out << "threshold,sens,spec\n";
  for (const auto& p : curve.points) {
    // Full precision keeps the sentinel just above 1 distinct from 1.
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", p.threshold);
    out << buf << ',' << format_metric(p.sensitivity) << ',' << format_metric(p.specificity) << '\n';
  }
}

}  // namespace perfseg
