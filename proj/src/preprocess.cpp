#include "perfseg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "perfseg/error.hpp"

namespace perfseg {

double otsu_threshold(std::span<const double> values, int bins) {
  if (values.empty()) throw DataError("cannot threshold an empty sample set");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) throw DataError("cannot threshold: image has a single intensity");

  const double width = (hi - lo) / bins;
  std::vector<double> hist(bins, 0.0);
  for (double v : values) {
    const int b = std::min(bins - 1, static_cast<int>((v - lo) / width));
    hist[b] += 1.0;
  }
  const double total = static_cast<double>(values.size());
  double sum_all = 0.0;
  for (int b = 0; b < bins; ++b) sum_all += b * hist[b];

  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  int best_bin = 0;
  for (int b = 0; b < bins - 1; ++b) {
    w0 += hist[b];
    sum0 += b * hist[b];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double mu0 = sum0 / w0;
    const double mu1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (between > best) {
      best = between;
      best_bin = b;
    }
  }
  return lo + (best_bin + 1) * width;
}

namespace {

std::vector<double> time_mean(const Volume4D& v) {
  const auto& h = v.header();
  std::vector<double> mean(h.voxels(), 0.0);
  for (int t = 0; t < h.frames(); ++t)
    for (std::size_t i = 0; i < h.voxels(); ++i) mean[i] += v.sample(i, t);
  for (double& m : mean) m /= h.frames();
  return mean;
}

}  // namespace

Box otsu_bounding_box(const Volume4D& v) {
  const auto& h = v.header();
  const auto mean = time_mean(v);
  const double threshold = otsu_threshold(mean);
  Box box{{h.nx(), h.ny(), h.nz()}, {0, 0, 0}};
  for (std::size_t i = 0; i < mean.size(); ++i) {
    if (mean[i] <= threshold) continue;
    const auto c = h.coords(i);
    for (int a = 0; a < 3; ++a) {
      box.lo[a] = std::min(box.lo[a], c[a]);
      box.hi[a] = std::max(box.hi[a], c[a] + 1);
    }
  }
  if (box.empty()) throw DataError("cannot threshold: no foreground above Otsu level");
  return box;
}

Box otsu_roi(const Volume4D& v, const RoiShrink& shrink) {
  Box box = otsu_bounding_box(v);
  const int width = box.extent(0);
  const int height = box.extent(1);
  const int side = width / shrink.x_side_divisor;
  const int top = height / shrink.y_top_divisor;
  const int bottom = height / shrink.y_bottom_divisor;
  box.lo[0] += side;
  box.hi[0] -= side;
  if (shrink.top_is_row_zero) {
    box.lo[1] += top;
    box.hi[1] -= bottom;
  } else {
    box.lo[1] += bottom;
    box.hi[1] -= top;
  }
  if (box.empty()) throw DataError("ROI is empty after shrinking the Otsu box");
  return box;
}

int detect_injection(std::span<const double> mean_curve) {
  if (mean_curve.size() < 3) throw DataError("injection detection needs at least 3 frames");
  int best = 1;
  double best_rise = mean_curve[1] - mean_curve[0];
  for (std::size_t t = 2; t < mean_curve.size(); ++t) {
    const double rise = mean_curve[t] - mean_curve[t - 1];
    if (rise > best_rise) {
      best_rise = rise;
      best = static_cast<int>(t);
    }
  }
  return best;
}

int detect_injection(const Volume4D& v) {
  const auto& h = v.header();
  std::vector<double> mean(h.frames(), 0.0);
  for (int t = 0; t < h.frames(); ++t) {
    double s = 0.0;
    for (std::size_t i = 0; i < h.voxels(); ++i) s += v.sample(i, t);
    mean[t] = s / static_cast<double>(h.voxels());
  }
  return detect_injection(mean);
}

std::size_t SeVolume::air_count() const {
  return static_cast<std::size_t>(std::count(air.begin(), air.end(), std::uint8_t{1}));
}

double nearest_rank_percentile(std::vector<double> values, double percentile) {
  if (values.empty()) throw DataError("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

SeVolume to_se(const Volume4D& v, int injection_index, double percentile) {
  const auto& h = v.header();
  const int frames = h.frames();
  if (injection_index < 1 || injection_index >= frames) {
    throw DataError("injection index " + std::to_string(injection_index) +
                    " outside [1, T)");
  }
  const std::size_t nv = h.voxels();
  double max_intensity = 0.0;
  for (float f : v.data()) max_intensity = std::max(max_intensity, static_cast<double>(f));
  const double eps = 1e-6 * max_intensity;

  std::vector<double> se(h.samples(), 0.0);
  std::vector<std::uint8_t> air(nv, 0);
  std::vector<double> peak;
  peak.reserve(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    double baseline = 0.0;
    for (int t = 0; t < injection_index; ++t) baseline += v.sample(i, t);
    baseline /= injection_index;
    if (baseline <= eps) {
      air[i] = 1;
      continue;
    }
    double m = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < frames; ++t) {
      const double value = (v.sample(i, t) - baseline) / baseline;
      se[i + nv * t] = value;
      m = std::max(m, value);
    }
    peak.push_back(m);
  }
  if (peak.empty()) throw DataError("every voxel is below the air threshold");
  const double scale = nearest_rank_percentile(std::move(peak), percentile);
  if (!(scale > 0.0)) {
    throw DataError("SE normalisation scale is not positive (" + std::to_string(scale) + ")");
  }

  std::vector<float> data(se.size());
  for (std::size_t k = 0; k < se.size(); ++k) data[k] = static_cast<float>(se[k] / scale);
  SeVolume out;
  out.se = Volume4D(h, std::move(data));
  out.injection_index = injection_index;
  out.norm_scale = scale;
  out.air = std::move(air);
  out.roi = Box::full(h);
  out.source_header = h;
  return out;
}

std::vector<double> resample_curve(std::span<const double> values, double t0, double dt_src,
                                   double dt_target) {
  (void)t0;  // both grids start at t0
  const std::size_t n = values.size();
  if (n < 2) throw DataError("resampling needs at least 2 frames");
  const double span = (n - 1) * dt_src;
  const auto count = static_cast<std::size_t>(std::floor(span / dt_target + 1e-9)) + 1;
  std::vector<double> out(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double u = k * dt_target / dt_src;
    auto i = static_cast<std::size_t>(std::floor(u + 1e-9));
    if (i >= n - 1) {
      out[k] = values[n - 1];
      continue;
    }
    const double frac = u - static_cast<double>(i);
    out[k] = frac <= 1e-9 ? values[i] : values[i] + frac * (values[i + 1] - values[i]);
  }
  return out;
}

SeVolume resample_time(const SeVolume& v, double dt_target_s) {
  const auto& h = v.se.header();
  if (h.frames() < 2) throw DataError("resampling needs at least 2 frames");
  if (!(dt_target_s > 0.0)) throw ConfigError("target dt must be positive");
  if (std::fabs(h.dt_s - dt_target_s) <= 1e-12 * dt_target_s) return v;

  const std::size_t nv = h.voxels();
  std::vector<double> curve(h.frames());
  std::vector<std::vector<double>> resampled(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    for (int t = 0; t < h.frames(); ++t) curve[t] = v.se.sample(i, t);
    resampled[i] = resample_curve(curve, h.t0_s, h.dt_s, dt_target_s);
  }
  VolumeHeader out_h = h;
  out_h.dims[3] = static_cast<int>(resampled.empty() ? 1 : resampled[0].size());
  out_h.dt_s = dt_target_s;
  std::vector<float> data(out_h.samples());
  for (std::size_t i = 0; i < nv; ++i)
    for (int t = 0; t < out_h.frames(); ++t) data[i + nv * t] = static_cast<float>(resampled[i][t]);

  SeVolume out = v;
  out.se = Volume4D(out_h, std::move(data));
  const double inj_time = v.injection_index * h.dt_s;
  out.injection_index = std::clamp(static_cast<int>(std::ceil(inj_time / dt_target_s - 1e-9)), 1,
                                   std::max(1, out_h.frames() - 1));
  return out;
}

SeVolume preprocess(const Volume4D& raw, const PreprocessOptions& options) {
  const int injection = detect_injection(raw);
  const Box roi = options.roi ? *options.roi : otsu_roi(raw, options.shrink);
  SeVolume se = to_se(crop(raw, roi), injection, options.percentile);
  se.roi = roi;
  se.source_header = raw.header();
  return resample_time(se, options.dt_target_s);
}

nlohmann::json box_to_json(const Box& b) {
  return {b.lo[0], b.hi[0], b.lo[1], b.hi[1], b.lo[2], b.hi[2]};
}

Box box_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::array<int, 6>>();
  return {{v[0], v[2], v[4]}, {v[1], v[3], v[5]}};
}

void write_se(const SeVolume& v, const std::filesystem::path& header_path) {
  std::vector<std::size_t> air_voxels;
  for (std::size_t i = 0; i < v.air.size(); ++i)
    if (v.air[i]) air_voxels.push_back(i);
  nlohmann::json meta = {{"injection_index", v.injection_index},
                         {"norm_scale", v.norm_scale},
                         {"roi", box_to_json(v.roi)},
                         {"source", header_to_json(v.source_header, "scalar")},
                         {"air_voxels", air_voxels}};
  write_volume(v.se, header_path, {{"se", meta}});
}

SeVolume read_se(const std::filesystem::path& header_path) {
  const auto j = read_header_json(header_path);
  if (!j.contains("se")) {
    throw MalformedInputError(header_path.string() + " carries no SE metadata");
  }
  SeVolume out;
  out.se = read_volume(header_path);
  const auto& meta = j["se"];
  try {
    out.injection_index = meta.at("injection_index").get<int>();
    out.norm_scale = meta.at("norm_scale").get<double>();
    out.roi = box_from_json(meta.at("roi"));
    out.source_header = header_from_json(meta.at("source"));
    out.air.assign(out.se.header().voxels(), 0);
    for (auto i : meta.at("air_voxels").get<std::vector<std::size_t>>()) {
      if (i >= out.air.size()) throw MalformedInputError("air voxel index out of range");
      out.air[i] = 1;
    }
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInputError(header_path.string() + ": bad SE metadata: " + e.what());
  }
  return out;
}

}  // namespace perfseg
