#include "perfseg/features.hpp"

#include <algorithm>
#include <cmath>

#include "perfseg/error.hpp"

namespace perfseg {

std::vector<std::string> feature_column_names() {
  std::vector<std::string> names;
  for (const char* prefix : {"mean_b", "sd_b", "grad_mean_b", "grad_sd_b"})
    for (int k = 1; k <= kFeatureModes; ++k) names.push_back(prefix + std::to_string(k));
  return names;
}

Eigen::MatrixXd supervoxel_stats(const SupervoxelMap& map, const Eigen::MatrixXd& coeffs) {
  if (static_cast<std::size_t>(coeffs.rows()) != map.labels.size()) {
    throw DataError("coefficient rows do not match the supervoxel grid");
  }
  const int m = static_cast<int>(coeffs.cols());
  const int n = map.count();
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(n, m);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(n);
  for (std::size_t v = 0; v < map.labels.size(); ++v) {
    const int l = map.labels[v];
    if (l < 0) continue;
    sum.row(l) += coeffs.row(static_cast<Eigen::Index>(v));
    count[l] += 1.0;
  }
  Eigen::MatrixXd mean = sum;
  for (int l = 0; l < n; ++l) {
    if (count[l] > 0.0) mean.row(l) /= count[l];
  }
  // Second pass on deviations keeps the variance numerically stable.
  Eigen::MatrixXd ss = Eigen::MatrixXd::Zero(n, m);
  for (std::size_t v = 0; v < map.labels.size(); ++v) {
    const int l = map.labels[v];
    if (l < 0) continue;
    const Eigen::RowVectorXd d = coeffs.row(static_cast<Eigen::Index>(v)) - mean.row(l);
    ss.row(l) += d.cwiseProduct(d);
  }
  Eigen::MatrixXd out(n, 2 * m);
  for (int l = 0; l < n; ++l) {
    out.row(l).head(m) = mean.row(l);
    for (int k = 0; k < m; ++k) out(l, m + k) = count[l] > 1.0 ? std::sqrt(ss(l, k) / (count[l] - 1.0)) : 0.0;
  }
  return out;
}

DirectionNeighbors direction_neighbors(const SupervoxelMap& map, int i) {
  DirectionNeighbors out;
  const auto& ci = map.centroids_mm[i];
  for (int slot = 0; slot < 6; ++slot) {
    const int axis = slot / 2;
    const double sign = slot % 2 == 0 ? 1.0 : -1.0;
    int best = i;
    double best_dot = 0.0;
    for (int j : map.adjacency[i]) {
      const auto& cj = map.centroids_mm[j];
      const double dx = cj[0] - ci[0], dy = cj[1] - ci[1], dz = cj[2] - ci[2];
      const double len = std::sqrt(dx * dx + dy * dy + dz * dz);
      if (!(len > 0.0)) continue;
      const std::array<double, 3> d{dx, dy, dz};
      const double dot = sign * d[axis] / len;
      if (dot > best_dot) {
        best_dot = dot;
        best = j;
      }
    }
    out[slot] = best;
  }
  return out;
}

std::vector<DirectionNeighbors> direction_neighbors(const SupervoxelMap& map) {
  std::vector<DirectionNeighbors> out(map.count());
  for (int i = 0; i < map.count(); ++i) out[i] = direction_neighbors(map, i);
  return out;
}

Eigen::MatrixXd neighborhood_gradient(const Eigen::MatrixXd& stats,
                                      std::span<const DirectionNeighbors> dirs) {
  if (static_cast<std::size_t>(stats.rows()) != dirs.size()) {
    throw DataError("direction table does not match the stats rows");
  }
  Eigen::MatrixXd out(stats.rows(), stats.cols());
  for (Eigen::Index i = 0; i < stats.rows(); ++i) {
    const auto& d = dirs[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < stats.cols(); ++k) {
      double acc = 0.0;
      for (int axis = 0; axis < 3; ++axis) {
        const double diff = stats(d[2 * axis], k) - stats(d[2 * axis + 1], k);
        acc += diff * diff;
      }
      out(i, k) = std::sqrt(acc);
    }
  }
  return out;
}

ColumnNormalization ColumnNormalization::fit(const Eigen::MatrixXd& rows) {
  if (rows.rows() == 0) throw DataError("cannot fit a normalisation on zero rows");
  ColumnNormalization n;
  for (Eigen::Index k = 0; k < rows.cols(); ++k) {
    const double lo = rows.col(k).minCoeff();
    const double hi = rows.col(k).maxCoeff();
    n.mins.push_back(lo);
    n.maxs.push_back(hi);
    n.degenerate.push_back(!(hi > lo));
  }
  return n;
}

Eigen::MatrixXd ColumnNormalization::apply(const Eigen::MatrixXd& rows, double lo, double hi) const {
  if (rows.cols() != columns()) {
    throw DataError("feature column count " + std::to_string(rows.cols()) + " does not match normalisation (" +
                    std::to_string(columns()) + ")");
  }
  Eigen::MatrixXd out(rows.rows(), rows.cols());
  for (Eigen::Index k = 0; k < rows.cols(); ++k) {
    if (degenerate[k]) {
      out.col(k).setConstant(0.5);
      continue;
    }
    const double range = maxs[k] - mins[k];
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
      out(i, k) = std::clamp((rows(i, k) - mins[k]) / range, lo, hi);
    }
  }
  return out;
}

CaseFeatures case_features(const SupervoxelMap& map, const Eigen::MatrixXd& coeffs) {
  return {supervoxel_stats(map, coeffs), direction_neighbors(map)};
}

namespace {

Eigen::MatrixXd stack_rows(const std::vector<Eigen::MatrixXd>& parts) {
  Eigen::Index rows = 0;
  for (const auto& p : parts) rows += p.rows();
  Eigen::MatrixXd out(rows, parts.empty() ? 0 : parts.front().cols());
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p;
    r += p.rows();
  }
  return out;
}

Eigen::MatrixXd join_columns(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

}  // namespace

FeatureNormalization fit_feature_normalization(std::span<const CaseFeatures> cases, GradientOrder order) {
  if (cases.empty()) throw DataError("no training cases for feature normalisation");
  FeatureNormalization norm;
  norm.order = order;
  std::vector<Eigen::MatrixXd> parts;
  if (order == GradientOrder::kBeforeNormalization) {
    for (const auto& c : cases) parts.push_back(join_columns(c.stats, neighborhood_gradient(c.stats, c.dirs)));
    norm.stats = ColumnNormalization::fit(stack_rows(parts));
    return norm;
  }
  for (const auto& c : cases) parts.push_back(c.stats);
  norm.stats = ColumnNormalization::fit(stack_rows(parts));
  parts.clear();
  for (const auto& c : cases) parts.push_back(neighborhood_gradient(norm.stats.apply(c.stats), c.dirs));
  norm.gradients = ColumnNormalization::fit(stack_rows(parts));
  return norm;
}

Eigen::MatrixXd assemble_features(const CaseFeatures& c, const FeatureNormalization& norm) {
  if (norm.order == GradientOrder::kBeforeNormalization) {
    return norm.stats.apply(join_columns(c.stats, neighborhood_gradient(c.stats, c.dirs)));
  }
  const Eigen::MatrixXd stats = norm.stats.apply(c.stats);
  return join_columns(stats, norm.gradients.apply(neighborhood_gradient(stats, c.dirs)));
}

namespace {

nlohmann::json column_json(const ColumnNormalization& c) {
  return {{"mins", c.mins}, {"maxs", c.maxs}, {"degenerate", c.degenerate}};
}

ColumnNormalization column_from_json(const nlohmann::json& j) {
  ColumnNormalization c;
  c.mins = j.at("mins").get<std::vector<double>>();
  c.maxs = j.at("maxs").get<std::vector<double>>();
  c.degenerate = j.at("degenerate").get<std::vector<bool>>();
  if (c.maxs.size() != c.mins.size() || c.degenerate.size() != c.mins.size()) {
    throw MalformedInputError("normalisation arrays differ in length");
  }
  return c;
}

}  // namespace

nlohmann::json normalization_to_json(const FeatureNormalization& n) {
  return {{"order", n.order == GradientOrder::kAfterNormalization ? "after" : "before"},
          {"stats", column_json(n.stats)},
          {"gradients", column_json(n.gradients)}};
}

FeatureNormalization normalization_from_json(const nlohmann::json& j) {
  FeatureNormalization n;
  try {
    const auto order = j.at("order").get<std::string>();
    if (order == "after") {
      n.order = GradientOrder::kAfterNormalization;
    } else if (order == "before") {
      n.order = GradientOrder::kBeforeNormalization;
    } else {
      throw MalformedInputError("unknown gradient order '" + order + "'");
    }
    n.stats = column_from_json(j.at("stats"));
    n.gradients = column_from_json(j.at("gradients"));
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInputError(std::string("bad feature normalisation: ") + e.what());
  }
  return n;
}

nlohmann::json features_to_json(const Eigen::MatrixXd& features) {
  std::vector<std::vector<double>> rows(features.rows(), std::vector<double>(features.cols()));
  for (Eigen::Index i = 0; i < features.rows(); ++i)
    for (Eigen::Index k = 0; k < features.cols(); ++k) rows[i][k] = features(i, k);
  auto names = feature_column_names();
  names.resize(static_cast<std::size_t>(features.cols()));
  return {{"columns", names}, {"values", rows}};
}

}  // namespace perfseg
