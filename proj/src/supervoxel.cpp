#include "perfseg/supervoxel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "perfseg/error.hpp"

namespace perfseg {

void SlicParams::validate() const {
  if (size_voxels < 8) throw ConfigError("supervoxel size must be >= 8 voxels");
  if (!(compactness > 0.0) || compactness > 1.0) throw ConfigError("compactness must lie in (0, 1]");
  if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
  if (!(tol_mm > 0.0)) throw ConfigError("tol_mm must be positive");
}

double slic_distance(std::span<const double> b_i, std::span<const double> b_j,
                     const std::array<double, 3>& x_i, const std::array<double, 3>& x_j, double r) {
  double df2 = 0.0;
  for (std::size_t k = 0; k < b_i.size(); ++k) df2 += (b_j[k] - b_i[k]) * (b_j[k] - b_i[k]);
  if (!b_i.empty()) df2 /= static_cast<double>(b_i.size());
  double ds2 = 0.0;
  for (int a = 0; a < 3; ++a) ds2 += (x_j[a] - x_i[a]) * (x_j[a] - x_i[a]);
  return std::sqrt(df2 + ds2 / (r * r));
}

int seed_count(std::size_t roi_voxels, int size_voxels) {
  return std::max(1, static_cast<int>(roi_voxels / static_cast<std::size_t>(size_voxels)));
}

double grid_spacing_mm(std::size_t roi_voxels, const VolumeHeader& grid, int seeds) {
  return std::cbrt(static_cast<double>(roi_voxels) * grid.voxel_volume_mm3() / seeds);
}

namespace {

// Centres live in flat arrays: position (mm) and features.
struct Centres {
  int n_features = 0;
  std::vector<std::array<double, 3>> pos;
  std::vector<double> feat;
  std::vector<bool> alive;

  int count() const { return static_cast<int>(pos.size()); }
  const double* features(int k) const { return feat.data() + static_cast<std::size_t>(k) * n_features; }
  double* features(int k) { return feat.data() + static_cast<std::size_t>(k) * n_features; }
};

class SlicEngine {
 public:
  SlicEngine(const Eigen::MatrixXd& features, const VolumeHeader& grid, const SlicParams& params,
             const Box& roi)
      : f_(features), grid_(grid), p_(params), roi_(roi), n_(static_cast<int>(features.cols())) {}

  SupervoxelMap run(SlicDiagnostics* diag);

 private:
  std::array<double, 3> position(int x, int y, int z) const {
    return {x * grid_.spacing_mm[0], y * grid_.spacing_mm[1], z * grid_.spacing_mm[2]};
  }
  double feature(std::size_t v, int k) const { return f_(static_cast<Eigen::Index>(v), k); }

  double d2(std::size_t v, const std::array<double, 3>& x, int k) const {
    const double* c = centres_.features(k);
    double df2 = 0.0;
    for (int j = 0; j < n_; ++j) {
      const double d = feature(v, j) - c[j];
      df2 += d * d;
    }
    df2 /= n_;
    double ds2 = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double d = x[a] - centres_.pos[k][a];
      ds2 += d * d;
    }
    return df2 + ds2 * inv_r2_;
  }

  template <typename Fn>
  void for_each_roi_voxel(Fn&& fn) const {
    for (int z = roi_.lo[2]; z < roi_.hi[2]; ++z)
      for (int y = roi_.lo[1]; y < roi_.hi[1]; ++y)
        for (int x = roi_.lo[0]; x < roi_.hi[0]; ++x) fn(grid_.index(x, y, z), x, y, z);
  }

  void place_seeds();
  void perturb_seeds();
  double assign();
  double update(double* motion);
  void enforce_connectivity();

  const Eigen::MatrixXd& f_;
  VolumeHeader grid_;
  SlicParams p_;
  Box roi_;
  int n_;
  double spacing_ = 0.0;
  double inv_r2_ = 0.0;
  Centres centres_;
  std::vector<std::int32_t> labels_;
  std::vector<double> dist_;
};

void SlicEngine::place_seeds() {
  const int k = seed_count(roi_.voxels(), p_.size_voxels);
  spacing_ = grid_spacing_mm(roi_.voxels(), grid_, k);
  std::array<int, 3> counts{};
  std::array<double, 3> step{};
  for (int a = 0; a < 3; ++a) {
    const double length = roi_.extent(a) * grid_.spacing_mm[a];
    counts[a] = std::clamp(static_cast<int>(std::lround(length / spacing_)), 1, roi_.extent(a));
    step[a] = static_cast<double>(roi_.extent(a)) / counts[a];
  }
  centres_.n_features = n_;
  for (int iz = 0; iz < counts[2]; ++iz)
    for (int iy = 0; iy < counts[1]; ++iy)
      for (int ix = 0; ix < counts[0]; ++ix) {
        const int x = roi_.lo[0] + static_cast<int>((ix + 0.5) * step[0]);
        const int y = roi_.lo[1] + static_cast<int>((iy + 0.5) * step[1]);
        const int z = roi_.lo[2] + static_cast<int>((iz + 0.5) * step[2]);
        const std::size_t v = grid_.index(x, y, z);
        centres_.pos.push_back(position(x, y, z));
        for (int j = 0; j < n_; ++j) centres_.feat.push_back(feature(v, j));
        centres_.alive.push_back(true);
      }
}

void SlicEngine::perturb_seeds() {
  auto gradient = [&](int x, int y, int z) {
    double g = 0.0;
    const std::array<int, 3> c{x, y, z};
    for (int a = 0; a < 3; ++a) {
      auto lo = c, hi = c;
      lo[a] = std::max(roi_.lo[a], c[a] - 1);
      hi[a] = std::min(roi_.hi[a] - 1, c[a] + 1);
      const auto vl = grid_.index(lo[0], lo[1], lo[2]);
      const auto vh = grid_.index(hi[0], hi[1], hi[2]);
      for (int j = 0; j < n_; ++j) g += std::pow(feature(vh, j) - feature(vl, j), 2);
    }
    return g;
  };
  for (int k = 0; k < centres_.count(); ++k) {
    std::array<int, 3> c{};
    for (int a = 0; a < 3; ++a) c[a] = static_cast<int>(std::lround(centres_.pos[k][a] / grid_.spacing_mm[a]));
    double best = gradient(c[0], c[1], c[2]);
    auto best_c = c;
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const std::array<int, 3> q{c[0] + dx, c[1] + dy, c[2] + dz};
          if (!roi_.contains(q[0], q[1], q[2])) continue;
          const double g = gradient(q[0], q[1], q[2]);
          if (g < best) {
            best = g;
            best_c = q;
          }
        }
    const auto v = grid_.index(best_c[0], best_c[1], best_c[2]);
    centres_.pos[k] = position(best_c[0], best_c[1], best_c[2]);
    for (int j = 0; j < n_; ++j) centres_.features(k)[j] = feature(v, j);
  }
}

// Each voxel keeps its current centre unless a centre within the 2S window
// is strictly closer, which makes the energy non-increasing.
double SlicEngine::assign() {
  for_each_roi_voxel([&](std::size_t v, int x, int y, int z) {
    const int k = labels_[v];
    dist_[v] = k >= 0 ? d2(v, position(x, y, z), k) : std::numeric_limits<double>::infinity();
  });
  for (int k = 0; k < centres_.count(); ++k) {
    if (!centres_.alive[k]) continue;
    std::array<int, 3> lo{}, hi{};
    for (int a = 0; a < 3; ++a) {
      const double c = centres_.pos[k][a] / grid_.spacing_mm[a];
      const double half = spacing_ / grid_.spacing_mm[a];
      lo[a] = std::max(roi_.lo[a], static_cast<int>(std::ceil(c - half)));
      hi[a] = std::min(roi_.hi[a] - 1, static_cast<int>(std::floor(c + half)));
    }
    for (int z = lo[2]; z <= hi[2]; ++z)
      for (int y = lo[1]; y <= hi[1]; ++y)
        for (int x = lo[0]; x <= hi[0]; ++x) {
          const auto v = grid_.index(x, y, z);
          const double d = d2(v, position(x, y, z), k);
          if (d < dist_[v]) {
            dist_[v] = d;
            labels_[v] = k;
          }
        }
  }
  double energy = 0.0;
  for_each_roi_voxel([&](std::size_t v, int x, int y, int z) {
    if (labels_[v] < 0) {
      // Not covered by any window: fall back to the globally nearest centre.
      const auto pos = position(x, y, z);
      for (int k = 0; k < centres_.count(); ++k) {
        if (!centres_.alive[k]) continue;
        const double d = d2(v, pos, k);
        if (d < dist_[v]) {
          dist_[v] = d;
          labels_[v] = k;
        }
      }
    }
    energy += dist_[v];
  });
  return energy;
}

double SlicEngine::update(double* motion) {
  const int kc = centres_.count();
  std::vector<std::array<double, 3>> psum(kc, {0.0, 0.0, 0.0});
  std::vector<double> fsum(static_cast<std::size_t>(kc) * n_, 0.0);
  std::vector<std::size_t> count(kc, 0);
  for_each_roi_voxel([&](std::size_t v, int x, int y, int z) {
    const int k = labels_[v];
    const auto pos = position(x, y, z);
    for (int a = 0; a < 3; ++a) psum[k][a] += pos[a];
    for (int j = 0; j < n_; ++j) fsum[static_cast<std::size_t>(k) * n_ + j] += feature(v, j);
    ++count[k];
  });
  *motion = 0.0;
  for (int k = 0; k < kc; ++k) {
    if (!centres_.alive[k]) continue;
    if (count[k] == 0) {
      centres_.alive[k] = false;
      continue;
    }
    const double inv = 1.0 / static_cast<double>(count[k]);
    double m2 = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double p = psum[k][a] * inv;
      m2 += (p - centres_.pos[k][a]) * (p - centres_.pos[k][a]);
      centres_.pos[k][a] = p;
    }
    for (int j = 0; j < n_; ++j) centres_.features(k)[j] = fsum[static_cast<std::size_t>(k) * n_ + j] * inv;
    *motion = std::max(*motion, std::sqrt(m2));
  }
  double energy = 0.0;
  for_each_roi_voxel([&](std::size_t v, int x, int y, int z) {
    energy += d2(v, position(x, y, z), labels_[v]);
  });
  return energy;
}

// Fragments that are not their cluster's largest piece, or whose largest
// piece is below S_n / 4 voxels, join the adjacent kept supervoxel with the
// nearest mean features.
void SlicEngine::enforce_connectivity() {
  const GridDims dims{grid_.nx(), grid_.ny(), grid_.nz()};
  const auto cc = connected_components(dims, labels_);
  const int nc = cc.count();

  std::vector<int> largest(centres_.count(), -1);
  for (int c = 0; c < nc; ++c) {
    int& best = largest[cc.key[c]];
    if (best < 0 || cc.sizes[c] > cc.sizes[best]) best = c;
  }
  const double min_size = p_.size_voxels / 4.0;
  std::vector<int> owner(nc, -1);
  for (int c = 0; c < nc; ++c) {
    if (largest[cc.key[c]] == c && static_cast<double>(cc.sizes[c]) >= min_size) owner[c] = c;
  }

  std::vector<double> fsum(static_cast<std::size_t>(nc) * n_, 0.0);
  std::vector<double> fcount(nc, 0.0);
  std::vector<std::vector<int>> adj(nc);
  for_each_roi_voxel([&](std::size_t v, int, int, int) {
    const int c = cc.component[v];
    for (int j = 0; j < n_; ++j) fsum[static_cast<std::size_t>(c) * n_ + j] += feature(v, j);
    fcount[c] += 1.0;
    for_each_neighbor26(dims, v, [&](std::size_t w) {
      const int d = cc.component[w];
      if (d >= 0 && d != c) adj[c].push_back(d);
    });
  });
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }

  std::vector<int> pending;
  for (int c = 0; c < nc; ++c)
    if (owner[c] < 0) pending.push_back(c);
  if (pending.size() == static_cast<std::size_t>(nc) && nc > 0) {
    int best = 0;
    for (int c = 1; c < nc; ++c)
      if (cc.sizes[c] > cc.sizes[best]) best = c;
    owner[best] = best;
    pending.erase(std::find(pending.begin(), pending.end(), best));
  }

  auto mean_distance = [&](int a, int b) {
    double d = 0.0;
    for (int j = 0; j < n_; ++j) {
      const double fa = fsum[static_cast<std::size_t>(a) * n_ + j] / fcount[a];
      const double fb = fsum[static_cast<std::size_t>(b) * n_ + j] / fcount[b];
      d += (fa - fb) * (fa - fb);
    }
    return d;
  };

  while (!pending.empty()) {
    bool progress = false;
    std::vector<int> still;
    for (int o : pending) {
      int target = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int nb : adj[o]) {
        const int t = owner[nb];
        if (t < 0) continue;
        const double d = mean_distance(o, t);
        if (d < best || (d == best && t < target)) {
          best = d;
          target = t;
        }
      }
      if (target < 0) {
        still.push_back(o);
        continue;
      }
      owner[o] = target;
      for (int j = 0; j < n_; ++j)
        fsum[static_cast<std::size_t>(target) * n_ + j] += fsum[static_cast<std::size_t>(o) * n_ + j];
      fcount[target] += fcount[o];
      progress = true;
    }
    pending.swap(still);
    if (!progress && !pending.empty()) {
      // Region cut off from every kept piece: promote its largest fragment.
      auto it = std::max_element(pending.begin(), pending.end(),
                                 [&](int a, int b) { return cc.sizes[a] < cc.sizes[b]; });
      owner[*it] = *it;
      pending.erase(it);
    }
  }

  std::vector<int> final_id(nc, -1);
  int next = 0;
  for (int c = 0; c < nc; ++c)
    if (owner[c] == c) final_id[c] = next++;
  for_each_roi_voxel([&](std::size_t v, int, int, int) { labels_[v] = final_id[owner[cc.component[v]]]; });
}

SupervoxelMap SlicEngine::run(SlicDiagnostics* diag) {
  labels_.assign(grid_.voxels(), -1);
  dist_.assign(grid_.voxels(), 0.0);
  place_seeds();
  if (p_.perturb_seeds) perturb_seeds();
  const double r = spacing_ / p_.compactness;
  inv_r2_ = 1.0 / (r * r);

  SlicDiagnostics local;
  SlicDiagnostics& d = diag ? *diag : local;
  d = {};
  d.seeds = centres_.count();
  d.grid_spacing_mm = spacing_;
  for (int it = 0; it < p_.max_iters; ++it) {
    d.energy.push_back(assign());
    double motion = 0.0;
    d.energy.push_back(update(&motion));
    d.iterations = it + 1;
    if (motion < p_.tol_mm) break;
  }
  d.clusters_before_merge = static_cast<int>(std::count(centres_.alive.begin(), centres_.alive.end(), true));
  enforce_connectivity();

  SupervoxelMap map;
  map.grid = grid_.spatial();
  map.labels = std::move(labels_);
  compute_statistics(map, f_);
  build_adjacency(map);
  return map;
}

}  // namespace

SupervoxelMap run_slic(const Eigen::MatrixXd& features, const VolumeHeader& grid,
                       const SlicParams& params, const Box& roi, SlicDiagnostics* diagnostics) {
  params.validate();
  const VolumeHeader g = grid.spatial();
  if (roi.empty() || !Box::full(g).contains(roi)) throw DataError("SLIC ROI outside the grid");
  if (static_cast<std::size_t>(features.rows()) != g.voxels()) {
    throw DataError("feature rows do not match the grid voxel count");
  }
  if (features.cols() < 1) throw DataError("SLIC needs at least one feature");
  if (roi.voxels() < static_cast<std::size_t>(params.size_voxels)) {
    throw DataError("ROI too small: " + std::to_string(roi.voxels()) + " voxels < supervoxel size " +
                    std::to_string(params.size_voxels));
  }
  SlicEngine engine(features, g, params, roi);
  return engine.run(diagnostics);
}

void compute_statistics(SupervoxelMap& map, const Eigen::MatrixXd& features) {
  int count = 0;
  for (auto l : map.labels) count = std::max(count, l + 1);
  map.sizes.assign(count, 0);
  map.centroids_mm.assign(count, {0.0, 0.0, 0.0});
  map.mean_features = Eigen::MatrixXd::Zero(count, features.cols());
  for (std::size_t v = 0; v < map.labels.size(); ++v) {
    const int l = map.labels[v];
    if (l < 0) continue;
    const auto pos = map.grid.position_mm(v);
    for (int a = 0; a < 3; ++a) map.centroids_mm[l][a] += pos[a];
    map.mean_features.row(l) += features.row(static_cast<Eigen::Index>(v));
    ++map.sizes[l];
  }
  for (int l = 0; l < count; ++l) {
    if (map.sizes[l] == 0) throw DataError("supervoxel labels have gaps");
    const double inv = 1.0 / static_cast<double>(map.sizes[l]);
    for (int a = 0; a < 3; ++a) map.centroids_mm[l][a] *= inv;
    map.mean_features.row(l) *= inv;
  }
}

void build_adjacency(SupervoxelMap& map) {
  const auto dims = map.dims();
  map.adjacency.assign(map.count(), {});
  for (std::size_t v = 0; v < map.labels.size(); ++v) {
    const int l = map.labels[v];
    if (l < 0) continue;
    for_each_neighbor26(dims, v, [&](std::size_t w) {
      const int m = map.labels[w];
      if (m >= 0 && m != l) map.adjacency[l].push_back(m);
    });
  }
  for (auto& a : map.adjacency) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
}

void write_supervoxels(const SupervoxelMap& map, const std::filesystem::path& header_path) {
  std::vector<char> bytes;
  bytes.reserve(map.labels.size() * 4);
  for (auto l : map.labels) {
    const auto u = static_cast<std::uint32_t>(l);
    for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<char>((u >> (8 * b)) & 0xFFu));
  }
  {
    std::ofstream out(raw_path_for(header_path), std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + raw_path_for(header_path).string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  std::vector<std::vector<double>> feats(map.mean_features.rows(),
                                         std::vector<double>(map.mean_features.cols()));
  for (Eigen::Index i = 0; i < map.mean_features.rows(); ++i)
    for (Eigen::Index j = 0; j < map.mean_features.cols(); ++j) feats[i][j] = map.mean_features(i, j);
  auto j = header_to_json(map.grid, "supervoxel");
  j["supervoxels"] = {{"count", map.count()},
                      {"sizes", map.sizes},
                      {"centroids_mm", map.centroids_mm},
                      {"mean_features", feats},
                      {"adjacency", map.adjacency}};
  std::ofstream out(header_path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + header_path.string());
  out << j.dump(1) << '\n';
}

SupervoxelMap read_supervoxels(const std::filesystem::path& header_path) {
  const auto j = read_header_json(header_path);
  if (j.value("kind", std::string()) != "supervoxel") {
    throw MalformedInputError(header_path.string() + " is not a supervoxel map");
  }
  SupervoxelMap map;
  map.grid = header_from_json(j).spatial();
  std::ifstream in(raw_path_for(header_path), std::ios::binary);
  if (!in) throw MalformedInputError("cannot open " + raw_path_for(header_path).string());
  std::vector<char> bytes(std::istreambuf_iterator<char>(in), {});
  if (bytes.size() != map.grid.voxels() * 4) {
    throw MalformedInputError(header_path.string() + ": label payload does not match dims");
  }
  map.labels.resize(map.grid.voxels());
  for (std::size_t i = 0; i < map.labels.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 * i + b])) << (8 * b);
    map.labels[i] = static_cast<std::int32_t>(u);
  }
  try {
    const auto& s = j.at("supervoxels");
    map.sizes = s.at("sizes").get<std::vector<std::size_t>>();
    map.centroids_mm = s.at("centroids_mm").get<std::vector<std::array<double, 3>>>();
    map.adjacency = s.at("adjacency").get<std::vector<std::vector<int>>>();
    const auto feats = s.at("mean_features").get<std::vector<std::vector<double>>>();
    const Eigen::Index cols = feats.empty() ? 0 : static_cast<Eigen::Index>(feats[0].size());
    map.mean_features.resize(static_cast<Eigen::Index>(feats.size()), cols);
    for (std::size_t i = 0; i < feats.size(); ++i)
      for (Eigen::Index c = 0; c < cols; ++c) map.mean_features(static_cast<Eigen::Index>(i), c) = feats[i][c];
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInputError(header_path.string() + ": bad supervoxel summary: " + e.what());
  }
  if (map.sizes.size() != map.centroids_mm.size() || map.sizes.size() != map.adjacency.size()) {
    throw MalformedInputError(header_path.string() + ": inconsistent supervoxel summary");
  }
  return map;
}

}  // namespace perfseg
