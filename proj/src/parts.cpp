#include "perfseg/parts.hpp"

#include <algorithm>
#include <cmath>

#include "perfseg/error.hpp"

namespace perfseg {

double OffsetGaussian::density(const std::array<double, 3>& offset) const {
  double q = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double z = (offset[a] - mean[a]) / sigma[a];
    q += z * z;
  }
  return std::exp(-0.5 * q);
}

double LocationPrior::weight(double rel_z) const {
  const double z = (rel_z - mean) / sigma;
  return std::exp(-0.5 * z * z);
}

void PartsModel::validate() const {
  if (!(epsilon_msg > 0.0) || epsilon_msg > 1e-3) throw ConfigError("epsilon_msg must lie in (0, 1e-3]");
  if (!(unary_weight > 0.0) || !(pairwise_weight > 0.0)) throw ConfigError("factor weights must be positive");
  for (const auto& c : children) {
    for (double s : c.offset.sigma)
      if (!(s > 0.0)) throw ConfigError("offset sigma must be positive");
    if (c.location && !(c.location->sigma > 0.0)) throw ConfigError("location prior sigma must be positive");
  }
}

PartsCandidates candidates_from_map(const SupervoxelMap& map) {
  PartsCandidates c;
  c.centroids_mm = map.centroids_mm;
  const double dz = map.grid.spacing_mm[2];
  const double centre = (map.grid.nz() - 1) * dz / 2.0;
  const double extent = map.grid.nz() * dz;
  for (const auto& p : map.centroids_mm) c.rel_z.push_back((p[2] - centre) / extent);
  return c;
}

SpatialCase spatial_case(const SupervoxelMap& map, std::vector<int> labels) {
  if (labels.size() != map.centroids_mm.size()) throw DataError("label count does not match supervoxels");
  SpatialCase c;
  c.centroids_mm = map.centroids_mm;
  c.labels = std::move(labels);
  const double dz = map.grid.spacing_mm[2];
  c.z_centre_mm = (map.grid.nz() - 1) * dz / 2.0;
  c.z_extent_mm = map.grid.nz() * dz;
  return c;
}

namespace {

std::optional<std::array<double, 3>> part_centroid(const SpatialCase& c, Tissue t) {
  std::array<double, 3> sum{0.0, 0.0, 0.0};
  int n = 0;
  for (std::size_t i = 0; i < c.labels.size(); ++i) {
    if (c.labels[i] != static_cast<int>(t)) continue;
    for (int a = 0; a < 3; ++a) sum[a] += c.centroids_mm[i][a];
    ++n;
  }
  if (n == 0) return std::nullopt;
  for (double& s : sum) s /= n;
  return sum;
}

// Sample mean and s.d. (1/(n-1)); s.d. is 0 for a single value.
std::pair<double, double> mean_sd(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

std::string tissue_name(Tissue t) { return default_legend().at(static_cast<std::uint8_t>(t)); }

}  // namespace

PartsModel train_spatial(std::span<const SpatialCase> cases, const SpatialOptions& options,
                         std::vector<std::string>* warnings) {
  PartsModel model;
  const Tissue kChildren[] = {Tissue::kLumen, Tissue::kBladder};
  for (Tissue t : kChildren) {
    std::array<std::vector<double>, 3> offsets;
    std::vector<double> rel_z;
    for (std::size_t k = 0; k < cases.size(); ++k) {
      const auto root = part_centroid(cases[k], model.root);
      const auto child = part_centroid(cases[k], t);
      if (!root || !child) {
        if (warnings) {
          warnings->push_back("training case " + std::to_string(k) + " lacks " +
                              tissue_name(root ? t : model.root) + "; skipped for " + tissue_name(t));
        }
        continue;
      }
      for (int a = 0; a < 3; ++a) offsets[a].push_back((*child)[a] - (*root)[a]);
      rel_z.push_back(((*child)[2] - cases[k].z_centre_mm) / cases[k].z_extent_mm);
    }
    if (rel_z.empty()) throw DataError("no training case contains both tumour and " + tissue_name(t));
    ChildPart part;
    part.tissue = t;
    for (int a = 0; a < 3; ++a) {
      const auto [m, s] = mean_sd(offsets[a]);
      part.offset.mean[a] = m;
      part.offset.sigma[a] = std::max(s, options.sigma_floor_mm);
    }
    if (t == Tissue::kBladder && options.bladder_location_prior) {
      const auto [m, s] = mean_sd(rel_z);
      part.location = LocationPrior{m, std::max(s, options.location_sigma_floor)};
    }
    model.children.push_back(part);
  }
  return model;
}

std::vector<double> child_potential(const PartPotentials& pot, const PartsCandidates& cand,
                                    const ChildPart& child) {
  std::vector<double> out(cand.count());
  for (int i = 0; i < cand.count(); ++i) {
    out[i] = pot.prob(i, static_cast<int>(child.tissue));
    if (child.location) out[i] *= child.location->weight(cand.rel_z[i]);
  }
  return out;
}

namespace {

std::array<double, 3> offset_of(const PartsCandidates& cand, int child, int root) {
  const auto& c = cand.centroids_mm[child];
  const auto& r = cand.centroids_mm[root];
  return {c[0] - r[0], c[1] - r[1], c[2] - r[2]};
}

double pairwise(const ChildPart& part, const PartsCandidates& cand, int child, int root, double w) {
  const double d = part.offset.density(offset_of(cand, child, root));
  return w == 1.0 ? d : std::pow(d, w);
}

double weighted(double value, double w) { return w == 1.0 ? value : std::pow(value, w); }

// Divides by the maximum; returns false when everything is zero.
bool max_normalize(std::vector<double>& v) {
  const double top = v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
  if (!(top > 0.0)) return false;
  for (double& x : v) x /= top;
  return true;
}

void check_inputs(const PartPotentials& pot, const PartsCandidates& cand, const PartsModel& model) {
  model.validate();
  if (pot.count() != cand.count() || cand.rel_z.size() != cand.centroids_mm.size()) {
    throw DataError("potentials and candidates are not aligned");
  }
  if (pot.prob.cols() < kTissueCount) throw DataError("potentials need one column per tissue");
}

}  // namespace

BeliefMap collect_evidence(const PartPotentials& pot, const PartsCandidates& cand, const PartsModel& model) {
  check_inputs(pot, cand, model);
  const int n = cand.count();
  BeliefMap b;
  b.root.resize(n);
  for (int r = 0; r < n; ++r) b.root[r] = weighted(pot.prob(r, static_cast<int>(model.root)), model.unary_weight);
  for (const auto& part : model.children) {
    const auto psi = child_potential(pot, cand, part);
    std::vector<double> msg(n, 0.0);
    for (int r = 0; r < n; ++r) {
      double acc = 0.0;
      for (int c = 0; c < n; ++c) {
        if (c == r || psi[c] == 0.0) continue;
        acc += pairwise(part, cand, c, r, model.pairwise_weight) * weighted(psi[c], model.unary_weight);
      }
      msg[r] = acc;
    }
    const bool informative = max_normalize(msg);
    for (double& m : msg) m = std::max(m, model.epsilon_msg);
    for (int r = 0; r < n; ++r) b.root[r] *= msg[r];
    b.messages.push_back(std::move(msg));
    b.message_flat.push_back(!informative);
  }
  b.root_zero = !max_normalize(b.root);
  return b;
}

void distribute_evidence(BeliefMap& b, const PartPotentials& pot, const PartsCandidates& cand,
                         const PartsModel& model) {
  check_inputs(pot, cand, model);
  const int n = cand.count();
  if (b.root.size() != static_cast<std::size_t>(n) || b.messages.size() != model.children.size()) {
    throw DataError("distribute_evidence needs the collect pass first");
  }
  b.child.clear();
  b.child_zero.clear();
  for (std::size_t k = 0; k < model.children.size(); ++k) {
    const auto& part = model.children[k];
    const auto psi = child_potential(pot, cand, part);
    // Root-to-child message source: bel_r / m-_{c->r}.
    std::vector<double> source(n);
    for (int r = 0; r < n; ++r) source[r] = b.root[r] / b.messages[k][r];
    std::vector<double> bel(n, 0.0);
    for (int c = 0; c < n; ++c) {
      if (psi[c] == 0.0) continue;
      double acc = 0.0;
      for (int r = 0; r < n; ++r) {
        if (r == c || source[r] == 0.0) continue;
        acc += pairwise(part, cand, c, r, model.pairwise_weight) * source[r];
      }
      bel[c] = weighted(psi[c], model.unary_weight) * acc;
    }
    b.child_zero.push_back(!max_normalize(bel));
    b.child.push_back(std::move(bel));
  }
}

BeliefMap pieces_of_parts(const PartPotentials& pot, const PartsCandidates& cand, const PartsModel& model) {
  BeliefMap b = collect_evidence(pot, cand, model);
  distribute_evidence(b, pot, cand, model);
  return b;
}

Marginals enumerate_oracle(const PartPotentials& pot, const PartsCandidates& cand, const PartsModel& model) {
  check_inputs(pot, cand, model);
  const int n = cand.count();
  if (n > 20) throw DataError("enumeration oracle is limited to 20 candidates");
  const std::size_t p = model.children.size();
  std::vector<double> psi_r(n);
  for (int i = 0; i < n; ++i) psi_r[i] = weighted(pot.prob(i, static_cast<int>(model.root)), model.unary_weight);
  std::vector<std::vector<double>> psi_c;
  for (const auto& part : model.children) {
    auto v = child_potential(pot, cand, part);
    for (double& x : v) x = weighted(x, model.unary_weight);
    psi_c.push_back(std::move(v));
  }

  Marginals m;
  m.root.assign(n, 0.0);
  m.child.assign(p, std::vector<double>(n, 0.0));
  std::vector<int> assign(p + 1, -1);
  // Depth 0 picks the root, depth k the (k-1)-th child.
  auto recurse = [&](auto&& self, std::size_t depth, double weight) -> void {
    if (weight == 0.0) return;
    if (depth == p + 1) {
      m.root[assign[0]] += weight;
      for (std::size_t k = 0; k < p; ++k) m.child[k][assign[k + 1]] += weight;
      return;
    }
    for (int s = 0; s < n; ++s) {
      if (std::find(assign.begin(), assign.begin() + static_cast<long>(depth), s) !=
          assign.begin() + static_cast<long>(depth)) {
        continue;
      }
      assign[depth] = s;
      double w = weight;
      if (depth == 0) {
        w *= psi_r[s];
      } else {
        const auto& part = model.children[depth - 1];
        w *= psi_c[depth - 1][s] * pairwise(part, cand, s, assign[0], model.pairwise_weight);
      }
      self(self, depth + 1, w);
    }
    assign[depth] = -1;
  };
  recurse(recurse, 0, 1.0);
  max_normalize(m.root);
  for (auto& c : m.child) max_normalize(c);
  return m;
}

nlohmann::json parts_to_json(const PartsModel& model) {
  nlohmann::json children = nlohmann::json::array();
  for (const auto& c : model.children) {
    nlohmann::json j = {{"tissue", static_cast<int>(c.tissue)},
                        {"offset_mean_mm", c.offset.mean},
                        {"offset_sigma_mm", c.offset.sigma}};
    if (c.location) j["location_prior"] = {{"mean", c.location->mean}, {"sigma", c.location->sigma}};
    children.push_back(j);
  }
  return {{"root", static_cast<int>(model.root)},
          {"children", children},
          {"epsilon_msg", model.epsilon_msg},
          {"unary_weight", model.unary_weight},
          {"pairwise_weight", model.pairwise_weight}};
}

PartsModel parts_from_json(const nlohmann::json& j) {
  PartsModel m;
  try {
    m.root = static_cast<Tissue>(j.at("root").get<int>());
    for (const auto& c : j.at("children")) {
      ChildPart part;
      part.tissue = static_cast<Tissue>(c.at("tissue").get<int>());
      part.offset.mean = c.at("offset_mean_mm").get<std::array<double, 3>>();
      part.offset.sigma = c.at("offset_sigma_mm").get<std::array<double, 3>>();
      if (c.contains("location_prior")) {
        part.location = LocationPrior{c["location_prior"].at("mean").get<double>(),
                                      c["location_prior"].at("sigma").get<double>()};
      }
      m.children.push_back(part);
    }
    m.epsilon_msg = j.value("epsilon_msg", 1e-6);
    m.unary_weight = j.value("unary_weight", 1.0);
    m.pairwise_weight = j.value("pairwise_weight", 1.0);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInputError(std::string("bad parts model: ") + e.what());
  }
  try {
    m.validate();
  } catch (const ConfigError& e) {
    throw MalformedInputError(std::string("bad parts model: ") + e.what());
  }
  return m;
}

}  // namespace perfseg
