#include "perfseg/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "perfseg/error.hpp"

namespace perfseg {

namespace {

std::string class_name(int id) {
  const auto& legend = default_legend();
  const auto it = legend.find(static_cast<std::uint8_t>(id));
  return it != legend.end() ? it->second : "class " + std::to_string(id);
}

}  // namespace

LdaModel train_lda(const Eigen::MatrixXd& x, std::span<const int> y, const LdaOptions& options) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) throw DataError("LDA: label count does not match rows");
  if (options.ridge < 0.0) throw ConfigError("LDA ridge must be non-negative");
  const Eigen::Index d = x.cols();
  std::vector<int> counts(options.n_classes, 0);
  for (int label : y) {
    if (label < 0 || label >= options.n_classes) throw DataError("LDA: label " + std::to_string(label) + " out of range");
    ++counts[label];
  }
  LdaModel model;
  model.n_classes = options.n_classes;
  for (int c = 0; c < options.n_classes; ++c) {
    if (counts[c] == 1) throw DataError("LDA: class '" + class_name(c) + "' has only 1 sample");
    if (counts[c] >= 2) model.classes.push_back(c);
  }
  if (model.classes.size() < 2) throw DataError("LDA needs at least 2 classes with samples");

  const auto k = static_cast<Eigen::Index>(model.classes.size());
  std::vector<int> slot(options.n_classes, -1);
  for (Eigen::Index i = 0; i < k; ++i) slot[model.classes[i]] = static_cast<int>(i);

  model.means = Eigen::MatrixXd::Zero(k, d);
  for (Eigen::Index i = 0; i < x.rows(); ++i) model.means.row(slot[y[i]]) += x.row(i);
  for (Eigen::Index c = 0; c < k; ++c) model.means.row(c) /= counts[model.classes[c]];

  Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::RowVectorXd dev = x.row(i) - model.means.row(slot[y[i]]);
    scatter.noalias() += dev.transpose() * dev;
  }
  const double n = static_cast<double>(x.rows());
  model.covariance = scatter / (n - static_cast<double>(k));
  model.covariance = 0.5 * (model.covariance + model.covariance.transpose());
  const double scale = model.covariance.trace() / static_cast<double>(d);
  // A zero pooled scatter still needs a usable ridge.
  model.ridge = options.ridge * (scale > 0.0 ? scale : 1.0);
  model.covariance.diagonal().array() += model.ridge;

  model.priors.resize(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    model.priors[c] = options.priors == PriorMode::kUniform ? 1.0 / static_cast<double>(k)
                                                           : counts[model.classes[c]] / n;
  }
  return model;
}

Eigen::MatrixXd discriminant_scores(const LdaModel& model, const Eigen::MatrixXd& x) {
  if (x.cols() != model.dims()) {
    throw DataError("LDA: feature width " + std::to_string(x.cols()) + " does not match model (" +
                    std::to_string(model.dims()) + ")");
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(model.covariance);
  if (ldlt.info() != Eigen::Success) throw DataError("LDA covariance is not invertible");
  const Eigen::MatrixXd w = ldlt.solve(model.means.transpose());  // d x K
  Eigen::RowVectorXd bias(model.means.rows());
  for (Eigen::Index c = 0; c < model.means.rows(); ++c) {
    bias[c] = -0.5 * model.means.row(c).dot(w.col(c)) + std::log(model.priors[c]);
  }
  Eigen::MatrixXd scores = x * w;
  scores.rowwise() += bias;
  return scores;
}

PartPotentials predict_proba(const LdaModel& model, const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd scores = discriminant_scores(model, x);
  PartPotentials out;
  out.prob = Eigen::MatrixXd::Zero(x.rows(), model.n_classes);
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double top = scores.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (scores.row(i).array() - top).exp().matrix();
    const double z = e.sum();
    for (Eigen::Index c = 0; c < e.size(); ++c) out.prob(i, model.classes[c]) = e[c] / z;
  }
  return out;
}

std::vector<int> make_training_labels(const SupervoxelMap& map, const LabelVolume& expert,
                                      const Eigen::MatrixXd& coeffs, std::vector<std::string>* warnings) {
  const auto& eh = expert.header();
  if (eh.nx() != map.grid.nx() || eh.ny() != map.grid.ny() || eh.nz() != map.grid.nz()) {
    throw DataError("expert mask is not aligned with the supervoxel grid");
  }
  if (static_cast<std::size_t>(coeffs.rows()) != map.labels.size()) {
    throw DataError("coefficient rows do not match the supervoxel grid");
  }
  const int n = map.count();
  constexpr int kParts = kTissueCount;
  std::vector<std::array<std::size_t, kParts>> overlap(n);
  for (auto& o : overlap) o.fill(0);
  const auto labels = expert.labels();
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(n, coeffs.cols());
  for (std::size_t v = 0; v < map.labels.size(); ++v) {
    const int l = map.labels[v];
    if (l < 0) continue;
    if (labels[v] > 0 && labels[v] < kParts) ++overlap[l][labels[v]];
    mean.row(l) += coeffs.row(static_cast<Eigen::Index>(v));
  }

  std::vector<int> out(n, static_cast<int>(Tissue::kBackground));
  std::vector<int> candidate(n, 0);
  std::vector<double> fraction(n, 0.0);
  for (int s = 0; s < n; ++s) {
    mean.row(s) /= static_cast<double>(map.sizes[s]);
    int best = 0;
    // Classes are scanned tumour, lumen, bladder so equal counts keep the earlier one.
    for (int c = 1; c < kParts; ++c)
      if (overlap[s][c] > (best ? overlap[s][best] : 0)) best = c;
    candidate[s] = best;
    fraction[s] = best ? static_cast<double>(overlap[s][best]) / static_cast<double>(map.sizes[s]) : 0.0;
    if (fraction[s] >= 0.5) out[s] = best;
  }

  for (int c = 1; c < kParts; ++c) {
    std::vector<int> borderline;
    for (int s = 0; s < n; ++s)
      if (candidate[s] == c && fraction[s] >= 0.1 && fraction[s] < 0.5) borderline.push_back(s);
    if (borderline.empty()) continue;
    std::vector<int> rows, ys;
    for (int s = 0; s < n; ++s) {
      if (out[s] == c) {
        rows.push_back(s);
        ys.push_back(1);
      } else if (fraction[s] < 0.1) {
        rows.push_back(s);
        ys.push_back(0);
      }
    }
    const auto positives = std::count(ys.begin(), ys.end(), 1);
    if (positives < 2 || static_cast<std::size_t>(positives) + 2 > ys.size()) {
      if (warnings) {
        warnings->push_back("not enough confident '" + class_name(c) + "' supervoxels to reclassify " +
                            std::to_string(borderline.size()) + " borderline ones; left as background");
      }
      continue;
    }
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), mean.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = mean.row(rows[i]);
    LdaOptions opts;
    opts.priors = PriorMode::kUniform;
    opts.n_classes = 2;
    const LdaModel lda = train_lda(x, ys, opts);
    Eigen::MatrixXd q(static_cast<Eigen::Index>(borderline.size()), mean.cols());
    for (std::size_t i = 0; i < borderline.size(); ++i) q.row(static_cast<Eigen::Index>(i)) = mean.row(borderline[i]);
    const auto p = predict_proba(lda, q);
    for (std::size_t i = 0; i < borderline.size(); ++i)
      if (p.prob(static_cast<Eigen::Index>(i), 1) >= 0.5) out[borderline[i]] = c;
  }
  return out;
}

namespace {

std::vector<std::vector<double>> rows_of(const Eigen::MatrixXd& m) {
  std::vector<std::vector<double>> out(m.rows(), std::vector<double>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

Eigen::MatrixXd matrix_of(const std::vector<std::vector<double>>& rows) {
  const Eigen::Index cols = rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != cols) throw MalformedInputError("ragged matrix");
    for (Eigen::Index j = 0; j < cols; ++j) m(static_cast<Eigen::Index>(i), j) = rows[i][j];
  }
  return m;
}

}  // namespace

nlohmann::json lda_to_json(const LdaModel& model) {
  std::vector<double> priors(model.priors.data(), model.priors.data() + model.priors.size());
  return {{"classes", model.classes},   {"means", rows_of(model.means)},
          {"covariance", rows_of(model.covariance)}, {"priors", priors},
          {"ridge", model.ridge},       {"n_classes", model.n_classes}};
}

LdaModel lda_from_json(const nlohmann::json& j) {
  LdaModel m;
  try {
    m.classes = j.at("classes").get<std::vector<int>>();
    m.means = matrix_of(j.at("means").get<std::vector<std::vector<double>>>());
    m.covariance = matrix_of(j.at("covariance").get<std::vector<std::vector<double>>>());
    const auto priors = j.at("priors").get<std::vector<double>>();
    m.priors = Eigen::Map<const Eigen::VectorXd>(priors.data(), static_cast<Eigen::Index>(priors.size()));
    m.ridge = j.value("ridge", 0.0);
    m.n_classes = j.value("n_classes", kTissueCount);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInputError(std::string("bad LDA model: ") + e.what());
  }
  const auto k = static_cast<Eigen::Index>(m.classes.size());
  if (m.means.rows() != k || m.priors.size() != k || m.covariance.rows() != m.means.cols() ||
      m.covariance.cols() != m.means.cols()) {
    throw MalformedInputError("LDA model arrays have inconsistent shapes");
  }
  for (int c : m.classes)
    if (c < 0 || c >= m.n_classes) throw MalformedInputError("LDA class id out of range");
  return m;
}

}  // namespace perfseg
