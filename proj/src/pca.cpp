#include "perfseg/pca.hpp"

#include <algorithm>
#include <cmath>

#include "perfseg/error.hpp"

namespace perfseg {

std::vector<double> PcaBasis::explained_variance() const {
  std::vector<double> out;
  double running = 0.0;
  for (int k = 0; k < eigenvalues.size(); ++k) {
    running += eigenvalues[k];
    out.push_back(total_variance > 0.0 ? running / total_variance : 0.0);
  }
  return out;
}

namespace {

// Half-sample symmetric reflection: (d c b a | a b c d | d c b a).
Eigen::Index reflect(Eigen::Index i, Eigen::Index n) {
  const Eigen::Index period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

}  // namespace

Eigen::VectorXd gaussian_smooth(const Eigen::VectorXd& curve, double sigma) {
  if (sigma <= 0.0 || curve.size() == 0) return curve;
  const int radius = static_cast<int>(4.0 * sigma + 0.5);
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[k + radius] = std::exp(-0.5 * (k * k) / (sigma * sigma));
    sum += kernel[k + radius];
  }
  for (double& w : kernel) w /= sum;
  const Eigen::Index n = curve.size();
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * curve[reflect(i + k, n)];
    out[i] = acc;
  }
  return out;
}

void smooth_rows(Eigen::MatrixXd& curves, double sigma) {
  if (sigma <= 0.0) return;
  for (Eigen::Index r = 0; r < curves.rows(); ++r) {
    curves.row(r) = gaussian_smooth(curves.row(r).transpose(), sigma).transpose();
  }
}

PcaBasis fit_pca(const Eigen::MatrixXd& curves, int modes, const PcaOptions& options) {
  const Eigen::Index n = curves.rows();
  const Eigen::Index length = curves.cols();
  if (n < 2) throw DataError("PCA needs at least 2 curves");
  if (modes < 1 || modes > length) {
    throw ConfigError("PCA mode count " + std::to_string(modes) + " outside [1, T]");
  }
  Eigen::MatrixXd x = curves;
  smooth_rows(x, options.smoothing_sigma);

  PcaBasis basis;
  basis.mean_curve = x.colwise().mean().transpose();
  x.rowwise() -= basis.mean_curve.transpose();
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);
  basis.total_variance = cov.trace();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw DataError("covariance eigen-decomposition failed");
  // Eigen returns ascending eigenvalues.
  basis.components.resize(modes, length);
  basis.eigenvalues.resize(modes);
  for (int k = 0; k < modes; ++k) {
    const Eigen::Index col = length - 1 - k;
    Eigen::VectorXd v = solver.eigenvectors().col(col);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0.0) v = -v;
    basis.components.row(k) = v.transpose();
    basis.eigenvalues[k] = std::max(0.0, solver.eigenvalues()[col]);
  }
  return basis;
}

Eigen::VectorXd project(const PcaBasis& basis, const Eigen::VectorXd& curve) {
  if (curve.size() != basis.length()) {
    throw DataError("curve length " + std::to_string(curve.size()) + " does not match basis length " +
                    std::to_string(basis.length()));
  }
  return basis.components * (curve - basis.mean_curve);
}

Eigen::MatrixXd project_rows(const PcaBasis& basis, const Eigen::MatrixXd& curves) {
  if (curves.cols() != basis.length()) {
    throw DataError("curve length " + std::to_string(curves.cols()) + " does not match basis length " +
                    std::to_string(basis.length()));
  }
  Eigen::MatrixXd centred = curves;
  centred.rowwise() -= basis.mean_curve.transpose();
  return centred * basis.components.transpose();
}

Eigen::VectorXd reconstruct(const PcaBasis& basis, const Eigen::VectorXd& coefficients) {
  if (coefficients.size() != basis.modes()) {
    throw DataError("coefficient count " + std::to_string(coefficients.size()) +
                    " does not match basis modes " + std::to_string(basis.modes()));
  }
  return basis.mean_curve + basis.components.transpose() * coefficients;
}

NormalizedModes normalize_modes(const Eigen::MatrixXd& coefficients, int modes) {
  if (modes < 1 || modes > coefficients.cols()) throw ConfigError("invalid mode count");
  NormalizedModes out;
  out.values.resize(coefficients.rows(), modes);
  for (int k = 0; k < modes; ++k) {
    const auto col = coefficients.col(k);
    const double lo = coefficients.rows() ? col.minCoeff() : 0.0;
    const double hi = coefficients.rows() ? col.maxCoeff() : 0.0;
    out.mins.push_back(lo);
    out.maxs.push_back(hi);
    const bool flat = !(hi > lo);
    out.degenerate.push_back(flat);
    if (flat) {
      out.values.col(k).setConstant(0.5);
    } else {
      out.values.col(k) = (col.array() - lo) / (hi - lo);
    }
  }
  return out;
}

nlohmann::json basis_to_json(const PcaBasis& basis) {
  std::vector<double> mean(basis.mean_curve.data(), basis.mean_curve.data() + basis.length());
  std::vector<std::vector<double>> comps;
  for (int k = 0; k < basis.modes(); ++k) {
    std::vector<double> row(basis.length());
    for (int t = 0; t < basis.length(); ++t) row[t] = basis.components(k, t);
    comps.push_back(std::move(row));
  }
  std::vector<double> eig(basis.eigenvalues.data(), basis.eigenvalues.data() + basis.modes());
  return {{"mean_curve", mean},
          {"components", comps},
          {"eigenvalues", eig},
          {"total_variance", basis.total_variance}};
}

PcaBasis basis_from_json(const nlohmann::json& j) {
  PcaBasis basis;
  try {
    const auto mean = j.at("mean_curve").get<std::vector<double>>();
    const auto comps = j.at("components").get<std::vector<std::vector<double>>>();
    const auto eig = j.at("eigenvalues").get<std::vector<double>>();
    const auto length = static_cast<Eigen::Index>(mean.size());
    basis.mean_curve = Eigen::Map<const Eigen::VectorXd>(mean.data(), length);
    basis.components.resize(static_cast<Eigen::Index>(comps.size()), length);
    for (std::size_t k = 0; k < comps.size(); ++k) {
      if (static_cast<Eigen::Index>(comps[k].size()) != length) {
        throw MalformedInputError("PCA component length mismatch");
      }
      for (Eigen::Index t = 0; t < length; ++t) basis.components(static_cast<Eigen::Index>(k), t) = comps[k][t];
    }
    if (eig.size() != comps.size()) throw MalformedInputError("PCA eigenvalue count mismatch");
    basis.eigenvalues = Eigen::Map<const Eigen::VectorXd>(eig.data(), static_cast<Eigen::Index>(eig.size()));
    basis.total_variance = j.value("total_variance", basis.eigenvalues.sum());
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInputError(std::string("bad PCA basis: ") + e.what());
  }
  return basis;
}

}  // namespace perfseg
