#include "perfseg/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include "perfseg/error.hpp"

namespace perfseg {

// --- configuration ---------------------------------------------------------

void PipelineConfig::validate() const {
  slic.validate();
  if (!(t_s >= 0.0 && t_s <= 1.0)) throw ConfigError("ts must lie in [0, 1], got " + std::to_string(t_s));
  if (!(t_p >= 0.0 && t_p <= 1.0)) throw ConfigError("tp must lie in [0, 1], got " + std::to_string(t_p));
  if (!(dt_target_s > 0.0)) throw ConfigError("dt_s must be positive");
  if (!(percentile > 0.0 && percentile <= 100.0)) throw ConfigError("percentile must lie in (0, 100]");
  if (smoothing_sigma < 0.0) throw ConfigError("smoothing_sigma must be non-negative");
  if (clustering_modes < 1) throw ConfigError("clustering_modes must be >= 1");
  if (lda_ridge < 0.0) throw ConfigError("lda_ridge must be non-negative");
  if (!(spatial.sigma_floor_mm > 0.0)) throw ConfigError("sigma_floor_mm must be positive");
  if (!(spatial.location_sigma_floor > 0.0)) throw ConfigError("location_sigma_floor must be positive");
  if (!(epsilon_msg > 0.0) || epsilon_msg > 1e-3) throw ConfigError("epsilon_msg must lie in (0, 1e-3]");
  if (!(unary_weight > 0.0) || !(pairwise_weight > 0.0)) throw ConfigError("factor weights must be positive");
  if (roc_thresholds < 2) throw ConfigError("roc_thresholds must be >= 2");
  if (threads < 0) throw ConfigError("threads must be >= 0");
  if (shrink.x_side_divisor < 1 || shrink.y_top_divisor < 1 || shrink.y_bottom_divisor < 1) {
    throw ConfigError("ROI shrink divisors must be >= 1");
  }
  if (roi_mode == RoiMode::kBox && roi_box.empty()) throw ConfigError("explicit ROI box is empty");
}

nlohmann::json PipelineConfig::to_json() const {
  nlohmann::json roi;
  switch (roi_mode) {
    case RoiMode::kAuto: roi = "auto"; break;
    case RoiMode::kFull: roi = "full"; break;
    case RoiMode::kBox: roi = box_to_json(roi_box); break;
  }
  return {{"supervoxel_size", slic.size_voxels},
          {"compactness", slic.compactness},
          {"slic_max_iters", slic.max_iters},
          {"slic_tol_mm", slic.tol_mm},
          {"perturb_seeds", slic.perturb_seeds},
          {"ts", t_s},
          {"tp", t_p},
          {"dt_s", dt_target_s},
          {"roi", roi},
          {"roi_top_is_row_zero", shrink.top_is_row_zero},
          {"percentile", percentile},
          {"smoothing_sigma", smoothing_sigma},
          {"clustering_modes", clustering_modes},
          {"gradient_order", gradient_order == GradientOrder::kAfterNormalization ? "after" : "before"},
          {"lda_ridge", lda_ridge},
          {"sigma_floor_mm", spatial.sigma_floor_mm},
          {"location_sigma_floor", spatial.location_sigma_floor},
          {"bladder_location_prior", spatial.bladder_location_prior},
          {"epsilon_msg", epsilon_msg},
          {"unary_weight", unary_weight},
          {"pairwise_weight", pairwise_weight},
          {"roc_thresholds", roc_thresholds},
          {"threads", threads},
          {"keep_intermediates", keep_intermediates}};
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j, const PipelineConfig& base) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  PipelineConfig c = base;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "supervoxel_size") c.slic.size_voxels = value.get<int>();
      else if (key == "compactness") c.slic.compactness = value.get<double>();
      else if (key == "slic_max_iters") c.slic.max_iters = value.get<int>();
      else if (key == "slic_tol_mm") c.slic.tol_mm = value.get<double>();
      else if (key == "perturb_seeds") c.slic.perturb_seeds = value.get<bool>();
      else if (key == "ts") c.t_s = value.get<double>();
      else if (key == "tp") c.t_p = value.get<double>();
      else if (key == "dt_s") c.dt_target_s = value.get<double>();
      else if (key == "roi") {
        if (value.is_string() && value == "auto") c.roi_mode = RoiMode::kAuto;
        else if (value.is_string() && value == "full") c.roi_mode = RoiMode::kFull;
        else {
          c.roi_mode = RoiMode::kBox;
          c.roi_box = box_from_json(value);
        }
      }
      else if (key == "roi_top_is_row_zero") c.shrink.top_is_row_zero = value.get<bool>();
      else if (key == "percentile") c.percentile = value.get<double>();
      else if (key == "smoothing_sigma") c.smoothing_sigma = value.get<double>();
      else if (key == "clustering_modes") c.clustering_modes = value.get<int>();
      else if (key == "gradient_order") {
        const auto s = value.get<std::string>();
        if (s == "after") c.gradient_order = GradientOrder::kAfterNormalization;
        else if (s == "before") c.gradient_order = GradientOrder::kBeforeNormalization;
        else throw ConfigError("gradient_order must be 'after' or 'before'");
      }
      else if (key == "lda_ridge") c.lda_ridge = value.get<double>();
      else if (key == "sigma_floor_mm") c.spatial.sigma_floor_mm = value.get<double>();
      else if (key == "location_sigma_floor") c.spatial.location_sigma_floor = value.get<double>();
      else if (key == "bladder_location_prior") c.spatial.bladder_location_prior = value.get<bool>();
      else if (key == "epsilon_msg") c.epsilon_msg = value.get<double>();
      else if (key == "unary_weight") c.unary_weight = value.get<double>();
      else if (key == "pairwise_weight") c.pairwise_weight = value.get<double>();
      else if (key == "roc_thresholds") c.roc_thresholds = value.get<int>();
      else if (key == "threads") c.threads = value.get<int>();
      else if (key == "keep_intermediates") c.keep_intermediates = value.get<bool>();
      else throw ConfigError("unknown configuration key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("configuration key '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) { return from_json(j, PipelineConfig{}); }

PipelineConfig load_config(const std::filesystem::path& path, const PipelineConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("configuration " + path.string() + " is not valid JSON: " + e.what());
  }
  return PipelineConfig::from_json(j, base);
}

void run_stage(const std::string& case_id, const std::string& stage, const std::function<void()>& fn) {
  const std::string prefix = "case " + case_id + ", " + stage + ": ";
  try {
    fn();
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const MalformedInputError& e) {
    throw MalformedInputError(prefix + e.what());
  } catch (const DataError& e) {
    throw DataError(prefix + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error(prefix + e.what());
  }
}

// --- per-case preparation -------------------------------------------------------

namespace {

Eigen::MatrixXd curve_matrix(const Volume4D& v) {
  const auto& h = v.header();
  const auto nv = static_cast<Eigen::Index>(h.voxels());
  Eigen::MatrixXd m(nv, h.frames());
  for (int t = 0; t < h.frames(); ++t)
    for (Eigen::Index i = 0; i < nv; ++i) m(i, t) = v.sample(static_cast<std::size_t>(i), t);
  return m;
}

Eigen::MatrixXd non_air_rows(const Eigen::MatrixXd& curves, const std::vector<std::uint8_t>& air) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < curves.rows(); ++i)
    if (air.empty() || !air[static_cast<std::size_t>(i)]) keep.push_back(i);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(keep.size()), curves.cols());
  for (std::size_t k = 0; k < keep.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = curves.row(keep[k]);
  return out;
}

}  // namespace

PreparedCase prepare_from_se(const std::string& id, SeVolume se, const PipelineConfig& config,
                             std::optional<LabelVolume> truth) {
  PreparedCase c;
  c.id = id;
  c.se = std::move(se);
  if (truth) {
    run_stage(id, "ground truth", [&] {
      const auto& th = truth->header();
      const auto& sh = c.se.source_header;
      if (th.nx() != sh.nx() || th.ny() != sh.ny() || th.nz() != sh.nz()) {
        throw DataError("ground truth dims do not match the scan");
      }
      c.truth = crop(*truth, c.se.roi);
      c.truth_full = std::move(truth);
    });
  }
  run_stage(id, "pca", [&] {
    c.curves = se_curves(c.se, config.smoothing_sigma);
    c.clustering_basis = fit_pca(non_air_rows(c.curves, c.se.air), config.clustering_modes, {0.0});
  });
  run_stage(id, "supervoxel", [&] {
    const auto modes = normalize_modes(project_rows(c.clustering_basis, c.curves), config.clustering_modes);
    const auto grid = c.se.se.header().spatial();
    c.map = run_slic(modes.values, grid, config.slic, Box::full(grid));
  });
  return c;
}

PreparedCase prepare_case(const std::string& id, const Volume4D& scan, const PipelineConfig& config,
                          std::optional<LabelVolume> truth) {
  config.validate();
  SeVolume se;
  run_stage(id, "preprocess", [&] {
    PreprocessOptions opts;
    opts.dt_target_s = config.dt_target_s;
    opts.shrink = config.shrink;
    opts.percentile = config.percentile;
    if (config.roi_mode == RoiMode::kFull) opts.roi = Box::full(scan.header());
    if (config.roi_mode == RoiMode::kBox) {
      if (!Box::full(scan.header()).contains(config.roi_box)) throw ConfigError("ROI box exceeds the scan");
      opts.roi = config.roi_box;
    }
    se = preprocess(scan, opts);
  });
  return prepare_from_se(id, std::move(se), config, std::move(truth));
}

Eigen::MatrixXd se_curves(const SeVolume& se, double sigma) {
  Eigen::MatrixXd curves = curve_matrix(se.se);
  smooth_rows(curves, sigma);
  return curves;
}

Eigen::MatrixXd fit_curve_length(const Eigen::MatrixXd& curves, int length) {
  if (curves.cols() == length) return curves;
  if (curves.cols() == 0) throw DataError("cannot extend empty curves");
  Eigen::MatrixXd out(curves.rows(), length);
  const auto keep = std::min<Eigen::Index>(length, curves.cols());
  out.leftCols(keep) = curves.leftCols(keep);
  for (Eigen::Index t = keep; t < length; ++t) out.col(t) = curves.col(curves.cols() - 1);
  return out;
}

Eigen::MatrixXd feature_coefficients(const PreparedCase& c, const PcaBasis& reference) {
  return project_rows(reference, fit_curve_length(c.curves, reference.length()));
}

// --- model -----------------------------------------------------------------

nlohmann::json model_to_json(const Model& m) {
  return {{"format", "perfseg-model"},
          {"version", 1},
          {"reference_basis", basis_to_json(m.reference)},
          {"feature_normalization", normalization_to_json(m.normalization)},
          {"feature_columns", feature_column_names()},
          {"lda", lda_to_json(m.lda)},
          {"parts", parts_to_json(m.parts)},
          {"params", m.params}};
}

Model model_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", std::string()) != "perfseg-model") {
    throw MalformedInputError("not a perfseg model file");
  }
  Model m;
  try {
    m.reference = basis_from_json(j.at("reference_basis"));
    m.normalization = normalization_from_json(j.at("feature_normalization"));
    m.lda = lda_from_json(j.at("lda"));
    m.parts = parts_from_json(j.at("parts"));
    m.params = j.value("params", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInputError(std::string("bad model file: ") + e.what());
  }
  if (m.reference.modes() != kFeatureModes) throw MalformedInputError("reference basis must have 5 modes");
  if (m.lda.dims() != kFeatureColumns) throw MalformedInputError("LDA model must have 20 feature columns");
  return m;
}

void save_model(const Model& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write model " + path.string());
  out << model_to_json(m).dump(1) << '\n';
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("model file " + path.string() + " is not valid JSON: " + e.what());
  }
  return model_from_json(j);
}

Model train_model(std::span<const PreparedCase* const> cases, const PipelineConfig& config,
                  std::vector<std::string>* warnings) {
  config.validate();
  if (cases.empty()) throw DataError("no training cases");
  for (const auto* c : cases)
    if (!c->truth) throw DataError("training case " + c->id + " has no ground truth");

  Model model;
  model.params = config.to_json();
  const PreparedCase& ref = *cases.front();
  run_stage(ref.id, "reference basis", [&] {
    model.reference = fit_pca(non_air_rows(ref.curves, ref.se.air), kFeatureModes, {0.0});
  });

  std::vector<CaseFeatures> features(cases.size());
  std::vector<std::vector<int>> labels(cases.size());
  std::vector<SpatialCase> spatial(cases.size());
  for (std::size_t k = 0; k < cases.size(); ++k) {
    const PreparedCase& c = *cases[k];
    run_stage(c.id, "training labels", [&] {
      const auto coeffs = feature_coefficients(c, model.reference);
      std::vector<std::string> local;
      labels[k] = make_training_labels(c.map, *c.truth, coeffs, &local);
      if (warnings)
        for (auto& w : local) warnings->push_back("case " + c.id + ": " + w);
      features[k] = case_features(c.map, coeffs);
      spatial[k] = spatial_case(c.map, labels[k]);
    });
  }
  run_stage("training set", "feature normalisation", [&] {
    model.normalization = fit_feature_normalization(features, config.gradient_order);
  });
  run_stage("training set", "classifier", [&] {
    std::vector<Eigen::MatrixXd> rows;
    std::vector<int> y;
    Eigen::Index total = 0;
    for (std::size_t k = 0; k < cases.size(); ++k) {
      rows.push_back(assemble_features(features[k], model.normalization));
      total += rows.back().rows();
      y.insert(y.end(), labels[k].begin(), labels[k].end());
    }
    Eigen::MatrixXd x(total, kFeatureColumns);
    Eigen::Index r = 0;
    for (const auto& m : rows) {
      x.middleRows(r, m.rows()) = m;
      r += m.rows();
    }
    LdaOptions opts;
    opts.ridge = config.lda_ridge;
    model.lda = train_lda(x, y, opts);
  });
  run_stage("training set", "spatial model", [&] {
    std::vector<std::string> local;
    model.parts = train_spatial(spatial, config.spatial, &local);
    if (warnings)
      for (auto& w : local) warnings->push_back(w);
    model.parts.epsilon_msg = config.epsilon_msg;
    model.parts.unary_weight = config.unary_weight;
    model.parts.pairwise_weight = config.pairwise_weight;
  });
  return model;
}

// --- inference and evaluation -------------------------------------------------------

CaseResult segment_case(const PreparedCase& c, const Model& model, const PipelineConfig& config) {
  config.validate();
  CaseResult r;
  r.id = c.id;
  run_stage(c.id, "features", [&] {
    const auto coeffs = feature_coefficients(c, model.reference);
    r.features = assemble_features(case_features(c.map, coeffs), model.normalization);
  });
  run_stage(c.id, "classifier", [&] { r.unary = predict_proba(model.lda, r.features); });
  run_stage(c.id, "pieces-of-parts", [&] {
    PartsModel parts = model.parts;
    parts.epsilon_msg = config.epsilon_msg;
    parts.unary_weight = config.unary_weight;
    parts.pairwise_weight = config.pairwise_weight;
    r.beliefs = pieces_of_parts(r.unary, candidates_from_map(c.map), parts);
  });
  run_stage(c.id, "postprocess", [&] {
    const auto tumour = static_cast<int>(Tissue::kTumour);
    std::vector<double> unary(c.map.labels.size(), 0.0), pop(c.map.labels.size(), 0.0);
    for (std::size_t v = 0; v < c.map.labels.size(); ++v) {
      const int l = c.map.labels[v];
      if (l < 0) continue;
      unary[v] = r.unary.prob(l, tumour);
      pop[v] = r.beliefs.root[static_cast<std::size_t>(l)];
    }
    const auto& full = c.se.source_header;
    r.unary_voxels = embed(unary, c.se.roi, full, 0.0);
    r.pop_voxels = embed(pop, c.se.roi, full, 0.0);
    r.seg_sv = threshold_and_lcc(r.unary_voxels, full, config.t_s, true);
    r.seg_sv_nopost = threshold_and_lcc(r.unary_voxels, full, config.t_s, false);
    r.seg_pop = threshold_and_lcc(r.pop_voxels, full, config.t_p, true);
  });
  return r;
}

namespace {

std::vector<double> crop_values(const std::vector<double>& full, const VolumeHeader& h, const Box& roi) {
  std::vector<double> out;
  out.reserve(roi.voxels());
  for (int z = roi.lo[2]; z < roi.hi[2]; ++z)
    for (int y = roi.lo[1]; y < roi.hi[1]; ++y)
      for (int x = roi.lo[0]; x < roi.hi[0]; ++x) out.push_back(full[h.index(x, y, z)]);
  return out;
}

double safe_auc(const std::vector<double>& belief, std::span<const std::uint8_t> truth, int n) {
  const auto positives = std::count_if(truth.begin(), truth.end(), [](auto v) { return v != 0; });
  if (positives == 0 || static_cast<std::size_t>(positives) == truth.size()) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return roc(belief, truth, n).auc;
}

}  // namespace

CaseMetrics evaluate_case(const PreparedCase& c, const CaseResult& r, const PipelineConfig& config) {
  if (!c.truth_full) throw DataError("case " + c.id + " has no ground truth to evaluate against");
  CaseMetrics m;
  m.id = c.id;
  run_stage(c.id, "evaluate", [&] {
    const auto truth = c.truth_full->mask_of(static_cast<std::uint8_t>(Tissue::kTumour));
    m.dsc_sv = dsc(r.seg_sv.mask.labels(), truth);
    m.dsc_sv_nopost = dsc(r.seg_sv_nopost.mask.labels(), truth);
    m.dsc_pop = dsc(r.seg_pop.mask.labels(), truth);
    const auto conf = confusion(r.seg_pop.mask.labels(), truth);
    m.sensitivity_pop = conf.sensitivity();
    m.specificity_pop = conf.specificity();
    const auto roi_truth = c.truth->mask_of(static_cast<std::uint8_t>(Tissue::kTumour));
    const auto& full = c.se.source_header;
    m.auc_sv = safe_auc(crop_values(r.unary_voxels, full, c.se.roi), roi_truth, config.roc_thresholds);
    m.auc_pop = safe_auc(crop_values(r.pop_voxels, full, c.se.roi), roi_truth, config.roc_thresholds);
    m.detected_sv = detection_flag(m.dsc_sv);
    m.detected_pop = detection_flag(m.dsc_pop);
  });
  return m;
}

// --- cross-validation --------------------------------------------------------

std::vector<CaseInput> discover_cases(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw ConfigError("case directory " + dir.string() + " does not exist");
  std::vector<CaseInput> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_directory()) continue;
    CaseInput in;
    in.id = entry.path().filename().string();
    if (fs::exists(entry.path() / "scan.json")) in.scan = entry.path() / "scan.json";
    else if (fs::exists(entry.path() / "scan.nii")) in.scan = entry.path() / "scan.nii";
    else continue;
    if (fs::exists(entry.path() / "gt.json")) in.truth = entry.path() / "gt.json";
    out.push_back(std::move(in));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  int workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::clamp(workers, 1, n);
  std::vector<std::exception_ptr> errors(n);
  if (workers == 1) {
    for (int i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

CrossvalReport crossval(std::span<const PreparedCase> cases, const PipelineConfig& config) {
  config.validate();
  CrossvalReport report;
  std::vector<const PreparedCase*> usable;
  for (const auto& c : cases) {
    if (c.truth) usable.push_back(&c);
    else report.warnings.push_back("case " + c.id + " has no ground truth; excluded");
  }
  const int n = static_cast<int>(usable.size());
  if (n < 3) throw DataError("cross-validation needs at least 3 cases with ground truth, got " + std::to_string(n));

  report.cases.resize(n);
  std::vector<std::vector<std::string>> fold_warnings(n);
  parallel_for(n, config.threads, [&](int i) {
    std::vector<const PreparedCase*> training;
    for (int k = 0; k < n; ++k)
      if (k != i) training.push_back(usable[k]);
    const Model model = train_model(training, config, &fold_warnings[i]);
    const CaseResult result = segment_case(*usable[i], model, config);
    report.cases[i] = evaluate_case(*usable[i], result, config);
  });
  for (int i = 0; i < n; ++i)
    for (auto& w : fold_warnings[i]) report.warnings.push_back("fold " + usable[i]->id + ": " + w);

  std::vector<double> sv, nopost, pop;
  for (const auto& m : report.cases) {
    sv.push_back(m.dsc_sv);
    nopost.push_back(m.dsc_sv_nopost);
    pop.push_back(m.dsc_pop);
    report.detections_sv += m.detected_sv;
    report.detections_pop += m.detected_pop;
  }
  report.median_dsc_sv = median(sv);
  report.median_dsc_sv_nopost = median(nopost);
  report.median_dsc_pop = median(pop);
  return report;
}

CrossvalReport crossval(std::span<const CaseInput> inputs, const PipelineConfig& config) {
  config.validate();
  std::vector<std::string> skipped;
  std::vector<const CaseInput*> usable;
  for (const auto& in : inputs) {
    if (in.truth) usable.push_back(&in);
    else skipped.push_back("case " + in.id + " has no ground truth; excluded");
  }
  if (usable.size() < 3) {
    throw DataError("cross-validation needs at least 3 cases with ground truth, got " +
                    std::to_string(usable.size()));
  }
  std::vector<PreparedCase> prepared(usable.size());
  parallel_for(static_cast<int>(usable.size()), config.threads, [&](int i) {
    const CaseInput& in = *usable[i];
    Volume4D scan;
    LabelVolume truth;
    run_stage(in.id, "load", [&] {
      scan = load_volume(in.scan);
      truth = read_labels(*in.truth);
    });
    prepared[i] = prepare_case(in.id, scan, config, std::move(truth));
  });
  CrossvalReport report = crossval(std::span<const PreparedCase>(prepared), config);
  report.warnings.insert(report.warnings.begin(), skipped.begin(), skipped.end());
  return report;
}

void write_metrics_csv(const CrossvalReport& report, std::ostream& out) {
  out << "case,dsc_sv,dsc_sv_nopost,dsc_pop,sens_pop,spec_pop,auc_sv,auc_pop,detected_sv,detected_pop\n";
  for (const auto& m : report.cases) {
    out << m.id << ',' << format_metric(m.dsc_sv) << ',' << format_metric(m.dsc_sv_nopost) << ','
        << format_metric(m.dsc_pop) << ',' << format_metric(m.sensitivity_pop) << ','
        << format_metric(m.specificity_pop) << ',' << format_metric(m.auc_sv) << ',' << format_metric(m.auc_pop)
        << ',' << (m.detected_sv ? 1 : 0) << ',' << (m.detected_pop ? 1 : 0) << '\n';
  }
  std::vector<double> auc_sv, auc_pop;
  for (const auto& m : report.cases) {
    if (!std::isnan(m.auc_sv)) auc_sv.push_back(m.auc_sv);
    if (!std::isnan(m.auc_pop)) auc_pop.push_back(m.auc_pop);
  }
  const auto total = std::to_string(report.cases.size());
  out << "median," << format_metric(report.median_dsc_sv) << ',' << format_metric(report.median_dsc_sv_nopost)
      << ',' << format_metric(report.median_dsc_pop) << ",,," << format_metric(median(auc_sv)) << ','
      << format_metric(median(auc_pop)) << ',' << report.detections_sv << '/' << total << ','
      << report.detections_pop << '/' << total << '\n';
}

void write_intermediates(const std::filesystem::path& dir, const PreparedCase& c, const CaseResult* result) {
  std::filesystem::create_directories(dir);
  write_se(c.se, dir / "se.json");
  write_supervoxels(c.map, dir / "sv.json");
  if (result) {
    std::ofstream out(dir / "features.json", std::ios::trunc);
    if (!out) throw DataError("cannot write " + (dir / "features.json").string());
    out << features_to_json(result->features).dump(1) << '\n';
  }
}

}  // namespace perfseg
