// perfseg command-line driver.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "perfseg/error.hpp"
#include "perfseg/evaluate.hpp"
#include "perfseg/phantom.hpp"
#include "perfseg/pipeline.hpp"

namespace fs = std::filesystem;
using namespace perfseg;

namespace {

struct Globals {
  std::string config_path;
  std::uint64_t seed = 1;
  bool keep_intermediates = false;
  int threads = -1;
};

// Unset optionals leave the config value alone.
struct Overrides {
  std::optional<double> ts, tp, dt, compactness;
  std::optional<int> size;
  std::string roi;
};

Box parse_roi_box(const std::string& text) {
  std::vector<int> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--roi expects auto, full or x0,x1,y0,y1,z0,z1; got '" + text + "'");
    }
  }
  if (v.size() != 6) throw ConfigError("--roi expects six integers, got '" + text + "'");
  return {{v[0], v[2], v[4]}, {v[1], v[3], v[5]}};
}

PipelineConfig make_config(const Globals& g, const Overrides& o) {
  PipelineConfig c = g.config_path.empty() ? PipelineConfig{} : load_config(g.config_path);
  if (o.ts) c.t_s = *o.ts;
  if (o.tp) c.t_p = *o.tp;
  if (o.dt) c.dt_target_s = *o.dt;
  if (o.compactness) c.slic.compactness = *o.compactness;
  if (o.size) c.slic.size_voxels = *o.size;
  if (o.roi == "auto") c.roi_mode = RoiMode::kAuto;
  else if (o.roi == "full") c.roi_mode = RoiMode::kFull;
  else if (!o.roi.empty()) {
    c.roi_mode = RoiMode::kBox;
    c.roi_box = parse_roi_box(o.roi);
  }
  if (g.keep_intermediates) c.keep_intermediates = true;
  if (g.threads >= 0) c.threads = g.threads;
  c.validate();
  return c;
}

fs::path sibling(const fs::path& p, const std::string& suffix) {
  return p.parent_path() / (p.stem().string() + suffix);
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw DataError("cannot write " + p.string());
  out << text;
}

bool is_se_file(const fs::path& p) {
  return p.extension() != ".nii" && read_header_json(p).contains("se");
}

// SE input is used as is; a raw scan goes through preprocessing first.
PreparedCase load_case(const std::string& id, const fs::path& in, const std::optional<fs::path>& sv,
                       const PipelineConfig& config, std::optional<LabelVolume> truth = std::nullopt) {
  PreparedCase c = is_se_file(in) ? prepare_from_se(id, read_se(in), config, std::move(truth))
                                  : prepare_case(id, load_volume(in), config, std::move(truth));
  if (sv) {
    run_stage(id, "supervoxel", [&] {
      c.map = read_supervoxels(*sv);
      if (c.map.grid.nx() != c.se.se.header().nx() || c.map.grid.ny() != c.se.se.header().ny() ||
          c.map.grid.nz() != c.se.se.header().nz()) {
        throw DataError("supervoxel map does not match the SE grid");
      }
    });
  }
  return c;
}

std::vector<PreparedCase> load_training_cases(const fs::path& dir, const PipelineConfig& config) {
  std::vector<CaseInput> inputs;
  for (auto& in : discover_cases(dir)) {
    if (in.truth) inputs.push_back(std::move(in));
    else std::cerr << "warning: case " << in.id << " has no ground truth; excluded\n";
  }
  if (inputs.empty()) throw DataError("no cases with ground truth under " + dir.string());
  std::vector<PreparedCase> cases(inputs.size());
  parallel_for(static_cast<int>(inputs.size()), config.threads, [&](int i) {
    cases[i] = prepare_case(inputs[i].id, load_volume(inputs[i].scan), config, read_labels(*inputs[i].truth));
  });
  return cases;
}

int cmd_phantom(const Globals& g, const fs::path& out, double noise, bool decoy, bool jitter) {
  PhantomSpec base;
  base.noise_sigma = noise;
  PhantomSpec spec = jitter ? jitter_geometry(base, g.seed) : base;
  spec.seed = g.seed;
  if (decoy) spec.decoy = Ellipsoid{{38.0, 20.0, 8.0}, {3.5, 3.5, 5.0}};
  const Phantom p = generate(spec);
  fs::create_directories(out);
  write_volume(p.scan, out / "scan.json", {{"phantom_seed", g.seed}});
  write_labels(p.truth, out / "gt.json");
  if (decoy) write_labels(LabelVolume(p.truth.header(), p.decoy, {{0, "other"}, {1, "decoy"}}), out / "decoy.json");
  std::cout << "wrote " << (out / "scan.json").string() << " and " << (out / "gt.json").string() << '\n';
  return 0;
}

int cmd_preprocess(const PipelineConfig& config, const fs::path& in, const fs::path& out) {
  SeVolume se;
  run_stage(in.string(), "preprocess", [&] {
    const Volume4D raw = load_volume(in);
    PreprocessOptions opts;
    opts.dt_target_s = config.dt_target_s;
    opts.shrink = config.shrink;
    opts.percentile = config.percentile;
    if (config.roi_mode == RoiMode::kFull) opts.roi = Box::full(raw.header());
    if (config.roi_mode == RoiMode::kBox) {
      if (!Box::full(raw.header()).contains(config.roi_box)) throw ConfigError("ROI box exceeds the scan");
      opts.roi = config.roi_box;
    }
    se = preprocess(raw, opts);
  });
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_se(se, out);
  std::cout << "injection frame " << se.injection_index << ", ROI " << box_to_json(se.roi).dump() << ", "
            << se.air_count() << " air voxels\n";
  return 0;
}

int cmd_supervoxel(const PipelineConfig& config, const fs::path& in, const fs::path& out) {
  const PreparedCase c = prepare_from_se(in.stem().string(), read_se(in), config);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_supervoxels(c.map, out);
  std::cout << c.map.count() << " supervoxels\n";
  return 0;
}

int cmd_features(const PipelineConfig& config, const fs::path& se, const fs::path& sv,
                 const std::string& model_path, const fs::path& out) {
  const PreparedCase c = load_case(se.stem().string(), se, sv, config);
  Eigen::MatrixXd features;
  run_stage(c.id, "features", [&] {
    if (!model_path.empty()) {
      const Model m = load_model(model_path);
      features = assemble_features(case_features(c.map, feature_coefficients(c, m.reference)), m.normalization);
    } else {
      // Without a model the case supplies its own basis and ranges.
      const PcaBasis basis = fit_pca(c.curves, kFeatureModes, {0.0});
      const CaseFeatures cf = case_features(c.map, feature_coefficients(c, basis));
      features = assemble_features(cf, fit_feature_normalization(std::span(&cf, 1), config.gradient_order));
    }
  });
  write_text(out, features_to_json(features).dump(1) + "\n");
  std::cout << features.rows() << " x " << features.cols() << " features\n";
  return 0;
}

int cmd_train(const PipelineConfig& config, const fs::path& cases_dir, const fs::path& out) {
  const auto cases = load_training_cases(cases_dir, config);
  std::vector<const PreparedCase*> ptrs;
  for (const auto& c : cases) ptrs.push_back(&c);
  std::vector<std::string> warnings;
  const Model model = train_model(ptrs, config, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_model(model, out);
  std::cout << "trained on " << cases.size() << " cases\n";
  return 0;
}

int cmd_segment(const PipelineConfig& config, const std::string& model_path, const fs::path& in,
                const std::optional<fs::path>& sv, const fs::path& out) {
  const Model model = load_model(model_path);
  const PreparedCase c = load_case(in.stem().string(), in, sv, config);
  const CaseResult r = segment_case(c, model, config);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  const nlohmann::json roi = {{"roi", box_to_json(c.se.roi)}};
  write_labels(r.seg_pop.mask, out, {{"threshold", config.t_p}});
  write_labels(r.seg_sv.mask, sibling(out, "_sv.json"), {{"threshold", config.t_s}});
  write_labels(r.seg_sv_nopost.mask, sibling(out, "_sv_nopost.json"), {{"threshold", config.t_s}});
  const auto& full = c.se.source_header.spatial();
  auto to_float = [&](const std::vector<double>& v) {
    return Volume4D(full, std::vector<float>(v.begin(), v.end()));
  };
  write_volume(to_float(r.pop_voxels), sibling(out, "_belief.json"), roi);
  write_volume(to_float(r.unary_voxels), sibling(out, "_unary.json"), roi);
  if (config.keep_intermediates) write_intermediates(sibling(out, "_intermediates"), c, &r);
  std::cout << c.map.count() << " supervoxels; tumour voxels: pieces-of-parts " << r.seg_pop.voxels
            << ", supervoxel-only " << r.seg_sv.voxels << (r.seg_pop.no_detection ? " (no detection)" : "")
            << '\n';
  return 0;
}

int cmd_evaluate(const PipelineConfig& config, const fs::path& seg_path, const fs::path& truth_path,
                 const fs::path& out, const std::string& belief_path, const std::string& roc_path) {
  const LabelVolume seg = read_labels(seg_path);
  const LabelVolume truth = read_labels(truth_path);
  if (!(seg.header().spatial() == truth.header().spatial())) {
    throw DataError("segmentation and ground truth grids differ");
  }
  const auto t = truth.mask_of(static_cast<std::uint8_t>(Tissue::kTumour));
  const auto s = seg.mask_of(static_cast<std::uint8_t>(Tissue::kTumour));
  const double d = dsc(s, t);
  const Confusion conf = confusion(s, t);
  double auc = std::numeric_limits<double>::quiet_NaN();
  if (!belief_path.empty()) {
    const Volume4D belief = read_volume(belief_path);
    if (!(belief.header().spatial() == truth.header().spatial())) throw DataError("belief grid differs from truth");
    const auto meta = read_header_json(belief_path);
    const VolumeHeader& h = truth.header();
    const Box roi = meta.contains("roi") ? box_from_json(meta["roi"]) : Box::full(h);
    std::vector<double> b;
    std::vector<std::uint8_t> tt;
    for (int z = roi.lo[2]; z < roi.hi[2]; ++z)
      for (int y = roi.lo[1]; y < roi.hi[1]; ++y)
        for (int x = roi.lo[0]; x < roi.hi[0]; ++x) {
          b.push_back(belief.at(x, y, z));
          tt.push_back(t[h.index(x, y, z)]);
        }
    const RocCurve curve = roc(b, tt, config.roc_thresholds);
    auc = curve.auc;
    if (!roc_path.empty()) {
      std::ostringstream csv;
      write_roc_csv(curve, csv);
      write_text(roc_path, csv.str());
    }
  }
  std::ostringstream csv;
  csv << "case,dsc,sens,spec,auc,detected\n"
      << seg_path.stem().string() << ',' << format_metric(d) << ',' << format_metric(conf.sensitivity()) << ','
      << format_metric(conf.specificity()) << ',' << format_metric(auc) << ',' << (detection_flag(d) ? 1 : 0)
      << '\n';
  write_text(out, csv.str());
  std::cout << csv.str();
  return 0;
}

int cmd_crossval(const PipelineConfig& config, const fs::path& cases_dir, const fs::path& out) {
  const auto inputs = discover_cases(cases_dir);
  const CrossvalReport report = crossval(std::span<const CaseInput>(inputs), config);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  std::ostringstream csv;
  write_metrics_csv(report, csv);
  write_text(out, csv.str());
  std::cout << csv.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Perfusion-supervoxel tumour segmentation of dynamic contrast-enhanced MRI"};
  app.require_subcommand(1);
  Globals g;
  Overrides o;
  app.add_option("--config", g.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Random seed");
  app.add_flag("--keep-intermediates", g.keep_intermediates, "Write intermediate artifacts");
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)");

  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic phantom case");
  std::string out_dir;
  double noise = 2.0;
  bool decoy = false, no_jitter = false;
  phantom->add_option("--out", out_dir, "Output directory")->required();
  phantom->add_option("--noise", noise, "Noise sigma in intensity units");
  phantom->add_flag("--decoy", decoy, "Add a tumour-like decoy blob away from the lumen");
  phantom->add_flag("--no-jitter", no_jitter, "Use the base geometry");
  phantom->add_option("--seed", g.seed, "Random seed");

  auto* pre = app.add_subcommand("preprocess", "Scan to normalised signal-enhancement volume");
  std::string in, out;
  pre->add_option("--in", in, "Scan header (.json) or NIfTI (.nii)")->required();
  pre->add_option("--out", out, "SE volume header")->required();
  pre->add_option("--dt", o.dt, "Target frame interval in seconds");
  pre->add_option("--roi", o.roi, "auto, full or x0,x1,y0,y1,z0,z1");

  auto* sv = app.add_subcommand("supervoxel", "Perfusion-supervoxels of an SE volume");
  sv->add_option("--in", in, "SE volume header")->required();
  sv->add_option("--out", out, "Supervoxel map header")->required();
  sv->add_option("--size", o.size, "Mean supervoxel size in voxels");
  sv->add_option("--compactness", o.compactness, "Compactness");

  auto* feat = app.add_subcommand("features", "Supervoxel feature matrix");
  std::string sv_path, model_path;
  feat->add_option("--se", in, "SE volume header")->required();
  feat->add_option("--sv", sv_path, "Supervoxel map header")->required();
  feat->add_option("--model", model_path, "Model supplying the basis and feature ranges");
  feat->add_option("--out", out, "Feature JSON")->required();

  auto* train = app.add_subcommand("train", "Train the classifier and spatial model");
  std::string cases_dir;
  train->add_option("--cases", cases_dir, "Directory of case directories")->required();
  train->add_option("--out", out, "Model JSON")->required();
  train->add_option("--size", o.size, "Mean supervoxel size in voxels");

  auto* seg = app.add_subcommand("segment", "Segment a case with a trained model");
  seg->add_option("--model", model_path, "Model JSON")->required();
  seg->add_option("--in", in, "SE volume or scan")->required();
  seg->add_option("--sv", sv_path, "Reuse a supervoxel map");
  seg->add_option("--out", out, "Segmentation label volume")->required();
  seg->add_option("--tp", o.tp, "Pieces-of-parts belief threshold");
  seg->add_option("--ts", o.ts, "Unary threshold");

  auto* eval = app.add_subcommand("evaluate", "Compare a segmentation with ground truth");
  std::string truth_path, belief_path, roc_path;
  eval->add_option("--seg", in, "Segmentation label volume")->required();
  eval->add_option("--truth", truth_path, "Ground-truth label volume")->required();
  eval->add_option("--out", out, "Metrics CSV")->required();
  eval->add_option("--belief", belief_path, "Belief volume for the ROC analysis");
  eval->add_option("--roc", roc_path, "ROC table CSV (needs --belief)");

  auto* cv = app.add_subcommand("crossval", "Leave-one-out cross-validation over a case directory");
  cv->add_option("--cases", cases_dir, "Directory of case directories")->required();
  cv->add_option("--out", out, "Metrics CSV")->required();
  cv->add_option("--size", o.size, "Mean supervoxel size in voxels");
  cv->add_option("--ts", o.ts, "Unary threshold");
  cv->add_option("--tp", o.tp, "Pieces-of-parts belief threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (phantom->parsed()) return cmd_phantom(g, out_dir, noise, decoy, !no_jitter);
    const PipelineConfig config = make_config(g, o);
    if (pre->parsed()) return cmd_preprocess(config, in, out);
    if (sv->parsed()) return cmd_supervoxel(config, in, out);
    if (feat->parsed()) return cmd_features(config, in, sv_path, model_path, out);
    if (train->parsed()) return cmd_train(config, cases_dir, out);
    if (seg->parsed()) {
      std::optional<fs::path> reuse;
      if (!sv_path.empty()) reuse = sv_path;
      return cmd_segment(config, model_path, in, reuse, out);
    }
    if (eval->parsed()) return cmd_evaluate(config, in, truth_path, out, belief_path, roc_path);
    if (cv->parsed()) return cmd_crossval(config, cases_dir, out);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 4;
  }
  return 4;
}
