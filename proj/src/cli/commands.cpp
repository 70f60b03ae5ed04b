#include "hashodf/cli.hpp"

#include "hashodf/bench.hpp"
#include "hashodf/checkpoint.hpp"
#include "hashodf/dwi.hpp"
#include "hashodf/errors.hpp"
#include "hashodf/fsim.hpp"
#include "hashodf/log.hpp"
#include "hashodf/metrics.hpp"
#include "hashodf/nifti.hpp"
#include "hashodf/phantom.hpp"
#include "hashodf/png.hpp"
#include "hashodf/posterior.hpp"
#include "hashodf/run_config.hpp"
#include "hashodf/shls.hpp"
#include "hashodf/sphere.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace hashodf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Every command writes into an output directory and refuses to replace files without --force.
void claim_outputs(const fs::path& dir, const std::vector<std::string>& names, bool force) {
  for (const auto& n : names) {
    const fs::path p = dir / n;
    if (fs::exists(p) && !force) throw ConfigError("refusing to overwrite " + p.string() + " (pass --force)");
  }
  fs::create_directories(dir);
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

json affine_json(const Eigen::Matrix4d& a) {
  json rows = json::array();
  for (int r = 0; r < 4; ++r) rows.push_back({a(r, 0), a(r, 1), a(r, 2), a(r, 3)});
  return rows;
}

Eigen::Matrix4d affine_from_json(const json& j) {
  Eigen::Matrix4d a;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) a(r, c) = j.at(r).at(c).get<double>();
  }
  return a;
}

json grid_json(const Volume& v) {
  return {{"dims", {v.dims[0], v.dims[1], v.dims[2]}}, {"voxel_size", v.voxel_size}, {"affine", affine_json(v.affine)}};
}

// Empty grid with the geometry recorded in checkpoint metadata.
Volume grid_from_json(const json& j) {
  try {
    const auto d = j.at("dims").get<std::array<int, 3>>();
    Volume v({d[0], d[1], d[2], 1});
    v.voxel_size = j.at("voxel_size").get<std::array<double, 3>>();
    v.affine = affine_from_json(j.at("affine"));
    return v;
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: bad grid: ") + e.what());
  }
}

Mask full_mask(const Volume& v) { return Mask(v.voxels(), 1); }

Volume mask_volume(const Volume& grid, const Mask& mask) {
  Volume out = grid.like(1);
  for (std::size_t v = 0; v < mask.size(); ++v) out.at(v) = mask[v] ? 1.0 : 0.0;
  return out;
}

Volume coefficient_volume(const Volume& grid, const FieldModel& model, const Mask& mask) {
  std::vector<std::size_t> voxels;
  const Eigen::Matrix3Xd coords = masked_coordinates(grid.dims, mask, &voxels);
  const Eigen::MatrixXd c = model.coefficient_columns(coords);
  Volume out = grid.like(model.basis_size());
  out.intent_name = coefficient_tag(ShBasisSpec::from_size(model.basis_size()));
  for (std::size_t i = 0; i < voxels.size(); ++i) {
    for (int k = 0; k < model.basis_size(); ++k) out.at(voxels[i], k) = c(k, static_cast<Eigen::Index>(i));
  }
  return out;
}

// Middle axial slice, values mapped from [lo, hi] to 0..255, y flipped so anterior is up.
std::vector<std::uint8_t> render_axial(const Volume& v, double lo, double hi) {
  const int z = v.nz() / 2, ch = v.channels();
  std::vector<std::uint8_t> px;
  px.reserve(static_cast<std::size_t>(v.nx()) * v.ny() * ch);
  for (int y = v.ny() - 1; y >= 0; --y) {
    for (int x = 0; x < v.nx(); ++x) {
      for (int c = 0; c < ch; ++c) {
        const double t = std::clamp((v.at(x, y, z, c) - lo) / (hi - lo), 0.0, 1.0);
        px.push_back(static_cast<std::uint8_t>(std::lround(255.0 * t)));
      }
    }
  }
  return px;
}

void save_axial_png(const Volume& v, const fs::path& path, double lo, double hi) {
  write_png(path, v.nx(), v.ny(), v.channels(), render_axial(v, lo, hi));
}

// Mean over voxels with a defined (non-negative) value.
double defined_mean(const std::vector<double>& values) {
  double s = 0.0;
  std::size_t n = 0;
  for (double v : values) {
    if (!(v >= 0.0)) continue;
    s += v;
    ++n;
  }
  return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

// ---------------------------------------------------------------- phantom

struct PhantomArgs {
  std::string spec_file, out;
  std::vector<int> dims;
  double snr = -1.0;
  std::int64_t seed = -1;
  bool basis_exact = false, force = false;
};

int cmd_phantom(const PhantomArgs& a) {
  PhantomSpec spec;
  if (!a.spec_file.empty()) {
    spec = phantom_spec_from_json(read_json(a.spec_file));
    if (!a.dims.empty()) throw ConfigError("--dims conflicts with --spec (set dims in the spec file)");
  } else {
    std::array<int, 3> dims{32, 32, 32};
    if (!a.dims.empty()) std::copy(a.dims.begin(), a.dims.end(), dims.begin());
    spec = default_phantom_spec(dims);
  }
  if (a.snr > 0.0) spec.snr = a.snr;
  if (a.seed >= 0) spec.seed = static_cast<std::uint64_t>(a.seed);
  if (a.basis_exact) spec.basis_exact = true;
  spec.validate();

  const fs::path out(a.out);
  claim_outputs(out,
                {"dwi.nii.gz", "dwi.bvec", "dwi.bval", "mask.nii.gz", "truth.nii.gz", "noiseless.nii.gz", "labels.nii.gz",
                 "phantom.json"},
                a.force);
  const Phantom p = generate_phantom(spec);
  save_nifti(p.dwi.signal, out / "dwi.nii.gz");
  save_gradients(p.dwi.gradients, out / "dwi.bvec", out / "dwi.bval");
  save_nifti(mask_volume(p.dwi.signal, p.dwi.mask), out / "mask.nii.gz", NiftiType::Uint8);
  save_nifti(p.truth, out / "truth.nii.gz", NiftiType::Float64);
  save_nifti(p.noiseless, out / "noiseless.nii.gz", NiftiType::Float64);
  Volume labels = p.dwi.signal.like(1);
  for (std::size_t v = 0; v < labels.voxels(); ++v) labels.at(v) = p.labels[v];
  save_nifti(labels, out / "labels.nii.gz", NiftiType::Uint8);
  json j;
  to_json(j, spec);
  write_json(out / "phantom.json", {{"spec", j}, {"mean_signal", p.mean_signal}, {"noise_sigma", p.noise_sigma}});
  logger().info("phantom {}x{}x{}, {} directions, noise sigma {:.4g} -> {}", spec.dims[0], spec.dims[1], spec.dims[2],
                spec.directions, p.noise_sigma, out.string());
  return 0;
}

// ---------------------------------------------------------------- train

struct DataArgs {
  std::string dwi, bvec, bval, mask;
};

DwiVolume load_data(const DataArgs& d) {
  if (d.dwi.empty() || d.bvec.empty() || d.bval.empty()) throw ConfigError("--dwi, --bvec and --bval are required");
  std::optional<fs::path> mask;
  if (!d.mask.empty()) mask = d.mask;
  return load_dwi(d.dwi, d.bvec, d.bval, mask);
}

struct TrainArgs {
  std::string config, profile, out;
  DataArgs data;
  int epochs = -1;
  std::int64_t batch_size = -1, seed = -1;
  double lambda_c = -1.0;
  bool force = false;
};

// Stretches the level scale so the finest level spans `finest` cells. Grids no larger
// than the base resolution keep the profile's scale.
void resolve_level_scale(RunConfig& cfg, int finest) {
  if (!cfg.fit_level_scale) return;
  auto& e = *cfg.model.encoder;
  cfg.fit_level_scale = false;  // resolved; the written config reproduces the model as is
  if (finest <= e.base_resolution) {
    logger().warn("grid edge {} <= base resolution {}; keeping level scale {:.6f}", finest, e.base_resolution, e.level_scale);
    return;
  }
  e.level_scale = level_scale_for_finest(e.n_levels, e.base_resolution, finest);
  logger().info("level scale {:.6f} puts the finest level at {}", e.level_scale, finest);
}

int cmd_train(const TrainArgs& a) {
  json j = a.config.empty() ? json::object() : read_json(a.config);
  if (!a.profile.empty()) j["profile"] = a.profile;
  RunConfig cfg = run_config_from_json(j);
  if (a.epochs >= 0) cfg.train.epochs = a.epochs;
  if (a.batch_size >= 0) cfg.train.batch_size = static_cast<std::size_t>(a.batch_size);
  if (a.seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(a.seed);
  if (a.lambda_c >= 0.0) {
    cfg.train.lambda_c = a.lambda_c;
    cfg.lambda_candidates.clear();
  }
  DataArgs data = a.data;
  if (data.dwi.empty()) data.dwi = cfg.paths.dwi;
  if (data.bvec.empty()) data.bvec = cfg.paths.bvec;
  if (data.bval.empty()) data.bval = cfg.paths.bval;
  if (data.mask.empty()) data.mask = cfg.paths.mask;
  const fs::path out = !a.out.empty() ? fs::path(a.out) : fs::path(cfg.paths.out);
  if (out.empty()) throw ConfigError("--out (or paths.out) is required");
  cfg.paths = {data.dwi, data.bvec, data.bval, data.mask, out.string()};
  cfg.validate();
  claim_outputs(out, {"config.json", "train_log.jsonl", "model.ckpt", "mask.nii.gz"}, a.force);

  const DwiVolume dwi = load_data(data);
  resolve_level_scale(cfg, std::max({dwi.signal.nx(), dwi.signal.ny(), dwi.signal.nz()}));
  const ShBasisSpec spec(cfg.model.lmax);
  const auto obs = ObservationModel::create(dwi.gradients.directions, spec, cfg.prior);
  if (obs.directions() < spec.size()) logger().warn("{} directions < K = {}", obs.directions(), spec.size());
  std::vector<std::size_t> voxels;
  const TrainingSet set = training_set(dwi, &voxels);

  json selection_json;
  if (!cfg.lambda_candidates.empty()) {
    const int zmid = dwi.signal.nz() / 2;
    std::vector<Eigen::Index> slice;
    for (std::size_t i = 0; i < voxels.size(); ++i) {
      if (static_cast<int>(voxels[i] / (static_cast<std::size_t>(dwi.signal.nx()) * dwi.signal.ny())) == zmid) {
        slice.push_back(static_cast<Eigen::Index>(i));
      }
    }
    if (slice.empty()) throw InputError("middle axial slice has no masked voxels for lambda_c selection");
    const auto sel = select_lambda_c(set.subset(slice), obs, cfg.model, cfg.train, cfg.lambda_candidates);
    cfg.train.lambda_c = sel.best;
    selection_json = json::array();
    for (const auto& s : sel.scores) {
      selection_json.push_back({{"lambda_c", s.lambda_c}, {"score", s.score ? json(*s.score) : json(nullptr)}});
    }
    logger().info("selected lambda_c = {:g}", sel.best);
    cfg.lambda_candidates.clear();
  }
  write_json(out / "config.json", to_json(cfg));
  save_nifti(mask_volume(dwi.signal, dwi.mask), out / "mask.nii.gz", NiftiType::Uint8);

  FieldModel model = init_model(cfg.model, cfg.train.seed);
  logger().info("training {} on {} voxels x {} directions ({} parameters)", cfg.profile, set.size(), obs.directions(),
                model.parameter_count());
  std::ofstream log(out / "train_log.jsonl");
  const json grid = grid_json(dwi.signal);
  const auto metadata = [&](double se2, double sw2) {
    return json{{"profile", cfg.profile},
                {"grid", grid},
                {"lambda_c", cfg.train.lambda_c},
                {"prior", {{"nu", cfg.prior.nu}, {"kappa", cfg.prior.kappa}}},
                {"sigma_e2", se2},
                {"sigma_w2", sw2},
                {"b_value", dwi.gradients.b_value},
                {"directions", obs.directions()},
                {"masked_voxels", set.size()}};
  };
  const auto t0 = std::chrono::steady_clock::now();
  const auto on_epoch = [&](const EpochRecord& r, const FieldModel& m) {
    log << json{{"epoch", r.epoch}, {"data", r.data_term}, {"penalty", r.penalty_term},
                {"loss", r.data_term + r.penalty_term}, {"seconds", r.seconds}}.dump()
        << '\n';
    log.flush();
    if (cfg.checkpoint_every > 0 && r.epoch % cfg.checkpoint_every == 0 && r.epoch < cfg.train.epochs) {
      std::ostringstream name;
      name << "model_e" << std::setw(5) << std::setfill('0') << r.epoch << ".ckpt";
      save_checkpoint(out / name.str(), m, metadata(0.0, 0.0));
    }
    if (r.epoch % 50 == 0) logger().info("epoch {} loss {:.6g}", r.epoch, r.data_term + r.penalty_term);
  };
  train(set, model, obs, cfg.train, on_epoch);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const double se2 = estimate_sigma_e(model, set, obs);
  const double sw2 = estimate_sigma_w(model, obs.prior);
  json meta = metadata(se2, sw2);
  meta["train_seconds"] = seconds;
  meta["epochs"] = cfg.train.epochs;
  if (!selection_json.is_null()) meta["lambda_selection"] = selection_json;
  save_checkpoint(out / "model.ckpt", model, meta);
  logger().info("done in {:.1f} s; sigma_e2 {:.4g}, sigma_w2 {:.4g}", seconds, se2, sw2);
  return 0;
}

// ---------------------------------------------------------------- fit-shls

struct ShlsArgs {
  DataArgs data;
  std::string out;
  double lambda_sh = kDefaultLambdaSh;
  int lmax = 8;
  bool force = false;
};

int cmd_fit_shls(const ShlsArgs& a) {
  const fs::path out(a.out);
  claim_outputs(out, {"shls.nii.gz", "fit-shls.json"}, a.force);
  const DwiVolume dwi = load_data(a.data);
  const ShBasisSpec spec(a.lmax);
  const Volume c = shls_fit(dwi, spec, a.lambda_sh);
  save_nifti(c, out / "shls.nii.gz", NiftiType::Float64);
  write_json(out / "fit-shls.json", {{"dwi", a.data.dwi},
                                     {"bvec", a.data.bvec},
                                     {"bval", a.data.bval},
                                     {"mask", a.data.mask},
                                     {"lambda_sh", a.lambda_sh},
                                     {"lmax", a.lmax},
                                     {"masked_voxels", dwi.masked_count()}});
  return 0;
}

// ---------------------------------------------------------------- infer

struct InferArgs {
  std::string checkpoint, out, coords, mask;
  std::vector<int> grid;
  double upsample = 0.0;
  bool force = false;
};

Eigen::Matrix3Xd read_coords(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path.string());
  std::vector<double> vals;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double x, y, z;
    std::string rest;
    if (!(ls >> x >> y >> z) || (ls >> rest)) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 3 numbers");
    }
    for (double c : {x, y, z}) {
      if (!(c >= 0.0 && c <= 1.0)) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": coordinate outside [0, 1]");
    }
    vals.insert(vals.end(), {x, y, z});
  }
  if (vals.empty()) throw FormatError(path.string() + ": no coordinates");
  return Eigen::Map<const Eigen::Matrix3Xd>(vals.data(), 3, static_cast<Eigen::Index>(vals.size() / 3));
}

int cmd_infer(const InferArgs& a) {
  const int modes = (!a.grid.empty()) + (a.upsample > 0.0) + (!a.coords.empty());
  if (modes > 1) throw ConfigError("use at most one of --grid, --upsample, --coords");
  const fs::path out(a.out);
  const std::string target = a.coords.empty() ? "coeffs.nii.gz" : "coeffs.txt";
  claim_outputs(out, {target, "infer.json"}, a.force);
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const Volume train_grid = grid_from_json(ck.metadata.at("grid"));
  json report{{"checkpoint", a.checkpoint}};
  const auto t0 = std::chrono::steady_clock::now();

  if (!a.coords.empty()) {
    const Eigen::Matrix3Xd coords = read_coords(a.coords);
    const Eigen::MatrixXd c = ck.model.coefficient_columns(coords);
    std::ofstream os(out / target);
    os << std::setprecision(17);
    for (Eigen::Index i = 0; i < c.cols(); ++i) {
      for (Eigen::Index k = 0; k < c.rows(); ++k) os << (k ? " " : "") << c(k, i);
      os << '\n';
    }
    report["coords"] = a.coords;
    report["points"] = coords.cols();
  } else {
    std::array<int, 3> dims{train_grid.nx(), train_grid.ny(), train_grid.nz()};
    if (!a.grid.empty()) std::copy(a.grid.begin(), a.grid.end(), dims.begin());
    if (a.upsample > 0.0) {
      for (int& d : dims) d = std::max(1, static_cast<int>(std::lround(d * a.upsample)));
    }
    // Same physical extent: voxel i' of the new grid sits at i' (n-1)/(n'-1) of the old one.
    Volume grid({dims[0], dims[1], dims[2], 1});
    grid.affine = train_grid.affine;
    for (int ax = 0; ax < 3; ++ax) {
      const int n_old = train_grid.dims[static_cast<std::size_t>(ax)], n_new = dims[static_cast<std::size_t>(ax)];
      const double s = n_new > 1 ? static_cast<double>(std::max(n_old - 1, 1)) / (n_new - 1) : 1.0;
      grid.affine.col(ax) *= s;
      grid.voxel_size[static_cast<std::size_t>(ax)] = train_grid.voxel_size[static_cast<std::size_t>(ax)] * s;
    }
    Mask mask = full_mask(grid);
    if (!a.mask.empty()) mask = load_mask(a.mask, grid);
    save_nifti(coefficient_volume(grid, ck.model, mask), out / target, NiftiType::Float32);
    report["dims"] = dims;
  }
  report["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_json(out / "infer.json", report);
  return 0;
}

// ---------------------------------------------------------------- sample

struct SampleArgs {
  std::string checkpoint, out;
  DataArgs data;
  int n = 250;
  std::uint64_t seed = 0;
  bool save_samples = false, force = false;
};

int cmd_sample(const SampleArgs& a) {
  if (a.n < 1) throw ConfigError("-n must be >= 1");
  const fs::path out(a.out);
  claim_outputs(out, {"gfa_ratio.nii.gz", "gfa_mean.nii.gz", "gfa_std.nii.gz", "posterior_mean.nii.gz",
                      "gfa_samples.nii.gz", "sample.json"},
                a.force);
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const DwiVolume dwi = load_data(a.data);
  const Volume train_grid = grid_from_json(ck.metadata.at("grid"));
  if (!dwi.signal.same_grid(train_grid)) throw InputError("DWI grid does not match the checkpoint's training grid");

  MaternParams prior;
  prior.nu = ck.metadata.at("prior").at("nu").get<double>();
  prior.kappa = ck.metadata.at("prior").at("kappa").get<double>();
  const ShBasisSpec spec = ShBasisSpec::from_size(ck.model.basis_size());
  const auto obs = ObservationModel::create(dwi.gradients.directions, spec, prior);
  std::vector<std::size_t> voxels;
  const TrainingSet set = training_set(dwi, &voxels);
  double se2 = ck.metadata.value("sigma_e2", 0.0), sw2 = ck.metadata.value("sigma_w2", 0.0);
  if (!(se2 > 0.0)) se2 = estimate_sigma_e(ck.model, set, obs);
  if (!(sw2 > 0.0)) sw2 = estimate_sigma_w(ck.model, obs.prior);

  const auto stats = BasisStatistics::from_model(ck.model, set.coords, set.signals);
  const PosteriorModel post(stats, obs, se2, sw2);
  const auto samples = post.sample(a.n, a.seed);

  Volume ratio = dwi.signal.like(1), mean = dwi.signal.like(1), sd = dwi.signal.like(1);
  json report{{"checkpoint", a.checkpoint}, {"n", a.n},           {"seed", a.seed},
              {"sigma_e2", se2},           {"sigma_w2", sw2},    {"jittered_blocks", post.jittered_blocks()},
              {"masked_voxels", set.size()}};
  Volume sample_gfa;
  if (a.save_samples) sample_gfa = dwi.signal.like(a.n);

  if (a.n == 1) {
    // One draw has no spread: the ratio and std maps are flagged as undefined.
    const Eigen::MatrixXd c = samples.front() * ck.model.basis_columns(set.coords);
    for (std::size_t i = 0; i < voxels.size(); ++i) {
      const Eigen::VectorXd col = c.col(static_cast<Eigen::Index>(i));
      mean.at(voxels[i]) = gfa(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())));
      ratio.at(voxels[i]) = kUndefinedRatio;
      sd.at(voxels[i]) = kUndefinedRatio;
      if (a.save_samples) sample_gfa.at(voxels[i], 0) = mean.at(voxels[i]);
    }
    report["flagged"] = true;
    report["note"] = "single sample: std and ratio undefined (-1)";
  } else {
    const UncertaintyMap map = gfa_uncertainty_map(samples, ck.model, set.coords);
    for (std::size_t i = 0; i < voxels.size(); ++i) {
      ratio.at(voxels[i]) = map.ratio[i];
      mean.at(voxels[i]) = map.mean_gfa[i];
      sd.at(voxels[i]) = map.std_gfa[i];
    }
    if (a.save_samples) {
      const Eigen::MatrixXd xi = ck.model.basis_columns(set.coords);
      for (int s = 0; s < a.n; ++s) {
        const Eigen::MatrixXd c = samples[static_cast<std::size_t>(s)] * xi;
        for (std::size_t i = 0; i < voxels.size(); ++i) {
          const Eigen::VectorXd col = c.col(static_cast<Eigen::Index>(i));
          sample_gfa.at(voxels[i], s) = gfa(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())));
        }
      }
    }
    report["flagged"] = false;
    report["mean_ratio"] = defined_mean(map.ratio);
    std::size_t undefined = 0;
    for (double r : map.ratio) undefined += r == kUndefinedRatio;
    report["undefined_ratio_voxels"] = undefined;
  }
  FieldModel mean_model = ck.model;
  mean_model.w() = post.mean();
  save_nifti(coefficient_volume(dwi.signal, mean_model, dwi.mask), out / "posterior_mean.nii.gz", NiftiType::Float32);
  save_nifti(ratio, out / "gfa_ratio.nii.gz");
  save_nifti(mean, out / "gfa_mean.nii.gz");
  save_nifti(sd, out / "gfa_std.nii.gz");
  if (a.save_samples) save_nifti(sample_gfa, out / "gfa_samples.nii.gz");
  write_json(out / "sample.json", report);
  return 0;
}

// ---------------------------------------------------------------- metrics

struct MetricsArgs {
  std::string ref, test, kind = "gfa", mask, bvec, bval, out;
  bool png = false, force = false;
};

int cmd_metrics(const MetricsArgs& a) {
  const fs::path out(a.out);
  std::vector<std::string> names{"metrics.json"};
  if (a.png) {
    for (const char* n : {"ref.png", "test.png"}) names.push_back(a.kind + "_" + n);
  }
  claim_outputs(out, names, a.force);
  const Volume ref = load_nifti(a.ref).volume;
  const Volume test = load_nifti(a.test).volume;
  if (!ref.same_grid(test) || ref.channels() != test.channels()) {
    throw InputError("reference and test volumes differ in shape");
  }
  ShBasisSpec::from_size(ref.channels());  // rejects volumes that are not coefficient volumes
  Mask mask = full_mask(ref);
  if (!a.mask.empty()) mask = load_mask(a.mask, ref);

  json report{{"ref", a.ref}, {"test", a.test}, {"kind", a.kind}, {"mask", a.mask}};
  Volume map_ref, map_test;
  double lo = 0.0, hi = 1.0;
  if (a.kind == "gfa") {
    map_ref = gfa_volume(ref, mask);
    map_test = gfa_volume(test, mask);
  } else if (a.kind == "dti") {
    GradientTable table;
    if (!a.bvec.empty() || !a.bval.empty()) {
      table = load_gradients(a.bvec, a.bval);
    } else {
      table.directions = hemisphere_directions(70);
      table.b_value = 1000.0;
    }
    report["b_value"] = table.b_value;
    report["directions"] = table.size();
    DtiMaps r = dti_maps_from_coefficients(ref, mask, table.directions, table.b_value);
    DtiMaps t = dti_maps_from_coefficients(test, mask, table.directions, table.b_value);
    report["fsim_fa"] = fsim_volume_median(r.fa, t.fa, mask).median;
    map_ref = std::move(r.rgb);
    map_test = std::move(t.rgb);
  } else {
    throw ConfigError("--kind must be gfa or dti");
  }
  const VolumeFsim score = fsim_volume_median(map_ref, map_test, mask);
  report["median"] = score.median;
  report["slices_scored"] = score.slices.size();
  report["slices_skipped"] = score.skipped;
  json slices = json::array();
  for (const SliceScore& sl : score.slices) slices.push_back({{"axis", sl.axis}, {"index", sl.index}, {"value", sl.value}});
  report["slices"] = std::move(slices);
  write_json(out / "metrics.json", report);
  if (a.png) {
    save_axial_png(map_ref, out / (a.kind + "_ref.png"), lo, hi);
    save_axial_png(map_test, out / (a.kind + "_test.png"), lo, hi);
  }
  std::cout << a.kind << " FSIM median " << std::setprecision(6) << score.median << '\n';
  return 0;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  std::string scenario = "all", profile_a = "hashenc-default", profile_b = "siren-baseline", out;
  int runs = 5, threads = 1, phantom_dim = 16, grid_dim = 64, points = 4096;
  std::vector<int> ranks{1, 64, 1024};
  bool force = false;
};

int cmd_bench(const BenchArgs& a) {
  const fs::path out(a.out);
  claim_outputs(out, {"bench.json"}, a.force);
  if (a.threads < 1) throw ConfigError("--threads must be >= 1");
  Eigen::setNbThreads(a.threads);
  json report{{"machine", machine_info()}, {"threads", a.threads}, {"runs", a.runs}};
  const bool all = a.scenario == "all";
  if (!all && a.scenario != "train-epoch" && a.scenario != "inference" && a.scenario != "posterior") {
    throw ConfigError("--scenario must be train-epoch, inference, posterior or all");
  }
  RunConfig ca = profile_config(a.profile_a), cb = profile_config(a.profile_b);
  for (RunConfig* c : {&ca, &cb}) {
    resolve_level_scale(*c, a.phantom_dim);
  }
  const FieldModel ma = init_model(ca.model, 1), mb = init_model(cb.model, 1);

  if (all || a.scenario == "train-epoch") {
    const Phantom p = generate_phantom(default_phantom_spec({a.phantom_dim, a.phantom_dim, a.phantom_dim}));
    const TrainingSet set = training_set(p.dwi);
    const auto obs = ObservationModel::create(p.dwi.gradients.directions, ShBasisSpec(8), MaternParams{});
    ca.train.batch_size = cb.train.batch_size = static_cast<std::size_t>(set.size());
    const auto r = bench_train_epoch(a.profile_a, ma, ca.train, a.profile_b, mb, cb.train, set, obs, a.runs);
    report["train_epoch"] = to_json(r);
    report["train_epoch"]["phantom_dim"] = a.phantom_dim;
    std::cout << "train-epoch  " << a.profile_a << " " << r.a.median << " s, " << a.profile_b << " " << r.b.median
              << " s, ratio " << r.ratio << '\n';
  }
  if (all || a.scenario == "inference") {
    const auto r = bench_inference(a.profile_a, ma, a.profile_b, mb, {a.grid_dim, a.grid_dim, a.grid_dim}, a.runs);
    report["inference"] = to_json(r);
    report["inference"]["grid_dim"] = a.grid_dim;
    std::cout << "inference    " << a.profile_a << " " << r.a.median << " s, " << a.profile_b << " " << r.b.median
              << " s, ratio " << r.ratio << '\n';
  }
  if (all || a.scenario == "posterior") {
    const auto curve = bench_posterior(a.ranks, a.points, a.runs);
    json rows = json::array();
    for (const auto& t : curve) {
      rows.push_back({{"rank", t.rank}, {"timing", to_json(t.stats)}});
      std::cout << "posterior    r=" << t.rank << " " << t.stats.median << " s\n";
    }
    report["posterior"] = {{"points", a.points}, {"curve", rows}};
  }
  report["peak_rss_kib"] = peak_rss_kib();
  write_json(out / "bench.json", report);
  return 0;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 1;
  if (dynamic_cast<const NumericError*>(&e)) return 3;
  return 2;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Neural ODF fields: hash-grid encoded fiber orientation maps with a Bayesian final layer"};
  app.require_subcommand(1);
  app.fallthrough();  // -v/-q also after the subcommand
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Warnings and errors only");

  const auto add_data = [](CLI::App* c, DataArgs& d, bool required) {
    auto* dwi = c->add_option("--dwi", d.dwi, "4-D DWI NIfTI")->check(CLI::ExistingFile);
    auto* bvec = c->add_option("--bvec", d.bvec, "FSL bvec file")->check(CLI::ExistingFile);
    auto* bval = c->add_option("--bval", d.bval, "FSL bval file")->check(CLI::ExistingFile);
    c->add_option("--mask", d.mask, "Brain mask NIfTI (default: signal threshold)")->check(CLI::ExistingFile);
    if (required) {
      dwi->required();
      bvec->required();
      bval->required();
    }
  };

  PhantomArgs ph;
  auto* c_ph = app.add_subcommand("phantom", "Generate a synthetic crossing-fiber phantom");
  c_ph->add_option("--spec", ph.spec_file, "Phantom spec JSON")->check(CLI::ExistingFile);
  c_ph->add_option("--dims", ph.dims, "Grid size (default 32 32 32)")->expected(3);
  c_ph->add_option("--snr", ph.snr, "Mean signal / noise sigma");
  c_ph->add_option("--seed", ph.seed, "Noise seed");
  c_ph->add_flag("--basis-exact", ph.basis_exact, "Replace the signal with the SH projection of the truth");
  c_ph->add_option("-o,--out", ph.out, "Output directory")->required();
  c_ph->add_flag("--force", ph.force, "Overwrite existing outputs");

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Fit a neural field to DWI data");
  c_tr->add_option("-c,--config", tr.config, "Run config JSON")->check(CLI::ExistingFile);
  c_tr->add_option("-p,--profile", tr.profile, "hashenc-default | hashenc-optimized | siren-baseline");
  add_data(c_tr, tr.data, false);
  c_tr->add_option("--epochs", tr.epochs);
  c_tr->add_option("--batch-size", tr.batch_size);
  c_tr->add_option("--seed", tr.seed);
  c_tr->add_option("--lambda-c", tr.lambda_c, "Prior weight (skips lambda_candidates search)");
  c_tr->add_option("-o,--out", tr.out, "Output directory");
  c_tr->add_flag("--force", tr.force, "Overwrite existing outputs");

  ShlsArgs sh;
  auto* c_sh = app.add_subcommand("fit-shls", "Voxel-wise penalized SH least squares");
  add_data(c_sh, sh.data, true);
  c_sh->add_option("--lambda-sh", sh.lambda_sh, "Laplace-Beltrami weight")->capture_default_str();
  c_sh->add_option("--lmax", sh.lmax)->capture_default_str();
  c_sh->add_option("-o,--out", sh.out, "Output directory")->required();
  c_sh->add_flag("--force", sh.force, "Overwrite existing outputs");

  InferArgs in;
  auto* c_in = app.add_subcommand("infer", "Evaluate ODF coefficients from a checkpoint");
  c_in->add_option("--checkpoint", in.checkpoint)->required()->check(CLI::ExistingFile);
  c_in->add_option("--grid", in.grid, "Output grid size (same physical extent)")->expected(3);
  c_in->add_option("--upsample", in.upsample, "Scale the training grid size by this factor");
  c_in->add_option("--coords", in.coords, "Text file of x y z in [0,1] per line")->check(CLI::ExistingFile);
  c_in->add_option("--mask", in.mask, "Mask on the output grid")->check(CLI::ExistingFile);
  c_in->add_option("-o,--out", in.out, "Output directory")->required();
  c_in->add_flag("--force", in.force, "Overwrite existing outputs");

  SampleArgs sa;
  auto* c_sa = app.add_subcommand("sample", "Posterior samples of the last layer and GFA uncertainty");
  c_sa->add_option("--checkpoint", sa.checkpoint)->required()->check(CLI::ExistingFile);
  add_data(c_sa, sa.data, true);
  c_sa->add_option("-n,--samples", sa.n)->capture_default_str();
  c_sa->add_option("--seed", sa.seed)->capture_default_str();
  c_sa->add_flag("--save-samples", sa.save_samples, "Also write per-sample GFA maps");
  c_sa->add_option("-o,--out", sa.out, "Output directory")->required();
  c_sa->add_flag("--force", sa.force, "Overwrite existing outputs");

  MetricsArgs me;
  auto* c_me = app.add_subcommand("metrics", "FSIM of GFA or DTI maps between two coefficient volumes");
  c_me->add_option("--ref", me.ref)->required()->check(CLI::ExistingFile);
  c_me->add_option("--test", me.test)->required()->check(CLI::ExistingFile);
  c_me->add_option("--kind", me.kind)->check(CLI::IsMember({"gfa", "dti"}))->capture_default_str();
  c_me->add_option("--mask", me.mask)->check(CLI::ExistingFile);
  c_me->add_option("--bvec", me.bvec, "Directions for DTI (default 70 hemisphere points)")->check(CLI::ExistingFile);
  c_me->add_option("--bval", me.bval)->check(CLI::ExistingFile);
  c_me->add_flag("--png", me.png, "Write middle axial slices as PNG");
  c_me->add_option("-o,--out", me.out, "Output directory")->required();
  c_me->add_flag("--force", me.force, "Overwrite existing outputs");

  BenchArgs be;
  auto* c_be = app.add_subcommand("bench", "Throughput and posterior-cost benchmarks");
  c_be->add_option("--scenario", be.scenario)->check(CLI::IsMember({"train-epoch", "inference", "posterior", "all"}))->capture_default_str();
  c_be->add_option("--profile-a", be.profile_a)->capture_default_str();
  c_be->add_option("--profile-b", be.profile_b)->capture_default_str();
  c_be->add_option("--runs", be.runs)->capture_default_str();
  c_be->add_option("--threads", be.threads)->capture_default_str();
  c_be->add_option("--phantom-dim", be.phantom_dim, "Edge of the training-epoch phantom")->capture_default_str();
  c_be->add_option("--grid-dim", be.grid_dim, "Edge of the inference grid")->capture_default_str();
  c_be->add_option("--points", be.points, "Points per posterior instance")->capture_default_str();
  c_be->add_option("--ranks", be.ranks)->capture_default_str();
  c_be->add_option("-o,--out", be.out, "Output directory")->required();
  c_be->add_flag("--force", be.force, "Overwrite existing outputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  logger().set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    if (c_ph->parsed()) return cmd_phantom(ph);
    if (c_tr->parsed()) return cmd_train(tr);
    if (c_sh->parsed()) return cmd_fit_shls(sh);
    if (c_in->parsed()) return cmd_infer(in);
    if (c_sa->parsed()) return cmd_sample(sa);
    if (c_me->parsed()) return cmd_metrics(me);
    if (c_be->parsed()) return cmd_bench(be);
  } catch (const json::exception& e) {
    logger().error("{}", e.what());
    return 1;
  } catch (const fs::filesystem_error& e) {
    logger().error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    logger().error("{}", e.what());
    return exit_code_for(e);
  }
  return 1;
}

}  // namespace hashodf
