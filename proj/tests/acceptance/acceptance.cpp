// Acceptance gate: one PASS/FAIL line per criterion. `acceptance` runs all ten,
// `acceptance --criterion 5` (repeatable) runs a subset. Exit status 0 iff all selected pass.

#include "hashodf/bench.hpp"
#include "hashodf/checkpoint.hpp"
#include "hashodf/field_model.hpp"
#include "hashodf/fsim.hpp"
#include "hashodf/log.hpp"
#include "hashodf/metrics.hpp"
#include "hashodf/observation.hpp"
#include "hashodf/phantom.hpp"
#include "hashodf/posterior.hpp"
#include "hashodf/run_config.hpp"
#include "hashodf/sh_basis.hpp"
#include "hashodf/shls.hpp"
#include "hashodf/sphere.hpp"
#include "hashodf/training.hpp"

#include <CLI11.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <set>

using namespace hashodf;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string verdict(bool ok) { return ok ? "ok" : "FAILED"; }

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

std::vector<Eigen::Vector3d> random_directions(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<Eigen::Vector3d> d;
  while (static_cast<int>(d.size()) < n) {
    const Eigen::Vector3d v(g(rng), g(rng), g(rng));
    if (v.norm() > 1e-6) d.push_back(v.normalized());
  }
  return d;
}

std::span<const double> view(const Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

// ---------------------------------------------------------------- 1

Outcome sh_correctness() {
  const auto t0 = Clock::now();
  // Gauss-Legendre in cos(theta) times a uniform azimuth grid integrates degree-16 products exactly.
  using Quad = boost::math::quadrature::gauss<double, 20>;
  const int n_phi = 40;
  std::vector<Eigen::Vector3d> dirs;
  std::vector<double> w;
  for (std::size_t i = 0; i < Quad::abscissa().size(); ++i) {
    for (int sign : {1, -1}) {
      const double z = sign * Quad::abscissa()[i];
      if (z == 0.0 && sign < 0) continue;
      const double s = std::sqrt(1 - z * z);
      for (int j = 0; j < n_phi; ++j) {
        const double phi = 2 * std::numbers::pi * j / n_phi;
        dirs.emplace_back(s * std::cos(phi), s * std::sin(phi), z);
        w.push_back(Quad::weights()[i] * 2 * std::numbers::pi / n_phi);
      }
    }
  }
  const ShBasisSpec spec(8);
  const Eigen::MatrixXd phi = eval_sh_basis(dirs, spec);
  const Eigen::Map<const Eigen::VectorXd> wv(w.data(), static_cast<Eigen::Index>(w.size()));
  const Eigen::MatrixXd gram = phi.transpose() * wv.asDiagonal() * phi;
  const double gram_err = (gram - Eigen::MatrixXd::Identity(spec.size(), spec.size())).cwiseAbs().maxCoeff();

  const auto pos = random_directions(1000, 1);
  std::vector<Eigen::Vector3d> neg;
  for (const auto& d : pos) neg.push_back(-d);
  const Eigen::MatrixXd a = eval_sh_basis(pos, spec), b = eval_sh_basis(neg, spec);
  const long mismatched = (a.array() != b.array()).count();
  const double secs = since(t0);

  const bool ok = gram_err < 1e-6 && mismatched == 0 && secs < 5.0;
  return {ok, fmt::format("K={} gram max|G-I|={:.2e} (< 1e-6); antipodal mismatches {} of {} (exact); {:.2f} s (< 5 s)",
                          spec.size(), gram_err, mismatched, a.size(), secs)};
}

// ---------------------------------------------------------------- 2

Outcome shls_round_trip() {
  const auto t0 = Clock::now();
  PhantomSpec s = default_phantom_spec({64, 64, 64});
  s.snr = std::numeric_limits<double>::infinity();
  s.basis_exact = true;
  const Phantom p = generate_phantom(s);
  const ShBasisSpec spec(8);
  const auto obs = ObservationModel::create(p.dwi.gradients.directions, spec, MaternParams{});
  const Volume coeffs = shls_fit(p.dwi, spec, 0.0);

  // predict_signal row by row over chunks of voxels.
  const std::size_t n = p.dwi.signal.voxels();
  const int m = p.dwi.directions();
  double worst = 0.0;
  const std::size_t chunk = 4096;
  for (std::size_t v0 = 0; v0 < n; v0 += chunk) {
    const std::size_t len = std::min(chunk, n - v0);
    Eigen::MatrixXd c(static_cast<Eigen::Index>(len), spec.size());
    for (std::size_t i = 0; i < len; ++i) {
      for (int k = 0; k < spec.size(); ++k) c(static_cast<Eigen::Index>(i), k) = coeffs.at(v0 + i, k);
    }
    const Eigen::MatrixXd y = predict_signal(c, obs.phi, obs.frt);
    for (std::size_t i = 0; i < len; ++i) {
      for (int j = 0; j < m; ++j) worst = std::max(worst, std::abs(y(static_cast<Eigen::Index>(i), j) - p.dwi.signal.at(v0 + i, j)));
    }
  }
  const double secs = since(t0);
  const bool ok = worst < 1e-8 && secs < 30.0;
  return {ok, fmt::format("64^3 x {} basis-exact: max|predict(shls(y)) - y|={:.2e} (< 1e-8); {:.1f} s (< 30 s)", m, worst, secs)};
}

// ---------------------------------------------------------------- 3

// Signals near the model's own prediction keep the central-difference rounding error small.
TrainingSet near_fit(const FieldModel& model, const ObservationModel& obs, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.05);
  TrainingSet s{Eigen::Matrix3Xd(3, n), Eigen::MatrixXd()};
  for (Eigen::Index i = 0; i < s.coords.size(); ++i) s.coords.data()[i] = u(rng);
  s.signals = obs.op * model.coefficient_columns(s.coords);
  for (Eigen::Index i = 0; i < s.signals.size(); ++i) s.signals.data()[i] += noise(rng);
  return s;
}

Outcome gradient_check() {
  const auto t0 = Clock::now();
  const auto obs = ObservationModel::create(hemisphere_directions(12), ShBasisSpec(2), MaternParams{});
  FieldModelConfig c;
  c.encoder = HashGridConfig{2, 2, 2.0, 2, 6, true};
  c.head = MlpHeadConfig{1, 8, Activation::Sine, 30.0};
  c.lmax = 2;
  FieldModel model = init_model(c, 3);

  // Spread the tables and W so every gradient sits well above the difference noise.
  auto flat = flatten_parameters(model);
  {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    const std::size_t tables = model.encoder()->params().size();
    for (std::size_t i = 0; i < tables; ++i) flat[i] = u(rng);
    for (std::size_t i = flat.size() - static_cast<std::size_t>(model.w().size()); i < flat.size(); ++i) flat[i] = u(rng);
    unflatten_parameters(flat, model);
  }
  const TrainingSet batch = near_fit(model, obs, 5, 1);
  const double lambda = 1e-4;

  Gradients g = Gradients::zeros_like(model);
  backward(batch, model, obs, lambda, g);
  std::vector<double> analytic(g.tables.begin(), g.tables.end());
  std::vector<std::pair<std::string, std::size_t>> groups{{"tables", analytic.size()}};
  for (std::size_t li = 0; li < g.head.size(); ++li) {
    const auto& l = g.head[li];
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index col = 0; col < l.weight.cols(); ++col) analytic.push_back(l.weight(r, col));
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) analytic.push_back(l.bias[r]);
    groups.emplace_back("layer" + std::to_string(li), analytic.size());
  }
  for (Eigen::Index r = 0; r < g.w.rows(); ++r) {
    for (Eigen::Index col = 0; col < g.w.cols(); ++col) analytic.push_back(g.w(r, col));
  }
  groups.emplace_back("W", analytic.size());
  if (analytic.size() != flat.size()) return {false, "gradient layout does not match the parameter layout"};

  const double h = 1e-6;
  std::vector<double> worst(groups.size(), 0.0);
  std::size_t group = 0;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    while (i >= groups[group].second) ++group;
    const double keep = flat[i];
    flat[i] = keep + h;
    unflatten_parameters(flat, model);
    const double up = loss(batch, model, obs, lambda).total();
    flat[i] = keep - h;
    unflatten_parameters(flat, model);
    const double down = loss(batch, model, obs, lambda).total();
    flat[i] = keep;
    const double fd = (up - down) / (2 * h);
    const double scale = std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
    worst[group] = std::max(worst[group], std::abs(fd - analytic[i]) / scale);
  }
  const double secs = since(t0);
  double overall = 0.0;
  std::string per;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    overall = std::max(overall, worst[k]);
    per += fmt::format("{}{} {:.1e}", k ? ", " : "", groups[k].first, worst[k]);
  }
  const bool ok = overall < 1e-4 && secs < 10.0;
  return {ok, fmt::format("2 levels F=2, MLP 1x8, K=6, {} params: max rel err {:.2e} (< 1e-4) [{}]; {:.2f} s (< 10 s)",
                          flat.size(), overall, per, secs)};
}

// ---------------------------------------------------------------- 4

Outcome posterior_oracle() {
  const auto t0 = Clock::now();
  const auto obs = ObservationModel::create(hemisphere_directions(12), ShBasisSpec(2), MaternParams{1.0, 0.5});
  std::mt19937_64 rng(42);
  const Eigen::MatrixXd xi = gaussian(3, 5, rng), y = gaussian(12, 5, rng);
  const double se2 = 0.3, sw2 = 1.7;

  // Brute force: the explicit Kronecker design over column-stacked vec(W).
  const Eigen::Index r = 3, n = 5, m = 12, k = 6;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n * m, r * k);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < r; ++j) a.block(i * m, j * k, m, k) = xi(j, i) * obs.op;
  }
  Eigen::MatrixXd prior = Eigen::MatrixXd::Zero(r * k, r * k);
  for (Eigen::Index j = 0; j < r; ++j) prior.block(j * k, j * k, k, k) = obs.prior.asDiagonal();
  const Eigen::MatrixXd lambda = a.transpose() * a / se2 + prior / sw2;
  const Eigen::MatrixXd cov = lambda.inverse();
  const Eigen::VectorXd vy = Eigen::Map<const Eigen::VectorXd>(y.data(), y.size());
  const Eigen::VectorXd mean = lambda.fullPivLu().solve(a.transpose() * vy / se2);

  const PosteriorModel post(BasisStatistics::from_basis(xi, y), obs, se2, sw2);
  const double mean_err = (post.mean_vector() - mean).norm() / mean.norm();
  const Eigen::MatrixXd mv = post.marginal_variances();
  const Eigen::VectorXd var = Eigen::Map<const Eigen::VectorXd>(mv.data(), mv.size());
  const double var_err = (var - cov.diagonal()).norm() / cov.diagonal().norm();

  const int draws = 10000;
  const auto samples = post.sample(draws, 123);
  Eigen::MatrixXd x(r * k, draws);
  for (int s = 0; s < draws; ++s) x.col(s) = Eigen::Map<const Eigen::VectorXd>(samples[static_cast<std::size_t>(s)].data(), r * k);
  const Eigen::MatrixXd centred = x.colwise() - x.rowwise().mean();
  const Eigen::MatrixXd mc = centred * centred.transpose() / (draws - 1);
  const double mc_err = (mc - cov).norm() / cov.norm();
  const double secs = since(t0);

  const bool ok = mean_err < 1e-8 && var_err < 1e-8 && mc_err < 0.15 && secs < 30.0;
  return {ok, fmt::format("N=5 K=6 r=3: mean rel err {:.1e}, variance rel err {:.1e} (< 1e-8); "
                          "10^4-draw covariance Frobenius rel err {:.3f} (< 0.15); {:.2f} s (< 30 s)",
                          mean_err, var_err, mc_err, secs)};
}

// ---------------------------------------------------------------- 5, 9, 10

// Training protocol shared by the phantom criteria: the hashenc-default profile with its
// finest level matched to the grid and a batch small enough for several steps per epoch.
FieldModel train_on(const Phantom& p, const ObservationModel& obs, int epochs, std::size_t batch, TrainResult* result = nullptr) {
  RunConfig cfg = profile_config("hashenc-default");
  auto& e = *cfg.model.encoder;
  const int finest = std::max({p.dwi.signal.nx(), p.dwi.signal.ny(), p.dwi.signal.nz()});
  e.level_scale = level_scale_for_finest(e.n_levels, e.base_resolution, finest);
  FieldModel model = init_model(cfg.model, 0);
  TrainConfig t = cfg.train;
  t.epochs = epochs;
  t.batch_size = batch;
  const TrainResult r = train(training_set(p.dwi), model, obs, t);
  if (result) *result = r;
  return model;
}

Volume coefficients_on_grid(const FieldModel& model, const Volume& like, const Eigen::Matrix3Xd& coords,
                            const std::vector<std::size_t>& voxels) {
  Volume out = like.like(model.basis_size());
  const Eigen::MatrixXd c = model.coefficient_columns(coords);
  for (std::size_t i = 0; i < voxels.size(); ++i) {
    for (int k = 0; k < model.basis_size(); ++k) out.at(voxels[i], k) = c(k, static_cast<Eigen::Index>(i));
  }
  return out;
}

Outcome phantom_recovery() {
  const auto t0 = Clock::now();
  const PhantomSpec spec = default_phantom_spec();  // 32^3, M = 70, SNR 20
  const Phantom p = generate_phantom(spec);
  const ShBasisSpec sh(8);
  const auto obs = ObservationModel::create(p.dwi.gradients.directions, sh, MaternParams{});
  const FieldModel model = train_on(p, obs, 300, 8192);

  std::vector<std::size_t> voxels;
  const TrainingSet set = training_set(p.dwi, &voxels);
  const Volume recon = coefficients_on_grid(model, p.truth, set.coords, voxels);
  const Volume shls = shls_fit(p.dwi, sh);
  const Volume g_truth = gfa_volume(p.truth, p.dwi.mask);
  const double f_recon = fsim_volume_median(g_truth, gfa_volume(recon, p.dwi.mask), p.dwi.mask).median;
  const double f_shls = fsim_volume_median(g_truth, gfa_volume(shls, p.dwi.mask), p.dwi.mask).median;

  const PeakFinder finder(icosphere(4), sh);
  std::map<int, Eigen::Vector3d> single;  // region index -> fibre axis
  for (std::size_t r = 0; r < spec.regions.size(); ++r) {
    const auto& t = spec.regions[r].tensors;
    if (t.size() == 1 && t[0].lambda_par > t[0].lambda_perp) single[static_cast<int>(r)] = t[0].axis.normalized();
  }
  std::size_t good = 0, total = 0;
  std::vector<double> c(static_cast<std::size_t>(sh.size()));
  for (std::size_t v = 0; v < voxels.size(); ++v) {
    const auto it = single.find(p.labels[v]);
    if (it == single.end()) continue;
    for (int k = 0; k < sh.size(); ++k) c[static_cast<std::size_t>(k)] = recon.at(v, k);
    const auto peaks = finder.find(c);
    ++total;
    if (!peaks.empty() && axis_angle_deg(peaks[0], it->second) < 10.0) ++good;
  }
  const double share = total ? static_cast<double>(good) / static_cast<double>(total) : 0.0;
  const double secs = since(t0);
  const bool ok = f_recon - f_shls >= 0.02 && share >= 0.90 && secs < 900.0;
  return {ok, fmt::format("FSIM-GFA recon {:.4f} vs SHLS {:.4f}, gap {:.4f} (>= 0.02); peaks < 10 deg on {}/{} single-fibre "
                          "voxels = {:.1f}% (>= 90%); {:.0f} s (< 900 s)",
                          f_recon, f_shls, f_recon - f_shls, good, total, 100 * share, secs)};
}

Outcome throughput() {
  const auto t0 = Clock::now();
  RunConfig ha = profile_config("hashenc-default"), sb = profile_config("siren-baseline");
  const int dim = 16;
  ha.model.encoder->level_scale = level_scale_for_finest(ha.model.encoder->n_levels, ha.model.encoder->base_resolution, dim);
  const Phantom p = generate_phantom(default_phantom_spec({dim, dim, dim}));
  const auto obs = ObservationModel::create(p.dwi.gradients.directions, ShBasisSpec(8), ha.prior);
  const FieldModel a = init_model(ha.model, 0), b = init_model(sb.model, 0);
  TrainConfig tb = sb.train;
  tb.batch_size = ha.train.batch_size;  // identical batches for both
  const auto epoch = bench_train_epoch("hashenc-default", a, ha.train, "siren-baseline", b, tb, training_set(p.dwi), obs, 5);
  const auto infer = bench_inference("hashenc-default", a, "siren-baseline", b, {64, 64, 64}, 5);
  const double secs = since(t0);
  const bool ok = epoch.ratio >= 3.0 && infer.ratio >= 10.0;
  return {ok, fmt::format("training epoch ({}^3, batch {}) hashenc {:.3f} s vs siren {:.3f} s, ratio {:.1f} (>= 3); "
                          "inference 64^3 hashenc {:.3f} s vs siren {:.1f} s, ratio {:.1f} (>= 10); medians of 5; {:.0f} s",
                          dim, std::min<std::size_t>(ha.train.batch_size, p.dwi.masked_count()), epoch.a.median, epoch.b.median,
                          epoch.ratio, infer.a.median, infer.b.median, infer.ratio, secs)};
}

Outcome gfa_invariants() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> scale(1e-3, 1e3);
  int exact_pow2 = 0, exact_any = 0, trials = 1000;
  double worst_any = 0.0;
  for (int t = 0; t < trials; ++t) {
    const Eigen::VectorXd c = gaussian(45, 1, rng);
    const double g = gfa(view(c));
    bool all = true;
    for (double a : {0.125, 2.0, 1024.0, std::ldexp(1.0, 300)}) all = all && gfa(view(Eigen::VectorXd(a * c))) == g;
    exact_pow2 += all;
    const double alpha = scale(rng);
    const double ga = gfa(view(Eigen::VectorXd(alpha * c)));
    exact_any += ga == g;
    worst_any = std::max(worst_any, std::abs(ga - g));
  }
  Eigen::VectorXd iso = Eigen::VectorXd::Zero(45);
  iso[0] = 3.7;
  const double g_iso = gfa(view(iso));

  // Area-weighted std/rms on a 2562-vertex icosphere.
  const SphereMesh mesh = icosphere(4);
  const auto areas = mesh.vertex_areas();
  const Eigen::Map<const Eigen::VectorXd> w(areas.data(), static_cast<Eigen::Index>(areas.size()));
  const Eigen::MatrixXd phi = eval_sh_basis(mesh.vertices, ShBasisSpec(8));
  double worst_discrete = 0.0;
  for (int t = 0; t < trials; ++t) {
    Eigen::VectorXd c = gaussian(45, 1, rng);
    c[0] += 3.0 * (t % 3);
    const Eigen::VectorXd f = phi * c;
    const double mean = w.dot(f) / w.sum();
    const double ms = w.dot(f.cwiseAbs2()) / w.sum();
    worst_discrete = std::max(worst_discrete, std::abs(std::sqrt(std::max(0.0, ms - mean * mean) / ms) - gfa(view(c))));
  }
  const double secs = since(t0);
  // Bitwise equality can only be asked of power-of-two factors: any other alpha rounds alpha*c_i,
  // so the scaled input is no longer exactly proportional to c. Those are bounded at 4 ulp instead.
  const double eps = std::numeric_limits<double>::epsilon();
  const bool ok = exact_pow2 == trials && worst_any <= 4 * eps && g_iso == 0.0 && worst_discrete < 1e-3;
  return {ok, fmt::format("scale: power-of-two alpha bit-exact {}/{}, random alpha bit-exact {}/{} and max diff {:.1e} "
                          "(<= 4 eps); isotropic gfa {}; discrete vs analytic max {:.2e} (< 1e-3); {:.2f} s",
                          exact_pow2, trials, exact_any, trials, worst_any, g_iso, worst_discrete, secs)};
}

Image scene() {
  Image im(64, 72);
  for (int r = 0; r < 64; ++r) {
    for (int c = 0; c < 72; ++c) {
      double v = 40.0 + 60.0 * c / 72.0;
      if (std::hypot(r - 20.0, c - 22.0) < 10.0) v = 220.0;
      if (std::hypot(r - 44.0, c - 50.0) < 13.0) v = 120.0;
      if (r > 50) v += 30.0 * std::sin(c * 0.6);
      im(r, c) = v;
    }
  }
  return im;
}

Outcome fsim_sanity() {
  const Image a = scene();
  const double self = fsim(a, a).value;
  Image blur = a;
  for (Eigen::Index r = 1; r + 1 < a.rows(); ++r) {
    for (Eigen::Index c = 1; c + 1 < a.cols(); ++c) blur(r, c) = a.block(r - 1, c - 1, 3, 3).mean();
  }
  Image noisy = a;
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n(0.0, 0.25 * (a.maxCoeff() - a.minCoeff()));
  for (Eigen::Index i = 0; i < noisy.size(); ++i) noisy.data()[i] += n(rng);
  const double f_blur = fsim(a, blur).value, f_noise = fsim(a, noisy).value;
  const bool ok = std::abs(self - 1.0) <= 1e-6 && f_noise < f_blur;
  return {ok, fmt::format("fsim(x,x) = {:.9f} (1 +- 1e-6); heavy noise {:.4f} < mild blur {:.4f}", self, f_noise, f_blur)};
}

Outcome uncertainty_pipeline() {
  const auto t0 = Clock::now();
  std::vector<double> means;
  std::string detail;
  bool sane = true;
  for (double snr : {20.0, 40.0}) {
    PhantomSpec spec = default_phantom_spec();
    spec.snr = snr;
    const Phantom p = generate_phantom(spec);
    const auto obs = ObservationModel::create(p.dwi.gradients.directions, ShBasisSpec(8), MaternParams{});
    const FieldModel model = train_on(p, obs, 300, 8192);
    const TrainingSet set = training_set(p.dwi);
    const double se2 = estimate_sigma_e(model, set, obs), sw2 = estimate_sigma_w(model, obs.prior);
    const PosteriorModel post(BasisStatistics::from_model(model, set.coords, set.signals), obs, se2, sw2);
    const UncertaintyMap map = gfa_uncertainty_map(post.sample(250, 1), model, set.coords);
    double sum = 0.0;
    std::size_t bad = 0;
    // Diagnostic only: region 0 is the isotropic background, the rest hold fibres.
    double part[2] = {0.0, 0.0};
    std::size_t count[2] = {0, 0};
    for (std::size_t v = 0; v < map.ratio.size(); ++v) {
      const double r = map.ratio[v];
      if (!std::isfinite(r) || r < 0.0) ++bad;
      sum += r;
      const int k = p.labels[v] == 0 ? 0 : 1;
      part[k] += r;
      ++count[k];
    }
    sane = sane && bad == 0;
    means.push_back(sum / static_cast<double>(map.ratio.size()));
    detail += fmt::format("SNR {:.0f}: mean std/mean {:.4f} (isotropic {:.4f}, fibre {:.5f}), {} non-finite or negative of {}; ",
                          snr, means.back(), part[0] / std::max<std::size_t>(count[0], 1),
                          part[1] / std::max<std::size_t>(count[1], 1), bad, map.ratio.size());
  }
  const double secs = since(t0);
  const bool ok = sane && means[1] < means[0] && secs < 600.0;
  return {ok, detail + fmt::format("decreases: {}; {:.0f} s (< 600 s)", verdict(means[1] < means[0]), secs)};
}

Outcome batch_robustness() {
  const auto t0 = Clock::now();
  // 41^3 = 68,921 voxels: the smallest cube with more voxels than the larger batch.
  // 400 epochs is past the plateau both runs sit on until roughly epoch 300.
  const Phantom p = generate_phantom(default_phantom_spec({41, 41, 41}));
  const auto obs = ObservationModel::create(p.dwi.gradients.directions, ShBasisSpec(8), MaternParams{});
  const TrainingSet set = training_set(p.dwi);
  const double lambda_c = profile_config("hashenc-default").train.lambda_c;
  std::vector<double> finals;
  for (std::size_t batch : {std::size_t{60862}, std::size_t{65536}}) {
    const FieldModel m = train_on(p, obs, 400, batch);
    finals.push_back(loss(set, m, obs, lambda_c).total());
  }
  const double rel = std::abs(finals[0] - finals[1]) / std::max(finals[0], finals[1]);
  const double secs = since(t0);
  return {rel < 0.05, fmt::format("41^3 phantom ({} voxels), 400 epochs: full-set loss batch 60862 {:.5f} vs 65536 {:.5f}, "
                                  "rel diff {:.2f}% (< 5%); {:.0f} s",
                                  set.size(), finals[0], finals[1], 100 * rel, secs)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> selected;
  app.add_option("-c,--criterion", selected, "Criterion number (1-10); repeatable")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);
  logger().set_level(spdlog::level::warn);

  const std::map<int, std::function<Outcome()>> criteria{
      {1, sh_correctness},   {2, shls_round_trip}, {3, gradient_check},       {4, posterior_oracle},
      {5, phantom_recovery}, {6, throughput},      {7, gfa_invariants},       {8, fsim_sanity},
      {9, uncertainty_pipeline}, {10, batch_robustness}};
  std::set<int> run(selected.begin(), selected.end());
  if (run.empty()) {
    for (const auto& [k, fn] : criteria) run.insert(k);
  }
  int failed = 0;
  for (int k : run) {
    Outcome o;
    try {
      o = criteria.at(k)();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "criterion " << k << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
