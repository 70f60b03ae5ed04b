#include "hashodf/phantom.hpp"

#include "hashodf/errors.hpp"
#include "hashodf/json_util.hpp"
#include "hashodf/shls.hpp"
#include "hashodf/sphere.hpp"

#include <cmath>
#include <map>
#include <random>

namespace hashodf {

void PhantomSpec::validate() const {
  for (int d : dims) {
    if (d < 1) throw ConfigError("phantom dims must be >= 1");
  }
  if (directions < 6) throw ConfigError("phantom needs at least 6 directions");
  if (!(b_value > 0.0)) throw ConfigError("phantom b_value must be > 0");
  if (!(snr > 0.0)) throw ConfigError("phantom snr must be > 0 (infinity for noiseless)");
  if (lmax < 0 || lmax % 2) throw ConfigError("phantom lmax must be even and >= 0");
  if (truth_directions < sh_basis_size(lmax)) throw ConfigError("phantom truth_directions must be >= K");
  if (regions.empty()) throw ConfigError("phantom needs at least one region");
  for (const auto& r : regions) {
    if (r.tensors.empty()) throw ConfigError("phantom region '" + r.name + "' has no tensors");
    double total = 0.0;
    for (const auto& t : r.tensors) {
      if (!(t.lambda_par > 0.0) || !(t.lambda_perp > 0.0)) {
        throw ConfigError("phantom region '" + r.name + "': tensor eigenvalues must be > 0");
      }
      if (!(t.axis.norm() > 0.0)) throw ConfigError("phantom region '" + r.name + "': zero tensor axis");
      if (!(t.weight >= 0.0)) throw ConfigError("phantom region '" + r.name + "': negative weight");
      total += t.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("phantom region '" + r.name + "': weights must sum to 1");
    for (int a = 0; a < 3; ++a) {
      if (r.lo[a] < 0 || r.hi[a] < r.lo[a]) throw ConfigError("phantom region '" + r.name + "': bad box");
    }
  }
}

PhantomSpec default_phantom_spec(std::array<int, 3> dims) {
  PhantomSpec s;
  s.dims = dims;
  const auto at = [&](int axis, int v32) { return static_cast<int>(std::lround(v32 * dims[axis] / 32.0)); };
  const TensorComponent along_x{Eigen::Vector3d::UnitX(), 1.7e-3, 0.3e-3, 1.0};
  const TensorComponent along_y{Eigen::Vector3d::UnitY(), 1.7e-3, 0.3e-3, 1.0};
  const TensorComponent iso{Eigen::Vector3d::UnitZ(), 0.8e-3, 0.8e-3, 1.0};
  TensorComponent half_x = along_x, half_y = along_y;
  half_x.weight = half_y.weight = 0.5;
  const int z0 = at(2, 4), z1 = at(2, 28);
  s.regions = {
      {"background", {0, 0, 0}, {dims[0], dims[1], dims[2]}, {iso}},
      {"slab_x", {0, at(1, 6), z0}, {dims[0], at(1, 14), z1}, {along_x}},
      {"slab_y", {at(0, 18), 0, z0}, {at(0, 26), dims[1], z1}, {along_y}},
      {"crossing", {at(0, 18), at(1, 6), z0}, {at(0, 26), at(1, 14), z1}, {half_x, half_y}},
  };
  return s;
}

namespace {

double mixture_signal(const std::vector<TensorComponent>& tensors, const Eigen::Vector3d& g, double b) {
  double s = 0.0;
  for (const auto& t : tensors) {
    const double c = t.axis.normalized().dot(g);
    const double adc = t.lambda_perp + (t.lambda_par - t.lambda_perp) * c * c;
    s += t.weight * std::exp(-b * adc);
  }
  return s;
}

}  // namespace

Phantom generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  const ShBasisSpec sh(spec.lmax);
  const std::vector<Eigen::Vector3d> dirs = hemisphere_directions(spec.directions);
  const std::vector<Eigen::Vector3d> dense = hemisphere_directions(spec.truth_directions);
  const ShlsFitter truth_fit(dense, sh, 0.0);
  const Eigen::MatrixXd op = eval_sh_basis(dirs, sh) * frt_matrix(sh).asDiagonal();

  const std::array<int, 4> dims{spec.dims[0], spec.dims[1], spec.dims[2], 1};
  Phantom p;
  p.labels.assign(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], 0);
  Volume grid(dims);
  for (int z = 0; z < dims[2]; ++z) {
    for (int y = 0; y < dims[1]; ++y) {
      for (int x = 0; x < dims[0]; ++x) {
        for (std::size_t r = 0; r < spec.regions.size(); ++r) {
          const auto& reg = spec.regions[r];
          if (x >= reg.lo[0] && x < reg.hi[0] && y >= reg.lo[1] && y < reg.hi[1] && z >= reg.lo[2] && z < reg.hi[2]) {
            p.labels[grid.voxel_index(x, y, z)] = static_cast<int>(r);
          }
        }
      }
    }
  }

  // Per-region signal and truth; every voxel of a region shares them.
  const auto n_regions = static_cast<Eigen::Index>(spec.regions.size());
  Eigen::MatrixXd dense_signal(spec.truth_directions, n_regions);
  Eigen::MatrixXd region_signal(spec.directions, n_regions);
  for (Eigen::Index r = 0; r < n_regions; ++r) {
    const auto& t = spec.regions[static_cast<std::size_t>(r)].tensors;
    for (int i = 0; i < spec.truth_directions; ++i) dense_signal(i, r) = mixture_signal(t, dense[static_cast<std::size_t>(i)], spec.b_value);
    for (int i = 0; i < spec.directions; ++i) region_signal(i, r) = mixture_signal(t, dirs[static_cast<std::size_t>(i)], spec.b_value);
  }
  const Eigen::MatrixXd region_truth = truth_fit.fit(dense_signal);
  if (spec.basis_exact) region_signal = op * region_truth;

  p.truth = grid.like(sh.size());
  p.truth.intent_name = coefficient_tag(sh);
  p.noiseless = grid.like(spec.directions);
  double sum = 0.0;
  for (std::size_t v = 0; v < grid.voxels(); ++v) {
    const int r = p.labels[v];
    for (int k = 0; k < sh.size(); ++k) p.truth.at(v, k) = region_truth(k, r);
    for (int m = 0; m < spec.directions; ++m) {
      p.noiseless.at(v, m) = region_signal(m, r);
      sum += region_signal(m, r);
    }
  }
  p.mean_signal = sum / static_cast<double>(grid.voxels() * static_cast<std::size_t>(spec.directions));
  p.noise_sigma = std::isfinite(spec.snr) ? p.mean_signal / spec.snr : 0.0;

  Volume noisy = p.noiseless;
  if (p.noise_sigma > 0.0) {
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, p.noise_sigma);
    for (double& y : noisy.data) y = std::max(0.0, y + normal(rng));
  }

  GradientTable table;
  table.directions = dirs;
  table.b_value = spec.b_value;
  for (int i = 0; i < spec.directions; ++i) table.dwi_index.push_back(i);
  p.dwi = make_dwi(noisy, table, Mask(grid.voxels(), 1));
  return p;
}

void to_json(nlohmann::json& j, const PhantomSpec& s) {
  j = nlohmann::json{{"schema_version", 1},
                     {"dims", s.dims},
                     {"directions", s.directions},
                     {"b_value", s.b_value},
                     {"snr", std::isfinite(s.snr) ? nlohmann::json(s.snr) : nlohmann::json("inf")},
                     {"seed", s.seed},
                     {"lmax", s.lmax},
                     {"truth_directions", s.truth_directions},
                     {"basis_exact", s.basis_exact}};
  auto& regions = j["regions"] = nlohmann::json::array();
  for (const auto& r : s.regions) {
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& t : r.tensors) {
      tensors.push_back({{"axis", {t.axis.x(), t.axis.y(), t.axis.z()}},
                         {"lambda_par", t.lambda_par},
                         {"lambda_perp", t.lambda_perp},
                         {"weight", t.weight}});
    }
    regions.push_back({{"name", r.name}, {"lo", r.lo}, {"hi", r.hi}, {"tensors", tensors}});
  }
}

PhantomSpec phantom_spec_from_json(const nlohmann::json& j) {
  const std::string where = "phantom spec";
  reject_unknown_keys(j, {"schema_version", "dims", "directions", "b_value", "snr", "seed", "lmax", "truth_directions",
                          "basis_exact", "regions"},
                      where);
  int version = 1;
  read_optional(j, "schema_version", version, where);
  if (version != 1) throw ConfigError(where + ": unsupported schema_version " + std::to_string(version));
  PhantomSpec s;
  read_optional(j, "dims", s.dims, where);
  s = default_phantom_spec(s.dims);
  read_optional(j, "directions", s.directions, where);
  read_optional(j, "b_value", s.b_value, where);
  read_optional(j, "seed", s.seed, where);
  read_optional(j, "lmax", s.lmax, where);
  read_optional(j, "truth_directions", s.truth_directions, where);
  read_optional(j, "basis_exact", s.basis_exact, where);
  if (j.contains("snr")) {
    const auto& snr = j.at("snr");
    if (snr.is_string() && snr.get<std::string>() == "inf") {
      s.snr = std::numeric_limits<double>::infinity();
    } else if (snr.is_number()) {
      s.snr = snr.get<double>();
    } else {
      throw ConfigError(where + ".snr: expected a number or \"inf\"");
    }
  }
  if (j.contains("regions")) {
    if (!j.at("regions").is_array()) throw ConfigError(where + ".regions: expected an array");
    s.regions.clear();
    for (const auto& r : j.at("regions")) {
      reject_unknown_keys(r, {"name", "lo", "hi", "tensors"}, where + ".regions[]");
      PhantomRegion region;
      read_optional(r, "name", region.name, where);
      read_optional(r, "lo", region.lo, where);
      read_optional(r, "hi", region.hi, where);
      if (!r.contains("tensors") || !r.at("tensors").is_array()) throw ConfigError(where + ".regions[].tensors: required array");
      for (const auto& t : r.at("tensors")) {
        reject_unknown_keys(t, {"axis", "lambda_par", "lambda_perp", "weight"}, where + ".regions[].tensors[]");
        TensorComponent c;
        std::array<double, 3> axis{c.axis.x(), c.axis.y(), c.axis.z()};
        read_optional(t, "axis", axis, where);
        c.axis = Eigen::Vector3d(axis[0], axis[1], axis[2]);
        read_optional(t, "lambda_par", c.lambda_par, where);
        read_optional(t, "lambda_perp", c.lambda_perp, where);
        read_optional(t, "weight", c.weight, where);
        region.tensors.push_back(c);
      }
      s.regions.push_back(std::move(region));
    }
  }
  s.validate();
  return s;
}

}  // namespace hashodf
