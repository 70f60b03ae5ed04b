#include "hashodf/errors.hpp"
#include "hashodf/metrics.hpp"
#include "hashodf/phantom.hpp"
#include "hashodf/shls.hpp"
#include "hashodf/sphere.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace hashodf;

namespace {

std::span<const double> coeffs_at(const Volume& v, std::vector<double>& buf, std::size_t voxel) {
  buf.resize(static_cast<std::size_t>(v.channels()));
  for (int k = 0; k < v.channels(); ++k) buf[static_cast<std::size_t>(k)] = v.at(voxel, k);
  return buf;
}

}  // namespace

TEST_CASE("noiseless isotropic region has zero GFA") {
  PhantomSpec s = default_phantom_spec({8, 8, 8});
  s.snr = std::numeric_limits<double>::infinity();
  const Phantom p = generate_phantom(s);
  CHECK(p.noise_sigma == 0.0);
  CHECK(p.dwi.signal.data == p.noiseless.data);
  std::vector<double> buf;
  int seen = 0;
  for (std::size_t v = 0; v < p.truth.voxels(); ++v) {
    if (p.labels[v] != 0) continue;
    CHECK(gfa(coeffs_at(p.truth, buf, v)) < 1e-6);
    ++seen;
  }
  CHECK(seen > 0);
}

TEST_CASE("a fibre slab along z peaks along z") {
  PhantomSpec s;
  s.dims = {4, 4, 4};
  s.snr = std::numeric_limits<double>::infinity();
  s.regions = {{"slab_z", {0, 0, 0}, {4, 4, 4}, {TensorComponent{Eigen::Vector3d::UnitZ(), 1.7e-3, 0.3e-3, 1.0}}}};
  const Phantom p = generate_phantom(s);
  const PeakFinder finder(icosphere(4), ShBasisSpec(8));
  std::vector<double> buf;
  const auto peaks = finder.find(coeffs_at(p.truth, buf, 0));
  REQUIRE(peaks.size() == 1u);
  CHECK(axis_angle_deg(peaks[0], Eigen::Vector3d::UnitZ()) < 2.0);
}

TEST_CASE("noise statistics at SNR 20 on 32^3 with 70 directions") {
  const PhantomSpec s = default_phantom_spec();
  const Phantom p = generate_phantom(s);
  CHECK(p.dwi.signal.dims == std::array<int, 4>{32, 32, 32, 70});
  CHECK(p.truth.channels() == 45);
  CHECK(p.dwi.masked_count() == 32u * 32u * 32u);

  double mean = 0.0, resid = 0.0, resid2 = 0.0;
  const auto n = static_cast<double>(p.noiseless.data.size());
  for (std::size_t i = 0; i < p.noiseless.data.size(); ++i) {
    mean += p.dwi.signal.data[i];
    const double e = p.dwi.signal.data[i] - p.noiseless.data[i];
    resid += e;
    resid2 += e * e;
  }
  mean /= n;
  const double sd = std::sqrt(resid2 / n - (resid / n) * (resid / n));
  CHECK(std::abs(mean - p.mean_signal) < 0.1 * p.mean_signal);
  CHECK(std::abs(sd - p.mean_signal / 20.0) < 0.1 * p.mean_signal / 20.0);
}

TEST_CASE("determinism and seeds") {
  PhantomSpec s = default_phantom_spec({10, 10, 6});
  const Phantom a = generate_phantom(s), b = generate_phantom(s);
  CHECK(a.dwi.signal.data == b.dwi.signal.data);
  CHECK(a.truth.data == b.truth.data);
  s.seed = 1;
  CHECK(generate_phantom(s).dwi.signal.data != a.dwi.signal.data);
}

TEST_CASE("basis-exact data lie in the SH span") {
  PhantomSpec s = default_phantom_spec({6, 6, 6});
  s.snr = std::numeric_limits<double>::infinity();
  s.basis_exact = true;
  const Phantom p = generate_phantom(s);
  const Volume fit = shls_fit(p.dwi, ShBasisSpec(8), 0.0);
  double worst = 0.0;
  for (std::size_t i = 0; i < fit.data.size(); ++i) worst = std::max(worst, std::abs(fit.data[i] - p.truth.data[i]));
  CHECK(worst < 1e-8);
}

TEST_CASE("spec validation and JSON") {
  PhantomSpec s = default_phantom_spec();
  s.regions[1].tensors[0].lambda_perp = -1e-3;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = default_phantom_spec();
  s.regions[3].tensors[0].weight = 0.7;
  CHECK_THROWS_AS(s.validate(), ConfigError);

  s = default_phantom_spec({16, 12, 8});
  s.snr = std::numeric_limits<double>::infinity();
  nlohmann::json j = s;
  const PhantomSpec back = phantom_spec_from_json(j);
  CHECK(back.dims == s.dims);
  CHECK(std::isinf(back.snr));
  CHECK(back.regions.size() == s.regions.size());
  CHECK(back.regions[2].hi == s.regions[2].hi);
  j["colour"] = "red";
  CHECK_THROWS_AS(phantom_spec_from_json(j), ConfigError);
}
