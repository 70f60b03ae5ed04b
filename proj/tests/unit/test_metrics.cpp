#include "hashodf/errors.hpp"
#include "hashodf/metrics.hpp"
#include "hashodf/shls.hpp"
#include "hashodf/sphere.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace hashodf;

namespace {

std::span<const double> view(const Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

Eigen::VectorXd random_coeffs(std::mt19937_64& rng, int k = 45) {
  std::normal_distribution<double> n;
  Eigen::VectorXd c(k);
  for (int i = 0; i < k; ++i) c[i] = n(rng);
  return c;
}

// ODF coefficients of a tensor mixture: lambda = 0 SHLS on 256 dense directions.
Eigen::VectorXd mixture_odf(const std::vector<std::pair<Eigen::Vector3d, double>>& fibres) {
  const auto dense = hemisphere_directions(256);
  Eigen::MatrixXd y(256, 1);
  for (int i = 0; i < 256; ++i) {
    double s = 0.0;
    for (const auto& [axis, w] : fibres) {
      const double c = axis.normalized().dot(dense[static_cast<std::size_t>(i)]);
      s += w * std::exp(-1000.0 * (0.3e-3 + 1.4e-3 * c * c));
    }
    y(i, 0) = s;
  }
  return ShlsFitter(dense, ShBasisSpec(8), 0.0).fit(y).col(0);
}

}  // namespace

TEST_CASE("GFA closed form") {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(45);
  c[0] = 2.5;
  CHECK(gfa(view(c)) == 0.0);
  c[0] = 0.0;
  c[7] = -1.0;
  CHECK(gfa(view(c)) == 1.0);
  bool zero = false;
  CHECK(gfa(view(Eigen::VectorXd::Zero(45)), &zero) == 0.0);
  CHECK(zero);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int t = 0; t < 1000; ++t) {
    const Eigen::VectorXd x = random_coeffs(rng);
    const double g = gfa(view(x));
    CHECK(g >= 0.0);
    CHECK(g <= 1.0);
    for (double a : {2.0, 0.5, 1024.0}) CHECK(gfa(view(Eigen::VectorXd(a * x))) == g);
    const Eigen::VectorXd y = scale(rng) * x;
    CHECK(std::abs(gfa(view(y)) - g) <= 4 * std::numeric_limits<double>::epsilon());
  }
}

TEST_CASE("GFA against the discrete std/rms on a 2562-vertex sphere") {
  const SphereMesh mesh = icosphere(4);
  REQUIRE(mesh.vertices.size() == 2562u);
  const auto areas = mesh.vertex_areas();
  const Eigen::Map<const Eigen::VectorXd> w(areas.data(), static_cast<Eigen::Index>(areas.size()));
  const Eigen::MatrixXd phi = eval_sh_basis(mesh.vertices, ShBasisSpec(8));
  std::mt19937_64 rng(2);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    Eigen::VectorXd c = random_coeffs(rng);
    c[0] += 3.0 * (t % 3);  // mix of isotropic shares
    const Eigen::VectorXd f = phi * c;
    const double mean = w.dot(f) / w.sum();
    const double ms = w.dot(f.cwiseAbs2()) / w.sum();
    const double discrete = std::sqrt(std::max(0.0, ms - mean * mean) / ms);
    worst = std::max(worst, std::abs(discrete - gfa(view(c))));
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("tensor fit is self-inverse on noiseless signals") {
  const auto dirs = hemisphere_directions(70);
  const auto simulate = [&](const Eigen::Matrix3d& d) {
    std::vector<double> s;
    for (const auto& g : dirs) s.push_back(2.0 * std::exp(-1000.0 * g.dot(d * g)));
    return s;
  };
  const Eigen::Matrix3d prolate = Eigen::Vector3d(1.7e-3, 0.3e-3, 0.3e-3).asDiagonal();
  TensorFit fit = dti_fit(simulate(prolate), dirs, 1000.0, 2.0);
  CHECK((fit.tensor - prolate).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(fit.e1.isApprox(Eigen::Vector3d::UnitX(), 1e-9));
  CHECK(fit.fa == doctest::Approx(fractional_anisotropy({1.7e-3, 0.3e-3, 0.3e-3})));
  CHECK(fit.rgb().isApprox(Eigen::Vector3d(fit.fa, 0, 0), 1e-9));
  CHECK_FALSE(fit.negative_eigenvalues);

  const TensorFit iso = dti_fit(simulate(0.8e-3 * Eigen::Matrix3d::Identity()), dirs, 1000.0, 2.0);
  CHECK(iso.fa < 1e-8);

  // Oblique tensor: rotation of the prolate one, sign-canonical e1.
  const Eigen::Matrix3d r = Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, 3).normalized()).toRotationMatrix();
  const Eigen::Matrix3d oblique = r * prolate * r.transpose();
  fit = DtiFitter(dirs, 1000.0).fit(simulate(oblique), 2.0);
  CHECK((fit.tensor - oblique).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(axis_angle_deg(fit.e1, r.col(0)) < 1e-6);
  CHECK(fit.e1[0] > 0.0);

  CHECK(fractional_anisotropy({1, 0, 0}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(dti_fit(std::vector<double>(5, 1.0), std::vector<Eigen::Vector3d>(dirs.begin(), dirs.begin() + 5)), InputError);
}

TEST_CASE("ODF peaks") {
  const PeakFinder finder(icosphere(4), ShBasisSpec(8));
  SUBCASE("isotropic ODF has no strict maxima") {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(45);
    c[0] = 1.0;
    CHECK(finder.find(view(c), 25.0, 0.1).empty());
  }
  SUBCASE("single fibre") {
    const Eigen::Vector3d axis = Eigen::Vector3d(0.3, -0.5, 0.8).normalized();
    const auto peaks = finder.find(view(mixture_odf({{axis, 1.0}})));
    REQUIRE(peaks.size() == 1u);
    CHECK(axis_angle_deg(peaks[0], axis) < 5.0);
    CHECK(peaks[0].norm() == doctest::Approx(1.0));
  }
  SUBCASE("orthogonal crossing") {
    const auto peaks = finder.find(view(mixture_odf({{Eigen::Vector3d::UnitX(), 0.5}, {Eigen::Vector3d::UnitY(), 0.5}})));
    REQUIRE(peaks.size() == 2u);
    CHECK(axis_angle_deg(peaks[0], peaks[1]) >= 80.0);
  }
  SUBCASE("random ODFs respect the separation and unit norm") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 50; ++t) {
      const auto peaks = finder.find(view(random_coeffs(rng)), 30.0, 0.2);
      for (std::size_t i = 0; i < peaks.size(); ++i) {
        CHECK(peaks[i].norm() == doctest::Approx(1.0).epsilon(1e-12));
        for (std::size_t j = 0; j < i; ++j) CHECK(axis_angle_deg(peaks[i], peaks[j]) >= 30.0);
      }
    }
  }
  CHECK_THROWS_AS(PeakFinder(icosphere(2), ShBasisSpec(8)), InputError);
}

TEST_CASE("volume maps") {
  Volume coeffs({3, 2, 2, 45});
  Mask mask(coeffs.voxels(), 1);
  mask[5] = 0;
  for (std::size_t v = 0; v < coeffs.voxels(); ++v) {
    coeffs.at(v, 0) = 1.0;
    coeffs.at(v, 3) = 0.1 * static_cast<double>(v);
  }
  const Volume g = gfa_volume(coeffs, mask);
  CHECK(g.channels() == 1);
  CHECK(g.at(std::size_t{0}) == 0.0);
  CHECK(g.at(std::size_t{5}) == 0.0);
  CHECK(g.at(std::size_t{4}) == doctest::Approx(std::sqrt(1 - 1 / 1.16)));
  CHECK_THROWS_AS(gfa_volume(coeffs, Mask(3, 1)), InputError);

  Volume one({1, 1, 1, 45});
  const Eigen::VectorXd odf = mixture_odf({{Eigen::Vector3d::UnitZ(), 1.0}});
  for (int k = 0; k < 45; ++k) one.at(std::size_t{0}, k) = odf[k];
  const auto maps = dti_maps_from_coefficients(one, Mask(1, 1), hemisphere_directions(70), 1000.0);
  CHECK(maps.rgb.channels() == 3);
  CHECK(maps.rgb.at(std::size_t{0}, 2) > 0.5);
  CHECK(maps.rgb.at(std::size_t{0}, 0) < 0.05);
}
