#include "hashodf/errors.hpp"
#include "hashodf/sh_basis.hpp"
#include "hashodf/sphere.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

using namespace hashodf;
using std::numbers::pi;

namespace {

std::vector<Eigen::Vector3d> random_directions(int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<Eigen::Vector3d> out;
  while (static_cast<int>(out.size()) < n) {
    Eigen::Vector3d v(g(rng), g(rng), g(rng));
    if (v.norm() > 1e-3) out.push_back(v.normalized());
  }
  return out;
}

}  // namespace

TEST_CASE("index map covers even degrees once") {
  const ShBasisSpec spec(8);
  CHECK(spec.size() == 45);
  CHECK(sh_basis_size(8) == 45);
  std::set<std::pair<int, int>> seen;
  for (int k = 0; k < spec.size(); ++k) {
    const auto [l, m] = spec.index()[static_cast<std::size_t>(k)];
    CHECK(l % 2 == 0);
    CHECK(std::abs(m) <= l);
    CHECK(spec.column(l, m) == k);
    seen.insert({l, m});
  }
  CHECK(seen.size() == 45u);
  CHECK_THROWS_AS(ShBasisSpec(3), ConfigError);
  CHECK_THROWS_AS(ShBasisSpec(-2), ConfigError);
  CHECK_THROWS_AS(spec.column(1, 0), IndexError);
  CHECK(ShBasisSpec::from_size(15).lmax() == 4);
  CHECK_THROWS_AS(ShBasisSpec::from_size(44), ConfigError);
}

TEST_CASE("closed-form low-degree harmonics") {
  const ShBasisSpec spec(2);
  for (const auto& p : random_directions(50, 3)) {
    const Eigen::MatrixXd phi = eval_sh_basis(std::vector<Eigen::Vector3d>{p}, spec);
    const double x = p.x(), y = p.y(), z = p.z();
    CHECK(phi(0, 0) == doctest::Approx(0.5 / std::sqrt(pi)).epsilon(1e-14));
    CHECK(phi(0, spec.column(2, 0)) == doctest::Approx(std::sqrt(5.0 / (16.0 * pi)) * (3 * z * z - 1)).epsilon(1e-12));
    // real forms, Condon-Shortley phase kept: sqrt2 * Re/Im of Y_2^m
    const double c1 = std::sqrt(15.0 / (4.0 * pi)), c2 = std::sqrt(15.0 / (16.0 * pi));
    CHECK(phi(0, spec.column(2, -1)) == doctest::Approx(-c1 * x * z).epsilon(1e-12));
    CHECK(phi(0, spec.column(2, 1)) == doctest::Approx(-c1 * y * z).epsilon(1e-12));
    CHECK(phi(0, spec.column(2, -2)) == doctest::Approx(c2 * (x * x - y * y)).epsilon(1e-12));
    CHECK(phi(0, spec.column(2, 2)) == doctest::Approx(2 * c2 * x * y).epsilon(1e-12));
  }
}

TEST_CASE("Gram matrix under product quadrature is the identity") {
  // Gauss-Legendre in cos(theta) x uniform azimuth is exact for degree 16 integrands.
  using Quad = boost::math::quadrature::gauss<double, 20>;
  const int n_phi = 40;
  std::vector<Eigen::Vector3d> dirs;
  std::vector<double> w;
  const auto& abscissa = Quad::abscissa();
  const auto& weights = Quad::weights();
  for (std::size_t i = 0; i < abscissa.size(); ++i) {
    for (int sign : {1, -1}) {
      if (abscissa[i] == 0.0 && sign < 0) continue;
      const double z = sign * abscissa[i], s = std::sqrt(1 - z * z);
      for (int j = 0; j < n_phi; ++j) {
        const double phi = 2 * pi * j / n_phi;
        dirs.emplace_back(s * std::cos(phi), s * std::sin(phi), z);
        w.push_back(weights[i] * 2 * pi / n_phi);
      }
    }
  }
  const Eigen::MatrixXd phi = eval_sh_basis(dirs, ShBasisSpec(8));
  const Eigen::MatrixXd gram = phi.transpose() * Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size())).asDiagonal() * phi;
  CHECK((gram - Eigen::MatrixXd::Identity(45, 45)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("antipodal symmetry is bit exact") {
  const ShBasisSpec spec(8);
  auto dirs = random_directions(1000, 11);
  std::vector<Eigen::Vector3d> neg;
  for (const auto& d : dirs) neg.push_back(-d);
  const Eigen::MatrixXd a = eval_sh_basis(dirs, spec), b = eval_sh_basis(neg, spec);
  CHECK((a.array() == b.array()).all());
}

TEST_CASE("non-unit direction rejected") {
  CHECK_THROWS_AS(eval_sh_basis(std::vector<Eigen::Vector3d>{{0, 0, 1.01}}, ShBasisSpec(2)), InputError);
  const auto dirs = hemisphere_directions(70);
  CHECK(eval_sh_basis(dirs, ShBasisSpec(8)).rows() == 70);
  CHECK(eval_sh_basis(dirs, ShBasisSpec(8)).cols() == 45);
}

TEST_CASE("Legendre values at zero against the three-term recurrence") {
  CHECK(legendre_at_zero(0) == 1.0);
  CHECK(legendre_at_zero(2) == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(legendre_at_zero(4) == doctest::Approx(0.375).epsilon(1e-15));
  // closed form: (-1)^(l/2) (l-1)!! / l!!
  for (int l = 2; l <= 16; l += 2) {
    double v = 1.0;
    for (int i = 1; i < l; i += 2) v *= static_cast<double>(i) / (i + 1);
    CHECK(legendre_at_zero(l) == doctest::Approx(((l / 2) % 2 ? -1.0 : 1.0) * v).epsilon(1e-14));
  }
  CHECK_THROWS_AS(legendre_at_zero(3), DomainError);
}

TEST_CASE("FRT diagonal and Matern prior entries") {
  const ShBasisSpec spec(8);
  CHECK(frt_eigenvalue(0) == doctest::Approx(2 * pi));
  CHECK(frt_eigenvalue(2) == doctest::Approx(-pi));
  const Eigen::VectorXd g = frt_matrix(spec);
  CHECK(g.size() == 45);
  CHECK(g[0] == doctest::Approx(1 / (2 * pi)).epsilon(1e-14));
  CHECK(g[spec.column(2, 0)] == doctest::Approx(-1 / pi).epsilon(1e-14));
  for (int k = 0; k < 45; ++k) {
    CHECK(std::isfinite(g[k]));
    CHECK(g[k] == g[spec.column(spec.degree(k), 0)]);
    CHECK((g[k] > 0) == ((spec.degree(k) / 2) % 2 == 0));
  }

  const Eigen::VectorXd r11 = matern_prior_matrix({1.0, 1.0}, spec);
  CHECK(r11[0] == doctest::Approx(1.0));
  CHECK(r11[spec.column(2, 1)] == doctest::Approx(49.0));
  const Eigen::VectorXd r10 = matern_prior_matrix({1.0, 0.0}, spec);
  CHECK(r10[spec.column(2, -2)] == doctest::Approx(36.0));
  CHECK((r10 - laplace_beltrami_penalty(spec)).cwiseAbs().maxCoeff() < 1e-9);
  const Eigen::VectorXd r = matern_prior_matrix({1.5, 2.0}, spec);
  CHECK(r[0] == doctest::Approx(std::pow(2.0, 2 * 2.5)));
  for (int k = 1; k < 45; ++k) CHECK(r[k] >= r[k - 1]);
  CHECK_THROWS_AS(matern_prior_matrix({0.0, 1.0}, spec), ConfigError);
  CHECK_THROWS_AS(matern_prior_matrix({1.0, -1.0}, spec), ConfigError);
}
