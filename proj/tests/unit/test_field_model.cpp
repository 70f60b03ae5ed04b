#include "hashodf/errors.hpp"
#include "hashodf/field_model.hpp"
#include "hashodf/sh_basis.hpp"
#include "hashodf/sphere.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace hashodf;

namespace {

Eigen::Matrix3Xd random_coords(int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  Eigen::Matrix3Xd c(3, n);
  for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = u(rng);
  return c;
}

FieldModelConfig small_hash() {
  FieldModelConfig c;
  c.encoder = HashGridConfig{4, 4, 1.5, 2, 12, true};
  c.head = MlpHeadConfig{2, 16, Activation::Sine, 30.0};
  return c;
}

}  // namespace

TEST_CASE("shapes follow the configuration") {
  FieldModelConfig def;
  CHECK(def.input_width() == 31);
  CHECK(def.rank() == 64);
  const FieldModel m = init_model(small_hash(), 1);
  const Eigen::Matrix3Xd v = random_coords(7, 1);
  CHECK(m.basis_columns(v).rows() == 16);
  CHECK(m.basis_columns(v).cols() == 7);
  CHECK(m.coefficient_columns(v).rows() == 45);
  CHECK(spatial_basis(v, m).cols() == 16);
  CHECK(coefficients(v, m).cols() == 45);
  CHECK(m.layers().front().weight.cols() == 4 * 2 + 3);

  FieldModelConfig global;
  global.encoder.reset();
  global.head = MlpHeadConfig{3, 32, Activation::Sine, 30.0};
  const FieldModel g = init_model(global, 1);
  CHECK_FALSE(g.hash_encoded());
  CHECK(g.layers().front().weight.cols() == 3);
  CHECK(g.coefficient_columns(v).rows() == 45);
}

TEST_CASE("config validation") {
  FieldModelConfig c = small_hash();
  c.head.depth = 0;
  CHECK_THROWS_AS(init_model(c, 0), ConfigError);
  c = small_hash();
  c.head.omega0 = 0.0;
  CHECK_THROWS_AS(init_model(c, 0), ConfigError);
  c = small_hash();
  c.lmax = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_activation("relu") == Activation::Relu);
  CHECK(to_string(Activation::Sine) == "sine");
  CHECK_THROWS_AS(parse_activation("wire"), ConfigError);
}

TEST_CASE("zero head gives a zero basis; W = 0 gives zero coefficients") {
  FieldModel m = init_model(small_hash(), 2);
  const Eigen::Matrix3Xd v = random_coords(10, 2);
  FieldModel z = m;
  for (auto& l : z.layers()) {
    l.weight.setZero();
    l.bias.setZero();
  }
  CHECK(z.basis_columns(v).isZero(0.0));
  FieldModel w0 = m;
  w0.w().setZero();
  CHECK(w0.coefficient_columns(v).isZero(0.0));
}

TEST_CASE("linearity in W and determinism") {
  FieldModel m = init_model(small_hash(), 3);
  const Eigen::Matrix3Xd v = random_coords(20, 3);
  const Eigen::MatrixXd c1 = m.coefficient_columns(v);
  CHECK((m.coefficient_columns(v).array() == c1.array()).all());
  FieldModel m2 = m;
  m2.w() *= 2.0;
  CHECK(((m2.coefficient_columns(v) - 2.0 * c1).array().abs() <= 1e-14 * (1 + c1.array().abs())).all());

  const auto dirs = hemisphere_directions(70);
  const ShBasisSpec spec(8);
  const Eigen::MatrixXd phi = eval_sh_basis(dirs, spec);
  const Eigen::VectorXd frt = frt_matrix(spec);
  const Eigen::MatrixXd s1 = predict_signal(c1.transpose(), phi, frt);
  const Eigen::MatrixXd s2 = predict_signal(m2.coefficient_columns(v).transpose(), phi, frt);
  CHECK(s1.cols() == 70);
  CHECK((s2 - 2 * s1).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("sine convention: omega0 on the first layer only") {
  FieldModelConfig c;
  c.encoder.reset();
  c.head = MlpHeadConfig{2, 2, Activation::Sine, 30.0};
  c.lmax = 0;
  FieldModel m = init_model(c, 4);
  auto& l0 = m.layers()[0];
  auto& l1 = m.layers()[1];
  l0.weight << 0.01, 0.0, 0.0, 0.0, 0.02, 0.0;
  l0.bias << 0.0, 0.005;
  l1.weight << 1.0, 0.5, -0.25, 2.0;
  l1.bias << 0.1, -0.1;
  Eigen::Matrix3Xd v(3, 1);
  v << 0.3, 0.7, 0.2;
  const double h0 = std::sin(30.0 * 0.003), h1 = std::sin(30.0 * (0.014 + 0.005));
  const Eigen::MatrixXd xi = m.basis_columns(v);
  CHECK(xi(0, 0) == doctest::Approx(std::sin(h0 + 0.5 * h1 + 0.1)).epsilon(1e-14));
  CHECK(xi(1, 0) == doctest::Approx(std::sin(-0.25 * h0 + 2.0 * h1 - 0.1)).epsilon(1e-14));

  c.head.activation = Activation::Relu;
  FieldModel r = init_model(c, 4);
  r.layers()[0].weight << 1, 0, 0, 0, -1, 0;
  r.layers()[0].bias.setZero();
  r.layers()[1].weight.setIdentity();
  r.layers()[1].bias.setZero();
  const Eigen::MatrixXd xr = r.basis_columns(v);
  CHECK(xr(0, 0) == doctest::Approx(0.3));
  CHECK(xr(1, 0) == 0.0);
}

TEST_CASE("predict_signal of an isotropic coefficient vector") {
  const auto dirs = hemisphere_directions(70);
  const ShBasisSpec spec(8);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(1, 45);
  c(0, 0) = 3.0;
  const Eigen::MatrixXd s = predict_signal(c, eval_sh_basis(dirs, spec), frt_matrix(spec));
  const double expected = 3.0 / (2 * std::numbers::pi) / (2 * std::sqrt(std::numbers::pi));
  CHECK(s.cols() == 70);
  CHECK((s.array() - expected).abs().maxCoeff() < 1e-14);
  CHECK(predict_signal(Eigen::MatrixXd::Zero(2, 45), eval_sh_basis(dirs, spec), frt_matrix(spec)).isZero(0.0));
  CHECK_THROWS_AS(predict_signal(Eigen::MatrixXd::Zero(2, 44), eval_sh_basis(dirs, spec), frt_matrix(spec)), InputError);
}

TEST_CASE("initialisation bounds and reproducibility") {
  const FieldModelConfig def;
  const FieldModel a = init_model(def, 9), b = init_model(def, 9);
  CHECK((a.w().array() == b.w().array()).all());
  for (std::size_t i = 0; i < a.layers().size(); ++i) {
    CHECK((a.layers()[i].weight.array() == b.layers()[i].weight.array()).all());
  }
  const auto pa = a.encoder()->params(), pb = b.encoder()->params();
  CHECK(std::equal(pa.begin(), pa.end(), pb.begin()));
  CHECK(a.layers()[0].weight.cwiseAbs().maxCoeff() <= 1.0 / 31);
  CHECK(a.layers()[1].weight.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 64) / 30);

  const Eigen::Matrix3Xd v = random_coords(1000, 9);
  const Eigen::MatrixXd c = a.coefficient_columns(v);
  CHECK(c.allFinite());
  CHECK(c.cwiseAbs().maxCoeff() < 10.0);
}

TEST_CASE("parameters touched per point are a tiny share of the total") {
  const FieldModel m = init_model(FieldModelConfig{}, 0);  // default grid, finest level 224
  const std::size_t head = m.head_parameter_count() + static_cast<std::size_t>(m.w().size());
  CHECK(m.parameters_touched_per_point() == 8u * 14u * 2u + head);
  CHECK(static_cast<double>(m.parameters_touched_per_point()) < 1e-3 * static_cast<double>(m.parameter_count()));
}
