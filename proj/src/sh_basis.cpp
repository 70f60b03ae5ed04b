#include "hashodf/sh_basis.hpp"

#include "hashodf/errors.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace hashodf {

ShBasisSpec::ShBasisSpec(int lmax) : lmax_(lmax) {
  if (lmax < 0 || lmax % 2 != 0) {
    throw ConfigError("lmax must be even and non-negative, got " + std::to_string(lmax));
  }
  index_.reserve(static_cast<std::size_t>(sh_basis_size(lmax)));
  for (int l = 0; l <= lmax; l += 2) {
    for (int m = -l; m <= l; ++m) index_.push_back({l, m});
  }
}

ShBasisSpec ShBasisSpec::from_size(int k) {
  for (int l = 0; sh_basis_size(l) <= k; l += 2) {
    if (sh_basis_size(l) == k) return ShBasisSpec(l);
  }
  throw ConfigError("no even-degree SH basis has " + std::to_string(k) + " coefficients");
}

int ShBasisSpec::column(int l, int m) const {
  if (l < 0 || l > lmax_ || l % 2 != 0 || m < -l || m > l) {
    throw IndexError("no harmonic (l=" + std::to_string(l) + ", m=" + std::to_string(m) + ") in basis");
  }
  return l * (l + 1) / 2 + m;
}

namespace {

// Fills out[k] for one unit direction. The associated Legendre factor is split as
// P~_l^m(z) = q_l^m(z) * rho^m and rho^m {cos, sin}(m phi) is taken from (x + iy)^m,
// so negating the direction flips every factor exactly and even-degree values are
// bit-identical for p and -p.
void eval_unit(const Eigen::Vector3d& p, const ShBasisSpec& spec, std::span<double> out) {
  const int lmax = spec.lmax();
  const double x = p.x(), y = p.y(), z = p.z();

  // Re/Im of (x + iy)^m for m = 0..lmax.
  std::vector<double> re(static_cast<std::size_t>(lmax + 1)), im(static_cast<std::size_t>(lmax + 1));
  re[0] = 1.0;
  im[0] = 0.0;
  for (int m = 1; m <= lmax; ++m) {
    re[m] = re[m - 1] * x - im[m - 1] * y;
    im[m] = re[m - 1] * y + im[m - 1] * x;
  }

  double qmm = 1.0 / std::sqrt(4.0 * std::numbers::pi);
  for (int m = 0; m <= lmax; ++m) {
    if (m > 0) qmm *= -std::sqrt((2.0 * m + 1.0) / (2.0 * m));  // Condon-Shortley phase
    double q_lm2 = 0.0;  // q_{l-2}^m
    double q_lm1 = qmm;  // q_{l-1}^m, starting at l = m
    for (int l = m; l <= lmax; ++l) {
      double q;
      if (l == m) {
        q = qmm;
      } else if (l == m + 1) {
        q = std::sqrt(2.0 * m + 3.0) * z * qmm;
      } else {
        const double ll = l, mm = m;
        const double a = std::sqrt((4.0 * ll * ll - 1.0) / (ll * ll - mm * mm));
        const double b = std::sqrt(((ll - 1.0) * (ll - 1.0) - mm * mm) / (4.0 * (ll - 1.0) * (ll - 1.0) - 1.0));
        q = a * (z * q_lm1 - b * q_lm2);
      }
      if (l > m) {
        q_lm2 = q_lm1;
        q_lm1 = q;
      }
      if (l % 2 != 0) continue;
      const int base = l * (l + 1) / 2;
      if (m == 0) {
        out[static_cast<std::size_t>(base)] = q;
      } else {
        out[static_cast<std::size_t>(base - m)] = std::numbers::sqrt2 * q * re[m];
        out[static_cast<std::size_t>(base + m)] = std::numbers::sqrt2 * q * im[m];
      }
    }
  }
}

void require_unit(const Eigen::Vector3d& p, std::size_t row) {
  const double n = p.norm();
  if (!(std::abs(n - 1.0) <= 1e-6)) {
    throw InputError("direction " + std::to_string(row) + " has norm " + std::to_string(n) +
                     " (unit norm required within 1e-6)");
  }
}

}  // namespace

Eigen::MatrixXd eval_sh_basis(std::span<const Eigen::Vector3d> directions, const ShBasisSpec& spec) {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> phi(
      static_cast<Eigen::Index>(directions.size()), spec.size());
  for (std::size_t i = 0; i < directions.size(); ++i) {
    require_unit(directions[i], i);
    eval_unit(directions[i], spec,
              std::span<double>(phi.row(static_cast<Eigen::Index>(i)).data(), static_cast<std::size_t>(spec.size())));
  }
  return phi;
}

void eval_sh_basis(const Eigen::Vector3d& direction, const ShBasisSpec& spec, std::span<double> out) {
  require_unit(direction, 0);
  if (out.size() != static_cast<std::size_t>(spec.size())) {
    throw InputError("output span must hold K = " + std::to_string(spec.size()) + " values");
  }
  eval_unit(direction, spec, out);
}

double legendre_at_zero(int l) {
  if (l < 0 || l % 2 != 0) {
    throw DomainError("legendre_at_zero: degree must be even and non-negative, got " + std::to_string(l));
  }
  // (n+1) P_{n+1}(x) = (2n+1) x P_n(x) - n P_{n-1}(x), evaluated at x = 0.
  const double x = 0.0;
  double p_prev = 1.0;  // P_0
  double p = x;         // P_1
  if (l == 0) return p_prev;
  for (int n = 1; n < l; ++n) {
    const double next = ((2.0 * n + 1.0) * x * p - n * p_prev) / (n + 1.0);
    p_prev = p;
    p = next;
  }
  return p;
}

double frt_eigenvalue(int l) { return 2.0 * std::numbers::pi * legendre_at_zero(l); }

Eigen::VectorXd frt_matrix(const ShBasisSpec& spec) {
  Eigen::VectorXd g(spec.size());
  for (int k = 0; k < spec.size(); ++k) g[k] = 1.0 / frt_eigenvalue(spec.degree(k));
  return g;
}

Eigen::VectorXd matern_prior_matrix(const MaternParams& gamma, const ShBasisSpec& spec) {
  if (!(gamma.nu > 0.0)) throw ConfigError("Matern smoothness nu must be > 0");
  if (!(gamma.kappa >= 0.0)) throw ConfigError("Matern kappa must be >= 0");
  Eigen::VectorXd rho(spec.size());
  for (int k = 0; k < spec.size(); ++k) {
    const double l = spec.degree(k);
    rho[k] = std::pow(gamma.kappa * gamma.kappa + l * (l + 1.0), gamma.nu + 1.0);
  }
  return rho;
}

Eigen::VectorXd laplace_beltrami_penalty(const ShBasisSpec& spec) {
  Eigen::VectorXd pen(spec.size());
  for (int k = 0; k < spec.size(); ++k) {
    const double l = spec.degree(k);
    pen[k] = l * l * (l + 1.0) * (l + 1.0);
  }
  return pen;
}

}  // namespace hashodf
