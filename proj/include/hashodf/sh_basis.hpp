#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace hashodf {

/// (degree, order) pair of one real symmetric harmonic.
struct ShIndex {
  int l = 0;
  int m = 0;
};

/**
 * Truncated real, antipodally symmetric spherical harmonic basis.
 *
 * Only even degrees 0, 2, ..., lmax are kept. Column k corresponds to
 * index()[k]; ordering is ascending l, then ascending m, so
 * k = l(l+1)/2 + m (0-based).
 *
 * Convention (real symmetric, as in Descoteaux et al. 2007 / dipy "descoteaux07"),
 * with Y_l^m the complex harmonic including the Condon-Shortley phase:
 *
 *   m = 0 :  Y_l^0
 *   m < 0 :  sqrt(2) * Re(Y_l^|m|) = sqrt(2) N_l^|m| P_l^|m|(cos t) cos(|m| p)
 *   m > 0 :  sqrt(2) * Im(Y_l^m)   = sqrt(2) N_l^m  P_l^m(cos t)  sin(m p)
 *
 * where t is the polar angle from +z and p the azimuth atan2(y, x).
 */
class ShBasisSpec {
public:
  /// Throws ConfigError unless lmax is even and non-negative.
  explicit ShBasisSpec(int lmax = 8);
  /// Spec whose size is K; ConfigError if K is not (l+1)(l+2)/2 for an even l.
  static ShBasisSpec from_size(int k);

  int lmax() const { return lmax_; }
  /// Basis size K = (lmax+1)(lmax+2)/2.
  int size() const { return static_cast<int>(index_.size()); }
  const std::vector<ShIndex>& index() const { return index_; }
  int degree(int k) const { return index_[static_cast<std::size_t>(k)].l; }
  /// Column of (l, m); throws IndexError for pairs outside the basis.
  int column(int l, int m) const;

private:
  int lmax_;
  std::vector<ShIndex> index_;
};

/// K for a given even lmax.
constexpr int sh_basis_size(int lmax) { return (lmax + 1) * (lmax + 2) / 2; }

/**
 * Evaluates the basis at each direction (rows) for each harmonic (columns).
 * Directions must have unit norm within 1e-6 (InputError otherwise).
 */
Eigen::MatrixXd eval_sh_basis(std::span<const Eigen::Vector3d> directions, const ShBasisSpec& spec);

/// Single-direction convenience overload; writes K values.
void eval_sh_basis(const Eigen::Vector3d& direction, const ShBasisSpec& spec, std::span<double> out);

/// P_l(0) from the three-term recurrence. DomainError for odd or negative l.
double legendre_at_zero(int l);

/// Funk-Radon eigenvalue 2*pi*P_l(0) of degree l.
double frt_eigenvalue(int l);

/**
 * Diagonal inverse Funk-Radon operator G: entry k = 1 / (2*pi*P_l(k)(0)).
 * Multiplying ODF coefficients by this yields signal coefficients.
 */
Eigen::VectorXd frt_matrix(const ShBasisSpec& spec);

/// Smoothness/length-scale of the spherical Matern penalty.
struct MaternParams {
  double nu = 1.0;
  double kappa = 0.0;
};

/**
 * Diagonal degree penalty rho_l = (kappa^2 + l(l+1))^(nu+1), used as R_gamma in the
 * weight prior precision. ConfigError for nu <= 0 or kappa < 0.
 */
Eigen::VectorXd matern_prior_matrix(const MaternParams& gamma, const ShBasisSpec& spec);

/// Laplace-Beltrami squared penalty l^2 (l+1)^2 per column (SHLS regulariser).
Eigen::VectorXd laplace_beltrami_penalty(const ShBasisSpec& spec);

}  // namespace hashodf
