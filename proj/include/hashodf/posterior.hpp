#pragma once

#include "hashodf/field_model.hpp"
#include "hashodf/observation.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace hashodf {

/// Sufficient statistics of the data for the posterior over W: Xi Xi^T (r x r) and Y Xi^T (M x r).
struct BasisStatistics {
  Eigen::MatrixXd gram;
  Eigen::MatrixXd cross;
  Eigen::Index count = 0;

  static BasisStatistics from_basis(const Eigen::MatrixXd& xi, const Eigen::MatrixXd& y);
  /// Streams Xi over the coordinates in chunks; never holds the full r x N basis.
  static BasisStatistics from_model(const FieldModel& model, const Eigen::Matrix3Xd& coords, const Eigen::MatrixXd& y);
};

/**
 * Dense Kr x Kr precision
 *   (1/sigma_w2) I_r (x) R + (1/sigma_e2) Xi Xi^T (x) (Phi G)^T Phi G
 * over vec(W), W stacked column by column. Reference path; the posterior itself is block-diagonal.
 */
Eigen::MatrixXd assemble_precision_dense(const Eigen::MatrixXd& gram, const ObservationModel& obs, double sigma_e2,
                                         double sigma_w2);

/// Right-hand side (1/sigma_e2) (Xi^T (x) Phi G)^T vec(Y), returned as a K x r matrix.
Eigen::MatrixXd precision_rhs(const Eigen::MatrixXd& cross, const ObservationModel& obs, double sigma_e2);

/**
 * Gaussian posterior over the final linear layer.
 *
 * With Xi Xi^T = U S U^T, the rotation W' = W U splits the precision into r independent
 * K x K blocks B_j = R / sigma_w2 + s_j (Phi G)^T Phi G / sigma_e2. Each block is Cholesky
 * factored once; the combined factor F = (U (x) I_K) diag(L_j) satisfies F F^T = Lambda.
 */
class PosteriorModel {
public:
  PosteriorModel(const BasisStatistics& stats, const ObservationModel& obs, double sigma_e2, double sigma_w2);

  int basis_size() const { return static_cast<int>(mean_.rows()); }
  int rank() const { return static_cast<int>(mean_.cols()); }
  double sigma_e2() const { return sigma_e2_; }
  double sigma_w2() const { return sigma_w2_; }

  /// Posterior mean W* (K x r).
  const Eigen::MatrixXd& mean() const { return mean_; }
  Eigen::VectorXd mean_vector() const;
  /// Diagonal of Lambda^-1 arranged like W.
  Eigen::MatrixXd marginal_variances() const;
  /// Dense Lambda and Lambda^-1 rebuilt from the blocks (small problems only).
  Eigen::MatrixXd precision() const;
  Eigen::MatrixXd covariance() const;

  const Eigen::MatrixXd& rotation() const { return u_; }
  const Eigen::VectorXd& spectrum() const { return s_; }
  /// Number of blocks that needed diagonal jitter to factor.
  int jittered_blocks() const { return jittered_; }

  /// mean + F^-T z with z ~ N(0, I); seeded and reproducible.
  std::vector<Eigen::MatrixXd> sample(int n_samples = 250, std::uint64_t seed = 0) const;

private:
  double sigma_e2_;
  double sigma_w2_;
  Eigen::MatrixXd u_;
  Eigen::VectorXd s_;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> blocks_;
  Eigen::MatrixXd mean_;
  int jittered_ = 0;
};

/// Per-voxel GFA statistics over posterior samples of W.
struct UncertaintyMap {
  /// Sample std (n-1) over sample mean; kUndefinedRatio where the mean GFA is 0.
  std::vector<double> ratio;
  std::vector<double> mean_gfa;
  std::vector<double> std_gfa;
  int samples = 0;
};

inline constexpr double kUndefinedRatio = -1.0;

/// GFA std/mean ratio at each coordinate. Needs at least two samples and one coordinate.
UncertaintyMap gfa_uncertainty_map(const std::vector<Eigen::MatrixXd>& samples, const FieldModel& model,
                                   const Eigen::Matrix3Xd& coords);

}  // namespace hashodf
