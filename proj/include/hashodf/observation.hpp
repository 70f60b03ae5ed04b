#pragma once

#include "hashodf/sh_basis.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace hashodf {

/**
 * Fixed linear pieces of the measurement model y ~ N(Phi G c, sigma_e^2 I):
 * basis evaluations Phi (M x K), inverse-FRT diagonal G, the product Phi G, and the
 * Matern degree penalty R_gamma used by both the training regulariser and the posterior.
 */
struct ObservationModel {
  ShBasisSpec spec;
  Eigen::MatrixXd phi;
  Eigen::VectorXd frt;
  Eigen::VectorXd prior;
  /// Phi * diag(frt), M x K.
  Eigen::MatrixXd op;

  static ObservationModel create(std::span<const Eigen::Vector3d> directions, const ShBasisSpec& spec,
                                 const MaternParams& gamma);
  /// Same model restricted to a subset of direction rows.
  ObservationModel select_rows(std::span<const int> rows) const;

  int directions() const { return static_cast<int>(phi.rows()); }
  int basis_size() const { return static_cast<int>(phi.cols()); }
};

}  // namespace hashodf
