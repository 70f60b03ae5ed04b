#pragma once

#include "hashodf/dwi.hpp"
#include "hashodf/sh_basis.hpp"
#include "hashodf/volume.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <span>
#include <string>

namespace hashodf {

inline constexpr double kDefaultLambdaSh = 0.006;

/**
 * Penalised SH least squares: c_signal = (Phi^T Phi + lambda L)^-1 Phi^T y with
 * L = diag(l^2 (l+1)^2), then ODF coefficients c_k = 2 pi P_l(0) c_signal,k.
 * One factorisation serves every voxel.
 */
class ShlsFitter {
public:
  ShlsFitter(std::span<const Eigen::Vector3d> directions, const ShBasisSpec& spec, double lambda_sh = kDefaultLambdaSh);

  /// ODF coefficients for each signal column (K x N from M x N).
  Eigen::MatrixXd fit(const Eigen::MatrixXd& signals) const;
  const ShBasisSpec& spec() const { return spec_; }

private:
  ShBasisSpec spec_;
  Eigen::MatrixXd solve_;  // K x M: diag(FRT^-1) (Phi^T Phi + lambda L)^-1 Phi^T
};

/// Coefficient volume (K channels) over the masked voxels; zero elsewhere. Tagged with coefficient_tag.
Volume shls_fit(const DwiVolume& dwi, const ShBasisSpec& spec, double lambda_sh = kDefaultLambdaSh);

/// Intent-name tag of coefficient volumes, e.g. "l8:desc07:frt1".
std::string coefficient_tag(const ShBasisSpec& spec);
/// lmax from a tag; ConfigError if the tag is not ours or declares another convention.
int parse_coefficient_tag(const std::string& tag);

}  // namespace hashodf
