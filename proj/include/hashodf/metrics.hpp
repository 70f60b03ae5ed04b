#pragma once

#include "hashodf/sh_basis.hpp"
#include "hashodf/sphere.hpp"
#include "hashodf/volume.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace hashodf {

/**
 * Generalised fractional anisotropy from SH coefficients, sqrt(1 - c0^2 / sum c_k^2).
 * All-zero input gives 0 and sets *zero_input.
 */
double gfa(std::span<const double> coeffs, bool* zero_input = nullptr);

struct TensorFit {
  Eigen::Matrix3d tensor = Eigen::Matrix3d::Zero();
  /// Descending.
  Eigen::Vector3d eigenvalues = Eigen::Vector3d::Zero();
  /// Principal eigenvector, first nonzero component positive.
  Eigen::Vector3d e1 = Eigen::Vector3d::UnitX();
  double fa = 0.0;
  bool negative_eigenvalues = false;

  /// |e1| * FA, clamped to [0, 1].
  Eigen::Vector3d rgb() const;
};

double fractional_anisotropy(const Eigen::Vector3d& eigenvalues);

/// Log-linear least-squares tensor fit for one gradient set; the design pseudo-inverse is built once.
class DtiFitter {
public:
  DtiFitter(std::span<const Eigen::Vector3d> directions, double b_value);
  /// Signals are clamped at 1e-6 * s0 before the log.
  TensorFit fit(std::span<const double> signals, double s0 = 1.0) const;
  int directions() const { return static_cast<int>(pinv_.cols()); }

private:
  double b_;
  Eigen::MatrixXd pinv_;  // 6 x M
};

TensorFit dti_fit(std::span<const double> signals, std::span<const Eigen::Vector3d> directions, double b_value = 1000.0,
                  double s0 = 1.0);

/// Strict 1-ring maxima of an SH-expanded ODF on a mesh, one per antipodal pair.
class PeakFinder {
public:
  PeakFinder(SphereMesh mesh, const ShBasisSpec& spec);
  /// Sorted by ODF value, descending; pairwise axial separation >= min_separation_deg.
  std::vector<Eigen::Vector3d> find(std::span<const double> coeffs, double min_separation_deg = 25.0,
                                    double rel_threshold = 0.5) const;
  const SphereMesh& mesh() const { return mesh_; }

private:
  SphereMesh mesh_;
  Eigen::MatrixXd basis_;  // vertices x K
};

std::vector<Eigen::Vector3d> odf_peaks(std::span<const double> coeffs, const SphereMesh& mesh, const ShBasisSpec& spec,
                                       double min_separation_deg = 25.0, double rel_threshold = 0.5);

/// GFA per voxel of a K-channel coefficient volume; voxels outside the mask are 0.
Volume gfa_volume(const Volume& coeffs, const Mask& mask);

struct DtiMaps {
  Volume fa;
  Volume rgb;
};

/// Tensor fits of signals predicted as op * c (op = Phi G over `directions`), s0 = 1.
DtiMaps dti_maps_from_coefficients(const Volume& coeffs, const Mask& mask, std::span<const Eigen::Vector3d> directions,
                                   double b_value);

/// Tensor fits of a measured DWI volume (one channel per direction) with per-voxel s0 (or 1 if empty).
DtiMaps dti_maps_from_signal(const Volume& dwi, const Mask& mask, std::span<const Eigen::Vector3d> directions,
                             double b_value, const std::vector<double>& s0 = {});

}  // namespace hashodf
