#pragma once

#include "hashodf/training.hpp"
#include "hashodf/volume.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <vector>

namespace hashodf {

/// Diffusion-weighted directions of a single-shell acquisition.
struct GradientTable {
  std::vector<Eigen::Vector3d> directions;
  double b_value = 1000.0;
  /// Volume index (in the original bvec/bval order) of each direction.
  std::vector<int> dwi_index;
  /// Volume indices flagged as b0 (zero vector or b < 1).
  std::vector<int> b0_index;

  int size() const { return static_cast<int>(directions.size()); }
};

/**
 * FSL sidecars: bvec has 3 rows of M values (or M rows of 3), bval one row of M.
 * Columns are normalised; b0 columns are split off. FormatError on count mismatch,
 * UnsupportedError for more than 5% b-value spread among weighted volumes, InputError for M < 6.
 */
GradientTable load_gradients(const std::filesystem::path& bvec, const std::filesystem::path& bval);

/// Writes the directions (no b0) as FSL bvec/bval.
void save_gradients(const GradientTable& table, const std::filesystem::path& bvec, const std::filesystem::path& bval);

struct DwiVolume {
  /// One channel per diffusion-weighted direction, normalised by s0 when b0 volumes exist.
  Volume signal;
  GradientTable gradients;
  Mask mask;
  /// Mean b0 per voxel; empty when the acquisition had none (signal then used as is).
  std::vector<double> s0;

  int directions() const { return gradients.size(); }
  std::size_t masked_count() const;
};

/// Mask of voxels whose reference intensity (s0, else mean signal) exceeds `fraction` of its 99th percentile.
Mask threshold_mask(const DwiVolume& dwi, double fraction = 0.2);

/**
 * Assembles a DwiVolume from a 4-D image and its gradient table. Masked voxels must be finite;
 * negative masked signals are clamped to 0 (logged). Without a mask the threshold mask is used.
 */
DwiVolume make_dwi(const Volume& image, const GradientTable& table, std::optional<Mask> mask);

DwiVolume load_dwi(const std::filesystem::path& image, const std::filesystem::path& bvec,
                   const std::filesystem::path& bval, const std::optional<std::filesystem::path>& mask);

/// Masked voxels as training samples, in storage order.
TrainingSet training_set(const DwiVolume& dwi, std::vector<std::size_t>* voxels = nullptr);

/// Binary mask from a NIfTI volume (nonzero = inside).
Mask load_mask(const std::filesystem::path& path, const Volume& grid);

}  // namespace hashodf
