#pragma once

#include "hashodf/volume.hpp"

#include <Eigen/Dense>

#include <array>
#include <string>
#include <vector>

namespace hashodf {

/// Row-major 2-D image.
using Image = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct FsimScore {
  double value = 0.0;
  /// Phase congruency vanished everywhere (constant image); value is NaN.
  bool flagged = false;
};

/// Phase congruency map (4 scales x 4 orientations of log-Gabor filters).
Image phase_congruency(const Image& im);

/// Grayscale FSIM of `test` against `ref`; both on a 0..255 scale.
FsimScore fsim(const Image& ref, const Image& test);

/// FSIMc on RGB images (channels R, G, B on a 0..255 scale); luma carries PC and gradient.
FsimScore fsim_color(const std::array<Image, 3>& ref, const std::array<Image, 3>& test);

struct SliceScore {
  int axis = 0;
  int index = 0;
  double value = 0.0;
};

struct VolumeFsim {
  double median = 0.0;
  std::vector<SliceScore> slices;
  /// Slices dropped for an empty mask or a flagged score.
  int skipped = 0;
};

/**
 * Median FSIM over every slice along x, y and z. Scalar volumes are mapped to 0..255 by
 * the reference's masked 1st..99th percentile range (same affine map for both volumes);
 * three-channel volumes in [0, 1] are scaled by 255 and scored with FSIMc.
 * Voxels outside the mask are zeroed. InputError when no slice survives.
 */
VolumeFsim fsim_volume_median(const Volume& ref, const Volume& test, const Mask& mask = {});

}  // namespace hashodf
