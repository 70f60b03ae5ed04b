#pragma once

#include "hashodf/volume.hpp"

#include <filesystem>

namespace hashodf {

/// NIfTI-1 datatype codes handled here.
enum class NiftiType : short { Uint8 = 2, Int16 = 4, Float32 = 16, Float64 = 64 };

struct NiftiImage {
  Volume volume;
  NiftiType datatype = NiftiType::Float32;
  /// 2 for sform, 1 for qform, 0 when neither was set and the identity was used.
  int affine_source = 0;
};

struct NiftiHeader {
  std::array<int, 4> dims{1, 1, 1, 1};
  NiftiType datatype = NiftiType::Float32;
  std::array<double, 3> voxel_size{1.0, 1.0, 1.0};
  Eigen::Matrix4d affine = Eigen::Matrix4d::Identity();
  int affine_source = 0;
  std::string intent_name;
};

/// Parses and validates the 348-byte header only; no image data is read.
NiftiHeader read_nifti_header(const std::filesystem::path& path);

/**
 * Reads single-file (.nii, "n+1") or header/image pair (.hdr/.img, "ni1") NIfTI-1,
 * gzip-compressed or not, either byte order. scl_slope/scl_inter are applied when set.
 * FormatError names the header field that is wrong.
 */
NiftiImage load_nifti(const std::filesystem::path& path);

/// Writes single-file NIfTI-1 (gzip when the name ends in .gz) with the affine as sform and qform code 0.
void save_nifti(const Volume& volume, const std::filesystem::path& path, NiftiType datatype = NiftiType::Float32);

}  // namespace hashodf
