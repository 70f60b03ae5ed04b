#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace hashodf {

/**
 * Dense 3-D or 4-D volume in NIfTI storage order: x fastest, then y, z and the channel axis.
 * A scalar map has one channel, an RGB map three, a coefficient volume K.
 */
struct Volume {
  std::array<int, 4> dims{1, 1, 1, 1};
  std::array<double, 3> voxel_size{1.0, 1.0, 1.0};
  Eigen::Matrix4d affine = Eigen::Matrix4d::Identity();
  /// Free-form tag carried in the NIfTI intent_name field (16 bytes max on disk).
  std::string intent_name;
  std::vector<double> data;

  Volume() = default;
  explicit Volume(std::array<int, 4> d) : dims(d), data(static_cast<std::size_t>(d[0]) * d[1] * d[2] * d[3], 0.0) {}

  int nx() const { return dims[0]; }
  int ny() const { return dims[1]; }
  int nz() const { return dims[2]; }
  int channels() const { return dims[3]; }
  std::size_t voxels() const { return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]; }

  std::size_t voxel_index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) + static_cast<std::size_t>(dims[0]) * (y + static_cast<std::size_t>(dims[1]) * z);
  }
  double& at(std::size_t voxel, int c = 0) { return data[voxel + voxels() * static_cast<std::size_t>(c)]; }
  double at(std::size_t voxel, int c = 0) const { return data[voxel + voxels() * static_cast<std::size_t>(c)]; }
  double& at(int x, int y, int z, int c = 0) { return at(voxel_index(x, y, z), c); }
  double at(int x, int y, int z, int c = 0) const { return at(voxel_index(x, y, z), c); }

  /// Same geometry with a different channel count, zero filled.
  Volume like(int channels) const {
    Volume v({dims[0], dims[1], dims[2], channels});
    v.voxel_size = voxel_size;
    v.affine = affine;
    return v;
  }
  bool same_grid(const Volume& o) const { return dims[0] == o.dims[0] && dims[1] == o.dims[1] && dims[2] == o.dims[2]; }
};

/// One byte per voxel, nonzero = inside.
using Mask = std::vector<std::uint8_t>;

/// Normalised training coordinate of voxel (x, y, z): i / (n - 1) per axis, 0 on singleton axes.
Eigen::Vector3d voxel_coordinate(const std::array<int, 4>& dims, int x, int y, int z);

/// Coordinates (3 x N) of the masked voxels, in storage order, plus their voxel indices.
Eigen::Matrix3Xd masked_coordinates(const std::array<int, 4>& dims, const Mask& mask, std::vector<std::size_t>* voxels = nullptr);

}  // namespace hashodf
