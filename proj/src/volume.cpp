#include "hashodf/volume.hpp"

#include "hashodf/errors.hpp"

namespace hashodf {

Eigen::Vector3d voxel_coordinate(const std::array<int, 4>& dims, int x, int y, int z) {
  const auto norm = [](int i, int n) { return n > 1 ? static_cast<double>(i) / (n - 1) : 0.0; };
  return {norm(x, dims[0]), norm(y, dims[1]), norm(z, dims[2])};
}

Eigen::Matrix3Xd masked_coordinates(const std::array<int, 4>& dims, const Mask& mask, std::vector<std::size_t>* voxels) {
  const std::size_t total = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  if (mask.size() != total) throw InputError("mask size does not match volume grid");
  std::vector<std::size_t> index;
  for (std::size_t v = 0; v < total; ++v) {
    if (mask[v]) index.push_back(v);
  }
  Eigen::Matrix3Xd coords(3, static_cast<Eigen::Index>(index.size()));
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto v = index[i];
    const int x = static_cast<int>(v % dims[0]);
    const int y = static_cast<int>((v / dims[0]) % dims[1]);
    const int z = static_cast<int>(v / (static_cast<std::size_t>(dims[0]) * dims[1]));
    coords.col(static_cast<Eigen::Index>(i)) = voxel_coordinate(dims, x, y, z);
  }
  if (voxels) *voxels = std::move(index);
  return coords;
}

}  // namespace hashodf
