#pragma once

#include <Eigen/Dense>

#include <array>
#include <vector>

namespace hashodf {

/// Triangulated unit sphere with per-vertex 1-ring adjacency.
struct SphereMesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<std::vector<int>> neighbors;
  /// antipode[i] is the vertex at -vertices[i], or -1 if absent.
  std::vector<int> antipode;

  /// Barycentric-dual area of each vertex; sums to 4*pi.
  std::vector<double> vertex_areas() const;
  bool antipodally_symmetric() const;
};

/// Geodesic icosphere: 10 * 4^subdivisions + 2 vertices (642 at 3, 2562 at 4).
SphereMesh icosphere(int subdivisions);

/// Deterministic quasi-uniform directions on the upper hemisphere (Fibonacci spiral).
std::vector<Eigen::Vector3d> hemisphere_directions(int count);

/// Angle in degrees between two axes (sign-insensitive).
double axis_angle_deg(const Eigen::Vector3d& a, const Eigen::Vector3d& b);

}  // namespace hashodf
