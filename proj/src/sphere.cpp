#include "hashodf/sphere.hpp"

#include "hashodf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

namespace hashodf {

SphereMesh icosphere(int subdivisions) {
  if (subdivisions < 0 || subdivisions > 8) throw ConfigError("icosphere subdivisions must be in [0, 8]");
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::Vector3d> v = {
      {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
      {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1},
  };
  for (auto& p : v) p.normalize();
  std::vector<std::array<int, 3>> f = {
      {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
      {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1},
  };

  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const int id = static_cast<int>(v.size()) - 1;
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(f.size() * 4);
    for (const auto& tri : f) {
      const int a = mid(tri[0], tri[1]), b = mid(tri[1], tri[2]), c = mid(tri[2], tri[0]);
      next.push_back({tri[0], a, c});
      next.push_back({tri[1], b, a});
      next.push_back({tri[2], c, b});
      next.push_back({a, b, c});
    }
    f = std::move(next);
  }

  SphereMesh mesh;
  mesh.vertices = std::move(v);
  mesh.faces = std::move(f);
  const std::size_t n = mesh.vertices.size();
  std::vector<std::set<int>> ring(n);
  for (const auto& tri : mesh.faces) {
    for (int e = 0; e < 3; ++e) {
      ring[tri[e]].insert(tri[(e + 1) % 3]);
      ring[tri[e]].insert(tri[(e + 2) % 3]);
    }
  }
  mesh.neighbors.resize(n);
  for (std::size_t i = 0; i < n; ++i) mesh.neighbors[i].assign(ring[i].begin(), ring[i].end());

  // Antipodes by nearest match; the icosahedron is centrally symmetric and midpoint
  // subdivision preserves that, so each match is exact up to rounding.
  mesh.antipode.assign(n, -1);
  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  auto key = [&](int i) { return std::make_tuple(mesh.vertices[i].z(), mesh.vertices[i].y(), mesh.vertices[i].x()); };
  std::sort(order.begin(), order.end(), [&](int a, int b) { return key(a) < key(b); });
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d target = -mesh.vertices[i];
    auto it = std::lower_bound(order.begin(), order.end(), target.z() - 1e-9,
                               [&](int idx, double z) { return mesh.vertices[idx].z() < z; });
    for (; it != order.end() && mesh.vertices[*it].z() <= target.z() + 1e-9; ++it) {
      if ((mesh.vertices[*it] - target).norm() < 1e-9) {
        mesh.antipode[i] = *it;
        break;
      }
    }
  }
  return mesh;
}

std::vector<double> SphereMesh::vertex_areas() const {
  std::vector<double> area(vertices.size(), 0.0);
  for (const auto& tri : faces) {
    const Eigen::Vector3d& a = vertices[tri[0]];
    const Eigen::Vector3d& b = vertices[tri[1]];
    const Eigen::Vector3d& c = vertices[tri[2]];
    // Spherical excess via the Van Oosterom-Strackee formula.
    const double num = a.dot(b.cross(c));
    const double den = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    const double omega = 2.0 * std::atan2(std::abs(num), den);
    for (int e = 0; e < 3; ++e) area[tri[e]] += omega / 3.0;
  }
  return area;
}

bool SphereMesh::antipodally_symmetric() const {
  return std::all_of(antipode.begin(), antipode.end(), [](int a) { return a >= 0; });
}

std::vector<Eigen::Vector3d> hemisphere_directions(int count) {
  if (count < 1) throw ConfigError("direction count must be >= 1");
  std::vector<Eigen::Vector3d> dirs;
  dirs.reserve(static_cast<std::size_t>(count));
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < count; ++i) {
    const double z = 1.0 - (i + 0.5) / count;  // (0, 1]
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    dirs.emplace_back(Eigen::Vector3d(r * std::cos(phi), r * std::sin(phi), z).normalized());
  }
  return dirs;
}

double axis_angle_deg(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const double c = std::min(1.0, std::abs(a.normalized().dot(b.normalized())));
  return std::acos(c) * 180.0 / std::numbers::pi;
}

}  // namespace hashodf
