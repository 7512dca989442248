#pragma once

#include <span>

#include "dexsynth/mesh.hpp"

namespace dexsynth {

/// All-pairs shortest paths over the edge graph with Euclidean edge weights.
/// Throws Error listing the component count when the mesh is disconnected.
MatX geodesic_matrix(const TriMesh& mesh);

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
};

/// Exact minimum enclosing sphere (move-to-front Welzl). Throws on empty input.
Sphere min_bounding_sphere(const Points& points);

struct ClosestPoint {
  double distance = 0.0;
  Vec3 point = Vec3::Zero();
  int face = -1;
};

/// Closest point on triangle (a, b, c) to p, covering vertex/edge/face regions.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Exact closest point over all triangles.
ClosestPoint point_to_mesh(const Vec3& p, const TriMesh& mesh);

/// Generalized winding number (solid angle sum / 4 pi). ~1 inside a closed
/// outward-oriented surface, ~0 outside.
double winding_number(const Vec3& p, const TriMesh& mesh);

inline bool is_inside(const Vec3& p, const TriMesh& mesh) { return winding_number(p, mesh) > 0.5; }

/// Unsigned distance with sign from the winding number (negative inside).
/// Warns once per call site when the mesh is not watertight.
double signed_distance(const Vec3& p, const TriMesh& mesh);

/// Volume (cm^3) of voxel centres lying inside both meshes. The grid is
/// aligned to the joint bounding box of the two meshes.
double intersection_volume(const TriMesh& a, const TriMesh& b, double voxel = 0.005);

/// Signed distance sampled on a regular grid and trilinearly interpolated.
/// Queries outside the grid fall back to the exact mesh distance.
class SdfGrid {
 public:
  SdfGrid() = default;
  SdfGrid(const TriMesh& mesh, double spacing, double padding);

  bool empty() const { return values_.empty(); }
  double spacing() const { return spacing_; }

  /// Value and gradient (zero gradient outside the grid).
  double evaluate(const Vec3& p, Vec3* gradient = nullptr) const;

 private:
  TriMesh mesh_;
  Vec3 origin_ = Vec3::Zero();
  double spacing_ = 0.0;
  Eigen::Vector3i dims_ = Eigen::Vector3i::Zero();
  std::vector<double> values_;

  double at(int i, int j, int k) const { return values_[(static_cast<size_t>(i) * dims_[1] + j) * dims_[2] + k]; }
};

}  // namespace dexsynth
