#pragma once

#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "dexsynth/common.hpp"

namespace dexsynth {

struct TriMesh {
  Points vertices;        // N x 3, meters
  Eigen::MatrixX3i faces; // F x 3, counter-clockwise seen from outside

  int vertex_count() const { return static_cast<int>(vertices.rows()); }
  int face_count() const { return static_cast<int>(faces.rows()); }
  bool empty() const { return vertices.rows() == 0 || faces.rows() == 0; }

  /// Every undirected edge is used by exactly two faces with opposite
  /// orientations.
  bool is_watertight() const;

  /// Throws Error on out-of-range face indices.
  void validate() const;

  /// Undirected unique edges as (a, b) with a < b.
  std::vector<std::pair<int, int>> edges() const;

  /// Signed enclosed volume (positive for outward-facing winding).
  double signed_volume() const;

  TriMesh transformed(const Mat3& rotation, const Vec3& translation) const;
};

/// Concatenate vertex and face lists; face indices of `b` are offset.
TriMesh merge(const TriMesh& a, const TriMesh& b);

/// Subdivided icosahedron projected to a sphere.
TriMesh make_icosphere(double radius, int subdivisions);

/// Axis-aligned box centred at the origin, each face a regular grid with
/// at most `spacing` between neighbouring vertices.
TriMesh make_box(const Vec3& half_extents, double spacing);

void write_obj(const std::filesystem::path& path, const TriMesh& mesh,
               const std::optional<Points>& vertex_colors = std::nullopt);
TriMesh read_obj(const std::filesystem::path& path);

}  // namespace dexsynth
