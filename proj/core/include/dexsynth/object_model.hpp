#pragma once

#include <utility>
#include <vector>

#include "dexsynth/geometry.hpp"

namespace dexsynth {

/// Rigid object with at most one revolute part. Vertices flagged in
/// `moving` rotate by the articulation angle about (hinge_axis, hinge_pivot);
/// every face must lie entirely on one side of the mask.
struct ArticulatedObject {
  TriMesh mesh;               // rest pose, object frame
  std::vector<char> moving;   // per-vertex part mask; empty for rigid objects
  Vec3 hinge_axis = Vec3::UnitX();
  Vec3 hinge_pivot = Vec3::Zero();

  bool articulated() const { return !moving.empty(); }
  void validate() const;

  /// Rigid transform of the moving part at `angle` (identity for rigid objects).
  std::pair<Mat3, Vec3> part_transform(double angle) const;
  Points posed_vertices(double angle) const;
  TriMesh posed(double angle) const;

  /// Closed sub-meshes: index 0 static part, index 1 moving part (if any).
  std::vector<TriMesh> parts() const;
};

/// Signed distance to an articulated object, as the minimum over its parts
/// (each part sampled once on a grid in its own rest frame).
class ObjectSdf {
 public:
  ObjectSdf() = default;
  ObjectSdf(const ArticulatedObject& object, double spacing = 0.003, double padding = 0.02);

  /// Points farther than the padding from every part report +padding and a
  /// zero gradient.
  double evaluate(const Vec3& p, double angle, Vec3* gradient = nullptr) const;
  bool empty() const { return grids_.empty(); }

 private:
  struct Part {
    SdfGrid grid;
    Vec3 lo;
    Vec3 hi;
    bool moving = false;
  };
  ArticulatedObject object_;
  std::vector<Part> grids_;
  double padding_ = 0.0;
};

}  // namespace dexsynth
