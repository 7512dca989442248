#pragma once

#include <cstdint>
#include <vector>

#include "dexsynth/common.hpp"

namespace dexsynth {

/// Fixed random offsets inside a ball, shared by every object and frame.
struct BasisPointSet {
  Points offsets;  // n x 3
  double radius = 0.0;
  std::uint64_t seed = 0;

  int size() const { return static_cast<int>(offsets.rows()); }

  /// Rejection-sampled uniformly inside the ball; deterministic in `seed`.
  static BasisPointSet sample(int count, double radius, std::uint64_t seed = 42);
};

struct BpsEncoding {
  Points directions;               // n x 3: nearest point minus basis point
  std::vector<int> nearest_index;  // n

  /// Basis point plus direction, i.e. the selected surface point.
  Points surface_points(const BasisPointSet& basis, const Vec3& center) const;
};

/// Nearest-point encoding of a point set (ties broken by lowest index).
BpsEncoding bps_encode(const Points& surface_points, const BasisPointSet& basis, const Vec3& center);

}  // namespace dexsynth
