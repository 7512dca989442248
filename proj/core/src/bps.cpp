#include "dexsynth/bps.hpp"

#include <limits>
#include <random>

namespace dexsynth {

BasisPointSet BasisPointSet::sample(int count, double radius, std::uint64_t seed) {
  if (count <= 0 || radius <= 0.0) throw Error("BasisPointSet: count and radius must be positive");
  BasisPointSet bps;
  bps.radius = radius;
  bps.seed = seed;
  bps.offsets.resize(count, 3);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int q = 0; q < count;) {
    const Vec3 p(unit(rng), unit(rng), unit(rng));
    if (p.squaredNorm() > 1.0) continue;
    bps.offsets.row(q++) = radius * p.transpose();
  }
  return bps;
}

Points BpsEncoding::surface_points(const BasisPointSet& basis, const Vec3& center) const {
  Points out = basis.offsets + directions;
  out.rowwise() += center.transpose();
  return out;
}

BpsEncoding bps_encode(const Points& surface_points, const BasisPointSet& basis, const Vec3& center) {
  if (surface_points.rows() == 0) throw Error("bps_encode: no surface points");
  BpsEncoding enc;
  const int n = basis.size();
  enc.directions.resize(n, 3);
  enc.nearest_index.assign(n, 0);
  for (int q = 0; q < n; ++q) {
    const Eigen::RowVector3d b = basis.offsets.row(q) + center.transpose();
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (int i = 0; i < surface_points.rows(); ++i) {
      const double d = (surface_points.row(i) - b).squaredNorm();
      if (d < best) {
        best = d;
        arg = i;
      }
    }
    enc.nearest_index[q] = arg;
    enc.directions.row(q) = surface_points.row(arg) - b;
  }
  return enc;
}

}  // namespace dexsynth
