#include "dexsynth/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <list>
#include <numeric>
#include <queue>
#include <random>

namespace dexsynth {

// ---------------------------------------------------------------------------
// Geodesics

MatX geodesic_matrix(const TriMesh& mesh) {
  mesh.validate();
  const int n = mesh.vertex_count();
  std::vector<std::vector<std::pair<int, double>>> adj(n);
  for (const auto& [a, b] : mesh.edges()) {
    const double w = (mesh.vertices.row(a) - mesh.vertices.row(b)).norm();
    adj[a].emplace_back(b, w);
    adj[b].emplace_back(a, w);
  }

  constexpr double kInf = std::numeric_limits<double>::infinity();
  MatX dist = MatX::Constant(n, n, kInf);
  using Item = std::pair<double, int>;
  for (int src = 0; src < n; ++src) {
    auto row = dist.row(src);
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    row[src] = 0.0;
    queue.emplace(0.0, src);
    while (!queue.empty()) {
      const auto [d, u] = queue.top();
      queue.pop();
      if (d > row[u]) continue;
      for (const auto& [v, w] : adj[u]) {
        if (d + w < row[v]) {
          row[v] = d + w;
          queue.emplace(row[v], v);
        }
      }
    }
  }

  if (!std::isfinite(dist.maxCoeff())) {
    std::vector<int> label(n, -1);
    int components = 0;
    for (int s = 0; s < n; ++s) {
      if (label[s] >= 0) continue;
      for (int v = 0; v < n; ++v) {
        if (std::isfinite(dist(s, v))) label[v] = components;
      }
      ++components;
    }
    std::string msg = "geodesic_matrix: mesh is disconnected (" + std::to_string(components) +
                      " components; first vertex of each:";
    for (int c = 0; c < components; ++c) {
      msg += ' ' + std::to_string(std::find(label.begin(), label.end(), c) - label.begin());
    }
    throw Error(msg + ")");
  }
  // Dijkstra from both ends gives the same path length up to rounding.
  return 0.5 * (dist + dist.transpose());
}

// ---------------------------------------------------------------------------
// Minimum enclosing sphere

namespace {

Sphere sphere_from_two(const Vec3& a, const Vec3& b) { return {0.5 * (a + b), 0.5 * (a - b).norm()}; }

bool contains(const Sphere& s, const Vec3& p, double slack) {
  return (p - s.center).norm() <= s.radius + slack;
}

Sphere sphere_from_three(const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 n = ab.cross(ac);
  const double nn = n.squaredNorm();
  if (nn < 1e-24 * std::max(1.0, ab.squaredNorm() * ac.squaredNorm())) {
    // Collinear: the farthest pair spans the others.
    Sphere best = sphere_from_two(a, b);
    for (const Sphere& s : {sphere_from_two(a, c), sphere_from_two(b, c)}) {
      if (s.radius > best.radius) best = s;
    }
    return best;
  }
  const Vec3 offset = (ac.squaredNorm() * n.cross(ab) + ab.squaredNorm() * ac.cross(n)) / (2.0 * nn);
  return {a + offset, offset.norm()};
}

Sphere sphere_from_four(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  Mat3 m;
  m.row(0) = 2.0 * (b - a).transpose();
  m.row(1) = 2.0 * (c - a).transpose();
  m.row(2) = 2.0 * (d - a).transpose();
  const Vec3 rhs(b.squaredNorm() - a.squaredNorm(), c.squaredNorm() - a.squaredNorm(),
                 d.squaredNorm() - a.squaredNorm());
  const double scale = std::max({(b - a).norm(), (c - a).norm(), (d - a).norm(), 1e-300});
  if (std::abs(m.determinant()) < 1e-14 * scale * scale * scale) {
    // Coplanar: smallest circumscribed sphere of a 3-subset holding the rest.
    const std::array<Vec3, 4> p = {a, b, c, d};
    Sphere best{Vec3::Zero(), std::numeric_limits<double>::infinity()};
    for (int skip = 0; skip < 4; ++skip) {
      std::array<Vec3, 3> q;
      int k = 0;
      for (int i = 0; i < 4; ++i) {
        if (i != skip) q[k++] = p[i];
      }
      const Sphere s = sphere_from_three(q[0], q[1], q[2]);
      if (contains(s, p[skip], 1e-12 * scale) && s.radius < best.radius) best = s;
    }
    return best;
  }
  const Vec3 center = m.partialPivLu().solve(rhs);
  return {center, (center - a).norm()};
}

Sphere sphere_from_boundary(const std::vector<Vec3>& boundary) {
  switch (boundary.size()) {
    case 0:
      return {Vec3::Zero(), -1.0};
    case 1:
      return {boundary[0], 0.0};
    case 2:
      return sphere_from_two(boundary[0], boundary[1]);
    case 3:
      return sphere_from_three(boundary[0], boundary[1], boundary[2]);
    default:
      return sphere_from_four(boundary[0], boundary[1], boundary[2], boundary[3]);
  }
}

class MoveToFrontWelzl {
 public:
  MoveToFrontWelzl(std::list<Vec3> points, double slack) : points_(std::move(points)), slack_(slack) {}

  Sphere run() {
    std::vector<Vec3> boundary;
    solve(points_.end(), boundary);
    return best_;
  }

 private:
  void solve(std::list<Vec3>::iterator end, std::vector<Vec3>& boundary) {
    best_ = sphere_from_boundary(boundary);
    if (boundary.size() == 4) return;
    for (auto it = points_.begin(); it != end;) {
      auto next = std::next(it);
      if (best_.radius < 0.0 || !contains(best_, *it, slack_)) {
        boundary.push_back(*it);
        solve(it, boundary);
        boundary.pop_back();
        points_.splice(points_.begin(), points_, it);
      }
      it = next;
    }
  }

  std::list<Vec3> points_;
  double slack_;
  Sphere best_;
};

}  // namespace

Sphere min_bounding_sphere(const Points& points) {
  if (points.rows() == 0) throw Error("min_bounding_sphere: empty point set");
  std::vector<int> order(points.rows());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(0x5eed);
  std::shuffle(order.begin(), order.end(), rng);
  std::list<Vec3> pts;
  for (int i : order) pts.push_back(points.row(i).transpose());
  const double extent = (points.colwise().maxCoeff() - points.colwise().minCoeff()).norm();
  Sphere s = MoveToFrontWelzl(std::move(pts), 1e-13 * std::max(extent, 1e-300)).run();
  // Absorb rounding so the containment post-condition holds exactly.
  double worst = 0.0;
  for (int i = 0; i < points.rows(); ++i) {
    worst = std::max(worst, (points.row(i).transpose() - s.center).norm());
  }
  s.radius = std::max(s.radius, worst);
  return s;
}

// ---------------------------------------------------------------------------
// Point queries

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + ab * (d1 / (d1 - d3));

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + ac * (d2 / (d2 - d6));

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
  }
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

ClosestPoint point_to_mesh(const Vec3& p, const TriMesh& mesh) {
  if (mesh.empty()) throw Error("point_to_mesh: empty mesh");
  ClosestPoint best;
  best.distance = std::numeric_limits<double>::infinity();
  for (int f = 0; f < mesh.face_count(); ++f) {
    const Vec3 q = closest_point_on_triangle(p, mesh.vertices.row(mesh.faces(f, 0)),
                                             mesh.vertices.row(mesh.faces(f, 1)),
                                             mesh.vertices.row(mesh.faces(f, 2)));
    const double d = (q - p).norm();
    if (d < best.distance) best = {d, q, f};
  }
  return best;
}

double winding_number(const Vec3& p, const TriMesh& mesh) {
  double total = 0.0;
  for (int f = 0; f < mesh.face_count(); ++f) {
    const Vec3 a = mesh.vertices.row(mesh.faces(f, 0)).transpose() - p;
    const Vec3 b = mesh.vertices.row(mesh.faces(f, 1)).transpose() - p;
    const Vec3 c = mesh.vertices.row(mesh.faces(f, 2)).transpose() - p;
    const double la = a.norm();
    const double lb = b.norm();
    const double lc = c.norm();
    const double det = a.dot(b.cross(c));
    const double denom = la * lb * lc + a.dot(b) * lc + b.dot(c) * la + c.dot(a) * lb;
    total += 2.0 * std::atan2(det, denom);
  }
  return total / (4.0 * M_PI);
}

double signed_distance(const Vec3& p, const TriMesh& mesh) {
  if (!mesh.is_watertight()) warn("signed_distance: mesh is not watertight; sign unreliable");
  const double d = point_to_mesh(p, mesh).distance;
  return winding_number(p, mesh) > 0.5 ? -d : d;
}

double intersection_volume(const TriMesh& a, const TriMesh& b, double voxel) {
  if (voxel <= 0.0) throw Error("intersection_volume: voxel size must be positive");
  if (a.empty() || b.empty()) return 0.0;
  if (!a.is_watertight() || !b.is_watertight()) {
    warn("intersection_volume: non-watertight input; inside test unreliable");
  }
  const Eigen::RowVector3d a_lo = a.vertices.colwise().minCoeff();
  const Eigen::RowVector3d a_hi = a.vertices.colwise().maxCoeff();
  const Eigen::RowVector3d b_lo = b.vertices.colwise().minCoeff();
  const Eigen::RowVector3d b_hi = b.vertices.colwise().maxCoeff();
  const Eigen::RowVector3d lo = a_lo.cwiseMin(b_lo);
  const Eigen::RowVector3d hi = a_hi.cwiseMax(b_hi);
  const Eigen::RowVector3d both_lo = a_lo.cwiseMax(b_lo);
  const Eigen::RowVector3d both_hi = a_hi.cwiseMin(b_hi);
  if ((both_lo.array() > both_hi.array()).any()) return 0.0;

  // Only voxels of the joint grid whose centres fall in both boxes can count.
  std::array<int, 3> first{}, last{};
  for (int k = 0; k < 3; ++k) {
    const int cells = std::max(1, static_cast<int>(std::ceil((hi[k] - lo[k]) / voxel)));
    first[k] = std::max(0, static_cast<int>(std::floor((both_lo[k] - lo[k]) / voxel - 0.5)));
    last[k] = std::min(cells - 1, static_cast<int>(std::ceil((both_hi[k] - lo[k]) / voxel - 0.5)));
  }
  long long count = 0;
  for (int i = first[0]; i <= last[0]; ++i) {
    for (int j = first[1]; j <= last[1]; ++j) {
      for (int k = first[2]; k <= last[2]; ++k) {
        const Vec3 c(lo[0] + (i + 0.5) * voxel, lo[1] + (j + 0.5) * voxel, lo[2] + (k + 0.5) * voxel);
        if ((c.transpose().array() < both_lo.array()).any() ||
            (c.transpose().array() > both_hi.array()).any()) {
          continue;
        }
        if (is_inside(c, a) && is_inside(c, b)) ++count;
      }
    }
  }
  return static_cast<double>(count) * voxel * voxel * voxel * 1e6;
}

// ---------------------------------------------------------------------------
// SdfGrid

SdfGrid::SdfGrid(const TriMesh& mesh, double spacing, double padding) : mesh_(mesh), spacing_(spacing) {
  if (spacing <= 0.0) throw Error("SdfGrid: spacing must be positive");
  if (!mesh.is_watertight()) warn("SdfGrid: mesh is not watertight; sign unreliable");
  const Vec3 lo = mesh.vertices.colwise().minCoeff().transpose().array() - padding;
  const Vec3 hi = mesh.vertices.colwise().maxCoeff().transpose().array() + padding;
  origin_ = lo;
  for (int k = 0; k < 3; ++k) dims_[k] = static_cast<int>(std::ceil((hi[k] - lo[k]) / spacing)) + 1;
  values_.resize(static_cast<size_t>(dims_[0]) * dims_[1] * dims_[2]);
  size_t idx = 0;
  for (int i = 0; i < dims_[0]; ++i) {
    for (int j = 0; j < dims_[1]; ++j) {
      for (int k = 0; k < dims_[2]; ++k) {
        const Vec3 p = origin_ + spacing * Vec3(i, j, k);
        const double d = point_to_mesh(p, mesh_).distance;
        values_[idx++] = winding_number(p, mesh_) > 0.5 ? -d : d;
      }
    }
  }
}

double SdfGrid::evaluate(const Vec3& p, Vec3* gradient) const {
  const Vec3 g = (p - origin_) / spacing_;
  const Eigen::Vector3i cell = g.array().floor().cast<int>();
  if ((cell.array() < 0).any() || (cell.array() >= dims_.array() - 1).any()) {
    const ClosestPoint cp = point_to_mesh(p, mesh_);
    const bool inside = winding_number(p, mesh_) > 0.5;
    if (gradient) {
      *gradient = cp.distance > 0.0 ? Vec3((p - cp.point) / cp.distance) : Vec3::Zero();
      if (inside) *gradient = -*gradient;
    }
    return inside ? -cp.distance : cp.distance;
  }
  const Vec3 t = g - cell.cast<double>();
  const int i = cell[0], j = cell[1], k = cell[2];
  const double c000 = at(i, j, k), c100 = at(i + 1, j, k);
  const double c010 = at(i, j + 1, k), c110 = at(i + 1, j + 1, k);
  const double c001 = at(i, j, k + 1), c101 = at(i + 1, j, k + 1);
  const double c011 = at(i, j + 1, k + 1), c111 = at(i + 1, j + 1, k + 1);
  const double c00 = c000 + t.x() * (c100 - c000);
  const double c10 = c010 + t.x() * (c110 - c010);
  const double c01 = c001 + t.x() * (c101 - c001);
  const double c11 = c011 + t.x() * (c111 - c011);
  const double c0 = c00 + t.y() * (c10 - c00);
  const double c1 = c01 + t.y() * (c11 - c01);
  if (gradient) {
    const double dx0 = (c100 - c000) + t.y() * ((c110 - c010) - (c100 - c000));
    const double dx1 = (c101 - c001) + t.y() * ((c111 - c011) - (c101 - c001));
    const double dy0 = c10 - c00;
    const double dy1 = c11 - c01;
    *gradient = Vec3(dx0 + t.z() * (dx1 - dx0), dy0 + t.z() * (dy1 - dy0), c1 - c0) / spacing_;
  }
  return c0 + t.z() * (c1 - c0);
}

}  // namespace dexsynth
