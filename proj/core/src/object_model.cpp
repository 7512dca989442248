#include "dexsynth/object_model.hpp"

#include <limits>

namespace dexsynth {

void ArticulatedObject::validate() const {
  mesh.validate();
  if (moving.empty()) return;
  if (static_cast<int>(moving.size()) != mesh.vertex_count()) throw Error("object: part mask length mismatch");
  if (hinge_axis.norm() < 1e-9) throw Error("object: hinge axis is zero");
  for (int f = 0; f < mesh.face_count(); ++f) {
    const char m = moving[mesh.faces(f, 0)];
    if (moving[mesh.faces(f, 1)] != m || moving[mesh.faces(f, 2)] != m) {
      throw Error("object: face " + std::to_string(f) + " straddles the part mask");
    }
  }
}

std::pair<Mat3, Vec3> ArticulatedObject::part_transform(double angle) const {
  if (!articulated()) return {Mat3::Identity(), Vec3::Zero()};
  const Mat3 r = Eigen::AngleAxisd(angle, hinge_axis.normalized()).toRotationMatrix();
  return {r, hinge_pivot - r * hinge_pivot};
}

Points ArticulatedObject::posed_vertices(double angle) const {
  Points v = mesh.vertices;
  if (!articulated() || angle == 0.0) return v;
  const auto [r, t] = part_transform(angle);
  for (int i = 0; i < v.rows(); ++i) {
    if (moving[i]) v.row(i) = (r * v.row(i).transpose() + t).transpose();
  }
  return v;
}

TriMesh ArticulatedObject::posed(double angle) const {
  TriMesh m = mesh;
  m.vertices = posed_vertices(angle);
  return m;
}

std::vector<TriMesh> ArticulatedObject::parts() const {
  if (!articulated()) return {mesh};
  std::vector<TriMesh> out;
  for (char part : {char(0), char(1)}) {
    std::vector<int> remap(mesh.vertex_count(), -1);
    std::vector<Vec3> verts;
    for (int i = 0; i < mesh.vertex_count(); ++i) {
      if ((moving[i] != 0) == (part != 0)) {
        remap[i] = static_cast<int>(verts.size());
        verts.push_back(mesh.vertices.row(i).transpose());
      }
    }
    std::vector<Eigen::Vector3i> faces;
    for (int f = 0; f < mesh.face_count(); ++f) {
      if ((moving[mesh.faces(f, 0)] != 0) == (part != 0)) {
        faces.emplace_back(remap[mesh.faces(f, 0)], remap[mesh.faces(f, 1)], remap[mesh.faces(f, 2)]);
      }
    }
    TriMesh m;
    m.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
    for (size_t i = 0; i < verts.size(); ++i) m.vertices.row(static_cast<Eigen::Index>(i)) = verts[i].transpose();
    m.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
    for (size_t i = 0; i < faces.size(); ++i) m.faces.row(static_cast<Eigen::Index>(i)) = faces[i].transpose();
    out.push_back(std::move(m));
  }
  return out;
}

ObjectSdf::ObjectSdf(const ArticulatedObject& object, double spacing, double padding)
    : object_(object), padding_(padding) {
  object.validate();
  const auto parts = object.parts();
  for (size_t i = 0; i < parts.size(); ++i) {
    Part p;
    p.grid = SdfGrid(parts[i], spacing, padding);
    p.lo = parts[i].vertices.colwise().minCoeff().transpose().array() - padding * 0.9;
    p.hi = parts[i].vertices.colwise().maxCoeff().transpose().array() + padding * 0.9;
    p.moving = i == 1;
    grids_.push_back(std::move(p));
  }
}

double ObjectSdf::evaluate(const Vec3& p, double angle, Vec3* gradient) const {
  double best = padding_;
  if (gradient) gradient->setZero();
  for (const auto& part : grids_) {
    Vec3 q = p;
    Mat3 r = Mat3::Identity();
    if (part.moving) {
      const auto tr = object_.part_transform(angle);
      r = tr.first;
      q = r.transpose() * (p - tr.second);
    }
    if ((q.array() < part.lo.array()).any() || (q.array() > part.hi.array()).any()) continue;
    Vec3 g;
    const double d = part.grid.evaluate(q, gradient ? &g : nullptr);
    if (d < best) {
      best = d;
      if (gradient) *gradient = r * g;
    }
  }
  return best;
}

}  // namespace dexsynth
