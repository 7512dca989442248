#include "dexsynth/toy_hand.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

namespace dexsynth {

namespace {

constexpr int kPalmCellsX = 5;
constexpr int kPalmCellsY = 4;
constexpr int kPalmCellsZ = 1;
constexpr int kSegmentsPerFinger = 5;
constexpr int kFingers = 3;

struct Attachment {
  int cell_x;
  int side;  // +1 => y = +half_length, -1 => y = -half_length
};
constexpr std::array<Attachment, kFingers> kAttachments = {{{0, +1}, {4, +1}, {2, -1}}};

struct Builder {
  std::vector<Vec3> verts;
  std::vector<std::array<int, 3>> tris;

  int add(const Vec3& p) {
    verts.push_back(p);
    return static_cast<int>(verts.size()) - 1;
  }

  // Emits a quad as two triangles whose normals agree with `outward`.
  void quad(const std::array<int, 4>& id, const Vec3& outward) {
    const Vec3 n = (verts[id[1]] - verts[id[0]]).cross(verts[id[2]] - verts[id[0]]);
    if (n.dot(outward) >= 0.0) {
      tris.push_back({id[0], id[1], id[2]});
      tris.push_back({id[0], id[2], id[3]});
    } else {
      tris.push_back({id[0], id[2], id[1]});
      tris.push_back({id[0], id[3], id[2]});
    }
  }
};

}  // namespace

HandRig make_toy_hand(const ToyHandOptions& options) {
  const double a = options.palm_half_width;
  const double b = options.palm_half_length;
  const double c = options.palm_thickness;
  const std::array<int, 3> cells = {kPalmCellsX, kPalmCellsY, kPalmCellsZ};
  const Vec3 lo(-a, -b, 0.0);
  const Vec3 size(2 * a, 2 * b, c);

  Builder mesh;
  std::map<std::array<int, 3>, int> lattice;
  auto lattice_vertex = [&](const std::array<int, 3>& idx) {
    auto it = lattice.find(idx);
    if (it != lattice.end()) return it->second;
    Vec3 p;
    for (int k = 0; k < 3; ++k) p[k] = lo[k] + size[k] * idx[k] / cells[k];
    const int id = mesh.add(p);
    lattice.emplace(idx, id);
    return id;
  };

  // Palm surface, leaving holes where fingers attach. Hole corners are kept
  // so the finger tubes can share them.
  std::array<std::array<int, 4>, kFingers> hole_corners{};
  for (int axis = 0; axis < 3; ++axis) {
    const int u = (axis + 1) % 3;
    const int v = (axis + 2) % 3;
    for (int side = 0; side < 2; ++side) {
      Vec3 outward = Vec3::Zero();
      outward[axis] = side == 0 ? -1.0 : 1.0;
      for (int i = 0; i < cells[u]; ++i) {
        for (int j = 0; j < cells[v]; ++j) {
          std::array<int, 4> id;
          const int ci[4] = {i, i + 1, i + 1, i};
          const int cj[4] = {j, j, j + 1, j + 1};
          std::array<int, 3> cell_lo{};
          for (int q = 0; q < 4; ++q) {
            std::array<int, 3> idx{};
            idx[axis] = side == 0 ? 0 : cells[axis];
            idx[u] = ci[q];
            idx[v] = cj[q];
            id[q] = lattice_vertex(idx);
            if (q == 0) cell_lo = idx;
          }
          int hole = -1;
          if (axis == 1) {
            for (int f = 0; f < kFingers; ++f) {
              const bool side_match = (kAttachments[f].side > 0) == (side == 1);
              if (side_match && cell_lo[0] == kAttachments[f].cell_x && cell_lo[2] == 0) hole = f;
            }
          }
          if (hole >= 0) {
            hole_corners[hole] = id;
          } else {
            mesh.quad(id, outward);
          }
        }
      }
    }
  }
  const int palm_vertices = static_cast<int>(mesh.verts.size());

  // Distribute rings over the fingers; thumb gets the remainder deficit.
  const int min_rings = kSegmentsPerFinger;
  const int total_rings = std::max(kFingers * min_rings, (options.target_vertices - palm_vertices) / 4);
  std::array<int, kFingers> rings{};
  for (int f = 0; f < kFingers; ++f) rings[f] = total_rings / kFingers;
  for (int f = 0; f < total_rings % kFingers; ++f) rings[f] += 1;

  const double seg = options.segment_length;
  const double finger_length = seg * kSegmentsPerFinger;
  const double blend = 0.3 * seg;

  std::vector<int> parent(kJointCount, 0);
  parent[0] = -1;
  std::vector<Vec3> joints(kJointCount, Vec3::Zero());
  struct VertexSkin {
    int vertex;
    int finger;
    double s;
  };
  std::vector<VertexSkin> finger_skin;

  for (int f = 0; f < kFingers; ++f) {
    const auto& att = kAttachments[f];
    const Vec3 dir(0.0, att.side, 0.0);
    Vec3 base = Vec3::Zero();
    for (int q = 0; q < 4; ++q) base += mesh.verts[hole_corners[f][q]];
    base /= 4.0;
    for (int k = 0; k < kSegmentsPerFinger; ++k) {
      const int j = 1 + kSegmentsPerFinger * f + k;
      parent[j] = k == 0 ? 0 : j - 1;
      joints[j] = base + dir * (seg * k);
    }
    // Corners in cyclic order around the tube axis.
    std::array<int, 4> prev = hole_corners[f];
    for (int r = 1; r <= rings[f]; ++r) {
      const double s = finger_length * r / rings[f];
      std::array<int, 4> ring;
      for (int q = 0; q < 4; ++q) {
        ring[q] = mesh.add(mesh.verts[hole_corners[f][q]] + dir * s);
        finger_skin.push_back({ring[q], f, s});
      }
      const Vec3 axis_point = base + dir * s;
      for (int q = 0; q < 4; ++q) {
        const int q1 = (q + 1) % 4;
        const std::array<int, 4> id = {prev[q], prev[q1], ring[q1], ring[q]};
        Vec3 centre = Vec3::Zero();
        for (int e : id) centre += mesh.verts[e];
        centre /= 4.0;
        Vec3 outward = centre - axis_point;
        outward -= outward.dot(dir) * dir;
        mesh.quad(id, outward);
      }
      prev = ring;
    }
    mesh.quad(prev, dir);
  }

  HandRig rig;
  const int nv = static_cast<int>(mesh.verts.size());
  rig.template_vertices.resize(nv, 3);
  for (int i = 0; i < nv; ++i) rig.template_vertices.row(i) = mesh.verts[i].transpose();
  rig.faces.resize(static_cast<int>(mesh.tris.size()), 3);
  for (size_t i = 0; i < mesh.tris.size(); ++i) {
    rig.faces.row(i) << mesh.tris[i][0], mesh.tris[i][1], mesh.tris[i][2];
  }
  rig.parent_index = parent;
  rig.joint_rest_positions.resize(kJointCount, 3);
  for (int j = 0; j < kJointCount; ++j) rig.joint_rest_positions.row(j) = joints[j].transpose();
  rig.palm_normal = Vec3(0.0, 0.0, -1.0);

  rig.skin_weights = MatX::Zero(nv, kJointCount);
  for (int v = 0; v < palm_vertices; ++v) rig.skin_weights(v, 0) = 1.0;
  for (const auto& sk : finger_skin) {
    const int first = 1 + kSegmentsPerFinger * sk.finger;
    // Segment k is driven by finger joint k; blend across each joint.
    const int k = std::min(kSegmentsPerFinger - 1, static_cast<int>(std::floor(sk.s / seg)));
    auto joint_of = [&](int segment) { return segment < 0 ? 0 : first + segment; };
    const double into = sk.s - seg * k;         // distance past joint k
    const double before = seg * (k + 1) - sk.s;  // distance to joint k+1
    if (into < blend) {
      const double w = 0.5 + 0.5 * into / blend;
      rig.skin_weights(sk.vertex, joint_of(k)) += w;
      rig.skin_weights(sk.vertex, joint_of(k - 1)) += 1.0 - w;
    } else if (k + 1 < kSegmentsPerFinger && before < blend) {
      const double w = 0.5 + 0.5 * before / blend;
      rig.skin_weights(sk.vertex, joint_of(k)) += w;
      rig.skin_weights(sk.vertex, joint_of(k + 1)) += 1.0 - w;
    } else {
      rig.skin_weights(sk.vertex, joint_of(k)) = 1.0;
    }
  }
  rig.validate();
  return rig;
}

TriMesh rig_mesh(const HandRig& rig, const Points& vertices) {
  TriMesh m;
  m.vertices = vertices;
  m.faces = rig.faces;
  return m;
}

std::vector<FingerChain> finger_chains(const HandRig& rig) {
  std::vector<FingerChain> chains;
  const int nj = rig.joint_count();
  for (int start = 1; start < nj; ++start) {
    if (rig.parent_index[start] != 0) continue;
    FingerChain chain;
    int j = start;
    chain.joints.push_back(j);
    for (bool extended = true; extended;) {
      extended = false;
      for (int k = j + 1; k < nj; ++k) {
        if (rig.parent_index[k] == j) {
          chain.joints.push_back(k);
          j = k;
          extended = true;
          break;
        }
      }
    }
    const Vec3 first = rig.joint_rest_positions.row(chain.joints.front()).transpose();
    const Vec3 last = rig.joint_rest_positions.row(chain.joints.back()).transpose();
    chain.direction = (last - first).normalized();
    chain.curl_axis = chain.direction.cross(rig.palm_normal).normalized();
    for (int v = 0; v < rig.vertex_count(); ++v) {
      for (int cj : chain.joints) {
        if (rig.skin_weights(v, cj) > 0.0) {
          chain.vertices.push_back(v);
          break;
        }
      }
    }
    chains.push_back(std::move(chain));
  }
  return chains;
}

}  // namespace dexsynth
