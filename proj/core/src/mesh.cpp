#include "dexsynth/mesh.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace dexsynth {

bool TriMesh::is_watertight() const {
  std::map<std::pair<int, int>, int> directed;
  for (int f = 0; f < face_count(); ++f) {
    for (int k = 0; k < 3; ++k) {
      const int a = faces(f, k);
      const int b = faces(f, (k + 1) % 3);
      if (++directed[{a, b}] > 1) return false;
    }
  }
  for (const auto& [edge, count] : directed) {
    if (directed.find({edge.second, edge.first}) == directed.end()) return false;
  }
  return !directed.empty();
}

void TriMesh::validate() const {
  if (faces.size() > 0 && (faces.minCoeff() < 0 || faces.maxCoeff() >= vertex_count())) {
    throw Error("mesh face index out of range");
  }
}

std::vector<std::pair<int, int>> TriMesh::edges() const {
  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<size_t>(face_count()) * 3);
  for (int f = 0; f < face_count(); ++f) {
    for (int k = 0; k < 3; ++k) {
      int a = faces(f, k);
      int b = faces(f, (k + 1) % 3);
      if (a > b) std::swap(a, b);
      out.emplace_back(a, b);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double TriMesh::signed_volume() const {
  double vol = 0.0;
  for (int f = 0; f < face_count(); ++f) {
    const Vec3 a = vertices.row(faces(f, 0));
    const Vec3 b = vertices.row(faces(f, 1));
    const Vec3 c = vertices.row(faces(f, 2));
    vol += a.dot(b.cross(c));
  }
  return vol / 6.0;
}

TriMesh TriMesh::transformed(const Mat3& rotation, const Vec3& translation) const {
  TriMesh out = *this;
  out.vertices = (vertices * rotation.transpose()).rowwise() + translation.transpose();
  return out;
}

TriMesh merge(const TriMesh& a, const TriMesh& b) {
  TriMesh out;
  out.vertices.resize(a.vertex_count() + b.vertex_count(), 3);
  out.vertices << a.vertices, b.vertices;
  out.faces.resize(a.face_count() + b.face_count(), 3);
  out.faces.topRows(a.face_count()) = a.faces;
  out.faces.bottomRows(b.face_count()) = b.faces.array() + a.vertex_count();
  return out;
}

TriMesh make_icosphere(double radius, int subdivisions) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> verts = {
      {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
      {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
      {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
  for (auto& v : verts) v.normalize();
  std::vector<std::array<int, 3>> tris = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};

  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const std::pair<int, int> key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      verts.push_back((verts[a] + verts[b]).normalized());
      const int idx = static_cast<int>(verts.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(tris.size() * 4);
    for (const auto& t : tris) {
      const int ab = mid(t[0], t[1]);
      const int bc = mid(t[1], t[2]);
      const int ca = mid(t[2], t[0]);
      next.push_back({t[0], ab, ca});
      next.push_back({t[1], bc, ab});
      next.push_back({t[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    tris = std::move(next);
  }

  TriMesh mesh;
  mesh.vertices.resize(static_cast<int>(verts.size()), 3);
  for (size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(i) = radius * verts[i].transpose();
  mesh.faces.resize(static_cast<int>(tris.size()), 3);
  for (size_t i = 0; i < tris.size(); ++i) {
    mesh.faces.row(i) << tris[i][0], tris[i][1], tris[i][2];
  }
  return mesh;
}

TriMesh make_box(const Vec3& half_extents, double spacing) {
  if ((half_extents.array() <= 0.0).any() || spacing <= 0.0) {
    throw Error("make_box: extents and spacing must be positive");
  }
  std::array<int, 3> cells;
  for (int k = 0; k < 3; ++k) {
    cells[k] = std::max(1, static_cast<int>(std::ceil(2.0 * half_extents[k] / spacing - 1e-9)));
  }
  std::map<std::array<int, 3>, int> index;
  std::vector<Vec3> verts;
  auto vertex = [&](std::array<int, 3> c) {
    auto it = index.find(c);
    if (it != index.end()) return it->second;
    Vec3 p;
    for (int k = 0; k < 3; ++k) {
      p[k] = -half_extents[k] + 2.0 * half_extents[k] * c[k] / cells[k];
    }
    verts.push_back(p);
    const int idx = static_cast<int>(verts.size()) - 1;
    index.emplace(c, idx);
    return idx;
  };

  std::vector<std::array<int, 3>> tris;
  for (int axis = 0; axis < 3; ++axis) {
    const int u = (axis + 1) % 3;
    const int v = (axis + 2) % 3;
    for (int side = 0; side < 2; ++side) {
      for (int i = 0; i < cells[u]; ++i) {
        for (int j = 0; j < cells[v]; ++j) {
          std::array<std::array<int, 3>, 4> corner;
          const int ci[4] = {i, i + 1, i + 1, i};
          const int cj[4] = {j, j, j + 1, j + 1};
          for (int q = 0; q < 4; ++q) {
            corner[q][axis] = side == 0 ? 0 : cells[axis];
            corner[q][u] = ci[q];
            corner[q][v] = cj[q];
          }
          int id[4];
          for (int q = 0; q < 4; ++q) id[q] = vertex(corner[q]);
          // (u, v, axis) is right-handed, so u->v order faces +axis.
          if (side == 1) {
            tris.push_back({id[0], id[1], id[2]});
            tris.push_back({id[0], id[2], id[3]});
          } else {
            tris.push_back({id[0], id[2], id[1]});
            tris.push_back({id[0], id[3], id[2]});
          }
        }
      }
    }
  }

  TriMesh mesh;
  mesh.vertices.resize(static_cast<int>(verts.size()), 3);
  for (size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(i) = verts[i].transpose();
  mesh.faces.resize(static_cast<int>(tris.size()), 3);
  for (size_t i = 0; i < tris.size(); ++i) mesh.faces.row(i) << tris[i][0], tris[i][1], tris[i][2];
  return mesh;
}

void write_obj(const std::filesystem::path& path, const TriMesh& mesh,
               const std::optional<Points>& vertex_colors) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write OBJ file " + path.string());
  out << std::setprecision(9);
  for (int i = 0; i < mesh.vertex_count(); ++i) {
    out << "v " << mesh.vertices(i, 0) << ' ' << mesh.vertices(i, 1) << ' ' << mesh.vertices(i, 2);
    if (vertex_colors) {
      out << ' ' << (*vertex_colors)(i, 0) << ' ' << (*vertex_colors)(i, 1) << ' '
          << (*vertex_colors)(i, 2);
    }
    out << '\n';
  }
  for (int f = 0; f < mesh.face_count(); ++f) {
    out << "f " << mesh.faces(f, 0) + 1 << ' ' << mesh.faces(f, 1) + 1 << ' '
        << mesh.faces(f, 2) + 1 << '\n';
  }
  if (!out) throw Error("failed while writing OBJ file " + path.string());
}

TriMesh read_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read OBJ file " + path.string());
  std::vector<Vec3> verts;
  std::vector<std::array<int, 3>> tris;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag)) continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ss >> p.x() >> p.y() >> p.z())) {
        throw Error(path.string() + ":" + std::to_string(line_no) + ": malformed vertex");
      }
      verts.push_back(p);
    } else if (tag == "f") {
      std::vector<int> poly;
      std::string tok;
      while (ss >> tok) {
        const int idx = std::stoi(tok.substr(0, tok.find('/')));
        poly.push_back(idx < 0 ? static_cast<int>(verts.size()) + idx : idx - 1);
      }
      if (poly.size() < 3) {
        throw Error(path.string() + ":" + std::to_string(line_no) + ": face with < 3 vertices");
      }
      for (size_t k = 1; k + 1 < poly.size(); ++k) tris.push_back({poly[0], poly[k], poly[k + 1]});
    }
  }
  TriMesh mesh;
  mesh.vertices.resize(static_cast<int>(verts.size()), 3);
  for (size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(i) = verts[i].transpose();
  mesh.faces.resize(static_cast<int>(tris.size()), 3);
  for (size_t i = 0; i < tris.size(); ++i) mesh.faces.row(i) << tris[i][0], tris[i][1], tris[i][2];
  mesh.validate();
  return mesh;
}

}  // namespace dexsynth
