#include <doctest.h>

#include <random>

#include "dexsynth/bps.hpp"
#include "dexsynth/geometry.hpp"
#include "dexsynth/metrics.hpp"
#include "dexsynth/object_model.hpp"
#include "fixtures.hpp"

using namespace dexsynth;

namespace {

Points random_points(int n, std::mt19937_64& rng, double scale = 1.0) {
  Points p(n, 3);
  std::normal_distribution<double> g(0.0, scale);
  for (int i = 0; i < n; ++i) p.row(i) << g(rng), 2.0 * g(rng), 0.5 * g(rng);
  return p;
}

bool contains_all(const Points& p, const Vec3& c, double r) {
  for (int i = 0; i < p.rows(); ++i) {
    if ((p.row(i).transpose() - c).norm() > r * (1 + 1e-12) + 1e-12) return false;
  }
  return true;
}

// Smallest sphere among all spheres through 2, 3 or 4 of the points
// (diametral, circumcircle in the plane, circumsphere) that encloses the set.
double brute_force_radius(const Points& p) {
  const int n = static_cast<int>(p.rows());
  double best = std::numeric_limits<double>::infinity();
  auto consider = [&](const Vec3& c, double r) {
    if (r < best && contains_all(p, c, r)) best = r;
  };
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const Vec3 a = p.row(i), b = p.row(j);
      consider(0.5 * (a + b), 0.5 * (a - b).norm());
      for (int k = j + 1; k < n; ++k) {
        const Vec3 c = p.row(k);
        const Vec3 ab = b - a, ac = c - a, nrm = ab.cross(ac);
        if (nrm.squaredNorm() < 1e-20) continue;
        const Vec3 cc = a + (ac.squaredNorm() * nrm.cross(ab) + ab.squaredNorm() * ac.cross(nrm)) /
                                (2.0 * nrm.squaredNorm());
        const double r3 = (cc - a).norm();
        consider(cc, r3);
        if (r3 >= best) continue;  // a circumsphere through a, b, c is at least this large
        for (int l = k + 1; l < n; ++l) {
          const Vec3 d = p.row(l);
          Mat3 m;
          m.row(0) = (b - a).transpose();
          m.row(1) = (c - a).transpose();
          m.row(2) = (d - a).transpose();
          if (std::abs(m.determinant()) < 1e-15) continue;
          const Vec3 rhs(0.5 * (b.squaredNorm() - a.squaredNorm()), 0.5 * (c.squaredNorm() - a.squaredNorm()),
                         0.5 * (d.squaredNorm() - a.squaredNorm()));
          const Vec3 cs = m.partialPivLu().solve(rhs);
          consider(cs, (cs - a).norm());
        }
      }
    }
  }
  return best;
}

}  // namespace

TEST_SUITE("geometry") {
  TEST_CASE("minimum bounding sphere matches brute force candidates") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 3; ++trial) {
      const Points p = random_points(100, rng);
      const Sphere s = min_bounding_sphere(p);
      CHECK(contains_all(p, s.center, s.radius + 1e-9));
      CHECK(s.radius == doctest::Approx(brute_force_radius(p)).epsilon(1e-9));
    }
  }

  TEST_CASE("bounding sphere degenerate inputs") {
    Points one(1, 3);
    one << 1, 2, 3;
    CHECK(min_bounding_sphere(one).radius == 0.0);
    Points dup(4, 3);
    dup << 0, 0, 0, 1, 0, 0, 1, 0, 0, 0, 0, 0;
    const Sphere s = min_bounding_sphere(dup);
    CHECK(s.radius == doctest::Approx(0.5));
    CHECK_THROWS_AS(min_bounding_sphere(Points(0, 3)), Error);
  }

  TEST_CASE("BPS matches exhaustive nearest neighbour") {
    std::mt19937_64 rng(2);
    const Points cloud = random_points(2000, rng, 0.05);
    const BasisPointSet basis = BasisPointSet::sample(512, 0.15, 42);
    const Vec3 center(0.01, -0.02, 0.0);
    const BpsEncoding enc = bps_encode(cloud, basis, center);
    for (int j = 0; j < basis.size(); ++j) {
      const Vec3 b = center + basis.offsets.row(j).transpose();
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int i = 0; i < cloud.rows(); ++i) {
        const double d = (cloud.row(i).transpose() - b).squaredNorm();
        if (d < best_d) best_d = d, best = i;
      }
      REQUIRE(enc.nearest_index[j] == best);
      CHECK((enc.directions.row(j).transpose() - (cloud.row(best).transpose() - b)).norm() < 1e-15);
    }
    CHECK((enc.surface_points(basis, center) - cloud(enc.nearest_index, Eigen::all)).norm() < 1e-12);
  }

  TEST_CASE("BPS sampling is deterministic and inside the ball") {
    const BasisPointSet a = BasisPointSet::sample(256, 0.3, 7);
    const BasisPointSet b = BasisPointSet::sample(256, 0.3, 7);
    CHECK(a.offsets == b.offsets);
    CHECK(a.offsets.rowwise().norm().maxCoeff() <= 0.3);
    CHECK(BasisPointSet::sample(256, 0.3, 8).offsets != a.offsets);
  }

  TEST_CASE("closest point on triangle covers every region") {
    const Vec3 a(0, 0, 0), b(1, 0, 0), c(0, 1, 0);
    CHECK(closest_point_on_triangle(Vec3(0.2, 0.2, 1), a, b, c).isApprox(Vec3(0.2, 0.2, 0)));
    CHECK(closest_point_on_triangle(Vec3(-1, -1, 0), a, b, c).isApprox(a));
    CHECK(closest_point_on_triangle(Vec3(2, -1, 0), a, b, c).isApprox(b));
    CHECK(closest_point_on_triangle(Vec3(0.5, -1, 0), a, b, c).isApprox(Vec3(0.5, 0, 0)));
    CHECK(closest_point_on_triangle(Vec3(1, 1, 0), a, b, c).isApprox(Vec3(0.5, 0.5, 0)));
    CHECK(closest_point_on_triangle(Vec3(-1, 0.5, 3), a, b, c).isApprox(Vec3(0, 0.5, 0)));
  }

  TEST_CASE("winding number and signed distance on a box") {
    const TriMesh box = make_box(Vec3(0.05, 0.03, 0.02), 0.01);
    CHECK(box.is_watertight());
    CHECK(box.signed_volume() == doctest::Approx(0.1 * 0.06 * 0.04).epsilon(1e-9));
    CHECK(winding_number(Vec3(0.01, 0.0, 0.0), box) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::abs(winding_number(Vec3(0.2, 0.0, 0.0), box)) < 1e-6);
    CHECK(signed_distance(Vec3(0.0, 0.0, 0.0), box) == doctest::Approx(-0.02));
    CHECK(signed_distance(Vec3(0.0, 0.0, 0.05), box) == doctest::Approx(0.03));
  }

  TEST_CASE("SDF grid agrees with the exact distance") {
    const TriMesh sphere = make_icosphere(0.04, 3);
    const SdfGrid grid(sphere, 0.002, 0.01);
    std::mt19937_64 rng(3);
    for (int i = 0; i < 100; ++i) {
      const Vec3 p = dexsynth::testing::random_vector(rng, 0.045);
      Vec3 g;
      const double v = grid.evaluate(p, &g);
      CHECK(std::abs(v - signed_distance(p, sphere)) < 5e-4);
      if (std::abs(v) > 0.005 && p.norm() > 0.01) CHECK(g.normalized().dot(p.normalized()) > 0.95);
    }
  }

  TEST_CASE("box overlap voxel volume matches the analytic value") {
    const TriMesh a = make_box(Vec3(0.05, 0.05, 0.05), 0.01);
    const TriMesh b = make_box(Vec3(0.04, 0.03, 0.05), 0.01).transformed(Mat3::Identity(), Vec3(0.06, 0.02, 0.03));
    // Overlap: x [0.02, 0.05], y [-0.01, 0.05], z [-0.02, 0.05] -> 3 x 6 x 7 cm.
    const double analytic = 3.0 * 6.0 * 7.0;
    CHECK(intersection_volume(a, b, 0.005) == doctest::Approx(analytic).epsilon(0.05));
  }

  TEST_CASE("sphere fully inside an object penetrates by its volume") {
    const TriMesh sphere = make_icosphere(0.05, 4);
    const TriMesh box = make_box(Vec3(0.1, 0.1, 0.1), 0.02);
    CHECK(penetration_volume(sphere, box, 0.005) == doctest::Approx(523.6).epsilon(0.05));
    CHECK(penetration_volume(sphere, box.transformed(Mat3::Identity(), Vec3(1, 0, 0))) == 0.0);
  }

  TEST_CASE("geodesic distances on a box follow the surface") {
    const TriMesh box = make_box(Vec3(0.05, 0.05, 0.05), 0.01);
    const MatX g = geodesic_matrix(box);
    CHECK(g.rows() == box.vertex_count());
    CHECK((g - g.transpose()).norm() < 1e-12);
    CHECK(g.diagonal().norm() == 0.0);
    // Opposite corners: at least the straight line, at most an unfolded path plus grid detour.
    int lo = 0, hi = 0;
    for (int i = 0; i < box.vertex_count(); ++i) {
      if (box.vertices.row(i).sum() < box.vertices.row(lo).sum()) lo = i;
      if (box.vertices.row(i).sum() > box.vertices.row(hi).sum()) hi = i;
    }
    CHECK(g(lo, hi) >= std::sqrt(0.1 * 0.1 + 0.2 * 0.2) - 1e-12);
    CHECK(g(lo, hi) <= 0.3 + 1e-12);
    TriMesh two = merge(box, box.transformed(Mat3::Identity(), Vec3(1, 0, 0)));
    CHECK_THROWS_AS(geodesic_matrix(two), Error);
  }

  TEST_CASE("articulated object SDF follows the moving part") {
    const Scene& s = dexsynth::testing::fixture_scene(ObjectKind::HingedBox, TrajectoryKind::HingeOpen, HandsUsed::Both);
    const ObjectSdf sdf(s.object);
    std::mt19937_64 rng(4);
    for (int i = 0; i < 30; ++i) {
      const double angle = 0.8;
      const Vec3 p = dexsynth::testing::random_vector(rng, 0.05);
      double exact = std::numeric_limits<double>::infinity();
      const auto parts = s.object.parts();
      for (size_t k = 0; k < parts.size(); ++k) {
        TriMesh m = parts[k];
        if (k == 1) {
          const auto [r, t] = s.object.part_transform(angle);
          m = m.transformed(r, t);
        }
        exact = std::min(exact, signed_distance(p, m));
      }
      const double v = sdf.evaluate(p, angle);
      if (exact < 0.015) CHECK(std::abs(v - exact) < 1e-3);
      else CHECK(v >= 0.014);
    }
  }

  TEST_CASE("OBJ round trip") {
    const TriMesh m = make_icosphere(0.03, 1);
    const auto path = std::filesystem::temp_directory_path() / "dexsynth_obj_roundtrip.obj";
    write_obj(path, m);
    const TriMesh back = read_obj(path);
    CHECK(back.faces == m.faces);
    CHECK((back.vertices - m.vertices).cwiseAbs().maxCoeff() < 1e-9);
    std::filesystem::remove(path);
  }
}
