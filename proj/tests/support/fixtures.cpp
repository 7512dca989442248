#include "fixtures.hpp"

#include <map>
#include <tuple>

#include "dexsynth/geometry.hpp"
#include "dexsynth/training.hpp"

namespace dexsynth::testing {

const HandRig& toy_rig() {
  static const HandRig rig = make_toy_hand();
  return rig;
}

const std::array<HandRig, kHands>& toy_rigs() {
  static const std::array<HandRig, kHands> rigs = bimanual_rigs(toy_rig());
  return rigs;
}

const EmbeddingFit& toy_embedding_fit() {
  static const EmbeddingFit fit = [] {
    const MatX geo = geodesic_matrix(rig_mesh(toy_rig(), toy_rig().template_vertices));
    return optimize_embeddings(geo, EmbeddingOptions{});
  }();
  return fit;
}

const EmbeddingTable& toy_embedding() { return toy_embedding_fit().table; }

Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
  q.normalize();
  return q.toRotationMatrix();
}

Vec3 random_vector(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

HandPose random_pose(std::mt19937_64& rng, double joint_angle) {
  HandPose p;
  p.trans = random_vector(rng, 0.2);
  p.root_rot = matrix_to_rot6d(random_rotation(rng));
  std::uniform_real_distribution<double> u(-joint_angle, joint_angle);
  for (auto& r : p.joint_rots) {
    const Mat3 m = Eigen::AngleAxisd(u(rng), random_vector(rng, 1.0).normalized()).toRotationMatrix();
    r = matrix_to_rot6d(m);
  }
  return p;
}

HandRig two_bone_rig() {
  HandRig rig;
  rig.parent_index.resize(kJointCount);
  rig.joint_rest_positions.resize(kJointCount, 3);
  for (int j = 0; j < kJointCount; ++j) {
    rig.parent_index[j] = j - 1;
    rig.joint_rest_positions.row(j) << 0.1 * j, 0.0, 0.0;
  }
  rig.template_vertices.resize(3, 3);
  rig.template_vertices << 0.05, 0.01, 0.0,   // all on bone 0
      0.1, 0.01, 0.0,                          // split between bones
      0.15, 0.01, 0.0;                         // all on bone 1
  rig.skin_weights = MatX::Zero(3, kJointCount);
  rig.skin_weights(0, 0) = 1.0;
  rig.skin_weights(1, 0) = 0.5;
  rig.skin_weights(1, 1) = 0.5;
  rig.skin_weights(2, 1) = 1.0;
  rig.faces.resize(1, 3);
  rig.faces << 0, 1, 2;
  rig.validate();
  return rig;
}

const Scene& fixture_scene(ObjectKind object, TrajectoryKind trajectory, HandsUsed hands, int frames) {
  static std::map<std::tuple<int, int, int, int>, Scene> cache;
  const auto key = std::make_tuple(static_cast<int>(object), static_cast<int>(trajectory), static_cast<int>(hands), frames);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  SceneSpec spec;
  spec.object = object;
  spec.trajectory = trajectory;
  spec.hands = hands;
  spec.frames = frames;
  spec.seed = 11;
  if (object == ObjectKind::Sphere) spec.size = Vec3(0.04, 0.04, 0.04);
  if (object == ObjectKind::Box) spec.size = Vec3(0.04, 0.024, 0.035);
  if (object == ObjectKind::HingedBox) spec.size = Vec3(0.024, 0.035, 0.03);
  return cache.emplace(key, generate_scene(spec, toy_rig())).first->second;
}

ContactSequence scene_gt_maps(const Scene& scene, const BasisPointSet& basis,
                              std::vector<std::array<Points, kHands>>* hand_vertices) {
  const ObjectFeatures f = object_features(scene.object, scene.trajectory, basis);
  ContactScene geometry;
  geometry.surface_points = f.surface_points;
  for (int l = 0; l < scene.frames(); ++l) {
    const BimanualPose p = scene.canonical_hands(l);
    std::array<Points, kHands> hv;
    for (int h = 0; h < kHands; ++h) {
      if (scene.present[h]) hv[h] = forward_kinematics(toy_rigs()[h], p.hands[h]).vertices;
    }
    geometry.hand_vertices.push_back(hv);
  }
  if (hand_vertices) *hand_vertices = geometry.hand_vertices;
  return build_gt_maps(geometry, toy_embedding(), kDefaultContactSigma);
}

double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace dexsynth::testing
