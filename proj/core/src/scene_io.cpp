#include "dexsynth/scene_io.hpp"

#include <fstream>

namespace dexsynth {

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": invalid JSON: " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump() << '\n';
  if (!out) throw Error("failed while writing " + path.string());
}

nlohmann::json points_to_json(const Points& p) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < p.rows(); ++i) a.push_back({p(i, 0), p(i, 1), p(i, 2)});
  return a;
}

Points points_from_json(const nlohmann::json& j) {
  Points p(static_cast<Eigen::Index>(j.size()), 3);
  for (size_t i = 0; i < j.size(); ++i) {
    if (j[i].size() != 3) throw Error("point entries must have 3 coordinates");
    for (int k = 0; k < 3; ++k) p(static_cast<Eigen::Index>(i), k) = j[i][static_cast<size_t>(k)].get<double>();
  }
  return p;
}

namespace {

nlohmann::json faces_to_json(const Eigen::MatrixX3i& f) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < f.rows(); ++i) a.push_back({f(i, 0), f(i, 1), f(i, 2)});
  return a;
}

Eigen::MatrixX3i faces_from_json(const nlohmann::json& j) {
  Eigen::MatrixX3i f(static_cast<Eigen::Index>(j.size()), 3);
  for (size_t i = 0; i < j.size(); ++i) {
    if (j[i].size() != 3) throw Error("face entries must have 3 indices");
    for (int k = 0; k < 3; ++k) f(static_cast<Eigen::Index>(i), k) = j[i][static_cast<size_t>(k)].get<int>();
  }
  return f;
}

nlohmann::json vec3_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

Vec3 vec3_from(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw Error("expected a 3-vector");
  return {v[0], v[1], v[2]};
}

void expect_format(const nlohmann::json& j, const char* format) {
  if (j.value("format", "") != format) throw Error(std::string("expected a '") + format + "' document");
}

}  // namespace

nlohmann::json rig_to_json(const HandRig& rig) {
  nlohmann::json weights = nlohmann::json::array();
  for (Eigen::Index v = 0; v < rig.skin_weights.rows(); ++v) {
    weights.push_back(std::vector<double>(rig.skin_weights.row(v).data(),
                                          rig.skin_weights.row(v).data() + rig.skin_weights.cols()));
  }
  return {{"format", "dexsynth-rig"},
          {"vertices", points_to_json(rig.template_vertices)},
          {"faces", faces_to_json(rig.faces)},
          {"parents", rig.parent_index},
          {"joints", points_to_json(rig.joint_rest_positions)},
          {"skin_weights", weights},
          {"palm_normal", vec3_json(rig.palm_normal)}};
}

HandRig rig_from_json(const nlohmann::json& j) {
  expect_format(j, "dexsynth-rig");
  HandRig rig;
  rig.template_vertices = points_from_json(j.at("vertices"));
  rig.faces = faces_from_json(j.at("faces"));
  rig.parent_index = j.at("parents").get<std::vector<int>>();
  rig.joint_rest_positions = points_from_json(j.at("joints"));
  const auto& w = j.at("skin_weights");
  rig.skin_weights = MatX::Zero(static_cast<Eigen::Index>(w.size()), rig.joint_count());
  for (size_t v = 0; v < w.size(); ++v) {
    const auto row = w[v].get<std::vector<double>>();
    if (static_cast<int>(row.size()) != rig.joint_count()) throw Error("rig: skin weight row has wrong length");
    for (size_t k = 0; k < row.size(); ++k) rig.skin_weights(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(k)) = row[k];
  }
  if (j.contains("palm_normal")) rig.palm_normal = vec3_from(j.at("palm_normal"));
  rig.validate();
  return rig;
}

nlohmann::json basis_to_json(const BasisPointSet& basis) {
  return {{"format", "dexsynth-bps"}, {"seed", basis.seed}, {"radius", basis.radius}, {"offsets", points_to_json(basis.offsets)}};
}

BasisPointSet basis_from_json(const nlohmann::json& j) {
  expect_format(j, "dexsynth-bps");
  BasisPointSet b;
  b.seed = j.at("seed").get<std::uint64_t>();
  b.radius = j.at("radius").get<double>();
  b.offsets = points_from_json(j.at("offsets"));
  return b;
}

nlohmann::json embedding_to_json(const EmbeddingTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < table.values.rows(); ++i) {
    rows.push_back(std::vector<double>(table.values.row(i).data(), table.values.row(i).data() + table.values.cols()));
  }
  return {{"format", "dexsynth-embedding"}, {"sigma_g", table.sigma_g}, {"dim", table.dim()}, {"values", rows}};
}

EmbeddingTable embedding_from_json(const nlohmann::json& j) {
  expect_format(j, "dexsynth-embedding");
  EmbeddingTable t;
  t.sigma_g = j.at("sigma_g").get<double>();
  const int dim = j.at("dim").get<int>();
  const auto& rows = j.at("values");
  t.values.resize(static_cast<Eigen::Index>(rows.size()), dim);
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto r = rows[i].get<std::vector<double>>();
    if (static_cast<int>(r.size()) != dim) throw Error("embedding: row has wrong dimension");
    for (int k = 0; k < dim; ++k) t.values(static_cast<Eigen::Index>(i), k) = r[static_cast<size_t>(k)];
  }
  if (!t.values.allFinite()) throw Error("embedding: non-finite entries");
  return t;
}

nlohmann::json object_to_json(const ArticulatedObject& o) {
  nlohmann::json j = {{"vertices", points_to_json(o.mesh.vertices)}, {"faces", faces_to_json(o.mesh.faces)}};
  if (o.articulated()) {
    std::vector<int> mask(o.moving.begin(), o.moving.end());
    j["moving"] = mask;
    j["hinge"] = {{"axis", vec3_json(o.hinge_axis)}, {"pivot", vec3_json(o.hinge_pivot)}};
  }
  return j;
}

ArticulatedObject object_from_json(const nlohmann::json& j) {
  ArticulatedObject o;
  o.mesh.vertices = points_from_json(j.at("vertices"));
  o.mesh.faces = faces_from_json(j.at("faces"));
  if (j.contains("moving")) {
    const auto mask = j.at("moving").get<std::vector<int>>();
    o.moving.assign(mask.begin(), mask.end());
    o.hinge_axis = vec3_from(j.at("hinge").at("axis"));
    o.hinge_pivot = vec3_from(j.at("hinge").at("pivot"));
  }
  o.validate();
  return o;
}

nlohmann::json trajectory_to_json(const ObjectSequenceWorld& seq) {
  nlohmann::json frames = nlohmann::json::array();
  for (int l = 0; l < seq.frames(); ++l) {
    const Mat3& r = seq.rotation[l];
    frames.push_back({{"R", {r(0, 0), r(0, 1), r(0, 2), r(1, 0), r(1, 1), r(1, 2), r(2, 0), r(2, 1), r(2, 2)}},
                      {"D", vec3_json(seq.translation[l])},
                      {"a", seq.articulation.empty() ? 0.0 : seq.articulation[l]}});
  }
  return frames;
}

ObjectSequenceWorld trajectory_from_json(const nlohmann::json& j) {
  ObjectSequenceWorld seq;
  for (const auto& f : j) {
    const auto r = f.at("R").get<std::vector<double>>();
    if (r.size() != 9) throw Error("trajectory: R must have 9 entries");
    Mat3 m;
    m << r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8];
    seq.rotation.push_back(m);
    seq.translation.push_back(vec3_from(f.at("D")));
    seq.articulation.push_back(f.value("a", 0.0));
  }
  seq.validate();
  return seq;
}

nlohmann::json canonical_motion_to_json(const ObjectMotionCanonical& motion) {
  const MatX f = motion.features();
  nlohmann::json frames = nlohmann::json::array();
  for (Eigen::Index l = 0; l < f.rows(); ++l) {
    frames.push_back({{"omega6d", std::vector<double>(f.row(l).data(), f.row(l).data() + 6)},
                      {"v", {f(l, 6), f(l, 7), f(l, 8)}},
                      {"alpha", f(l, 9)}});
  }
  const Mat3& r = motion.anchor_rotation;
  return {{"anchor",
           {{"R", {r(0, 0), r(0, 1), r(0, 2), r(1, 0), r(1, 1), r(1, 2), r(2, 0), r(2, 1), r(2, 2)}},
            {"D", vec3_json(motion.anchor_translation)},
            {"a", motion.anchor_articulation}}},
          {"frames", frames}};
}

nlohmann::json hand_sequence_to_json(const std::vector<BimanualPose>& poses) {
  nlohmann::json frames = nlohmann::json::array();
  std::array<bool, kHands> present{false, false};
  if (!poses.empty()) present = poses.front().present;
  for (const auto& p : poses) {
    const VecX v = flatten_pose(p);
    frames.push_back(std::vector<double>(v.data(), v.data() + v.size()));
  }
  return {{"format", "dexsynth-hands"}, {"present", {present[0], present[1]}}, {"frames", frames}};
}

std::vector<BimanualPose> hand_sequence_from_json(const nlohmann::json& j) {
  expect_format(j, "dexsynth-hands");
  const auto present = j.at("present").get<std::vector<bool>>();
  if (present.size() != kHands) throw Error("hand sequence: present must have two entries");
  std::vector<BimanualPose> out;
  for (const auto& f : j.at("frames")) {
    const auto v = f.get<std::vector<double>>();
    BimanualPose p = unflatten_pose(v);
    p.present = {present[0], present[1]};
    out.push_back(p);
  }
  return out;
}

nlohmann::json scene_to_json(const Scene& s) {
  std::vector<int> phase;
  for (Phase p : s.phase) phase.push_back(static_cast<int>(p));
  nlohmann::json aperture = nlohmann::json::array();
  for (int h = 0; h < kHands; ++h) aperture.push_back(s.aperture[h]);
  return {{"format", "dexsynth-scene"},
          {"spec", s.spec.to_json()},
          {"object", object_to_json(s.object)},
          {"trajectory", trajectory_to_json(s.trajectory)},
          {"hands", hand_sequence_to_json(s.hands)},
          {"phase", phase},
          {"on_moving_part", {s.on_moving_part[0], s.on_moving_part[1]}},
          {"aperture", aperture}};
}

Scene scene_from_json(const nlohmann::json& j) {
  expect_format(j, "dexsynth-scene");
  Scene s;
  s.spec = SceneSpec::from_json(j.at("spec"));
  s.object = object_from_json(j.at("object"));
  s.trajectory = trajectory_from_json(j.at("trajectory"));
  if (j.contains("hands")) {
    s.hands = hand_sequence_from_json(j.at("hands"));
    if (static_cast<int>(s.hands.size()) != s.trajectory.frames()) throw Error("scene: hand/trajectory frame counts differ");
    if (!s.hands.empty()) s.present = s.hands.front().present;
  }
  if (j.contains("phase")) {
    for (int p : j.at("phase").get<std::vector<int>>()) s.phase.push_back(static_cast<Phase>(p));
  }
  if (j.contains("on_moving_part")) {
    const auto m = j.at("on_moving_part").get<std::vector<bool>>();
    s.on_moving_part = {m.at(0), m.at(1)};
  }
  if (j.contains("aperture")) {
    for (int h = 0; h < kHands; ++h) s.aperture[h] = j.at("aperture").at(static_cast<size_t>(h)).get<std::vector<double>>();
  }
  return s;
}

}  // namespace dexsynth
