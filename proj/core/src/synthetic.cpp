#include "dexsynth/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include "dexsynth/toy_hand.hpp"

namespace dexsynth {

namespace {

struct GraspSite {
  Vec3 point;
  Vec3 inward;     // into the object
  Vec3 direction;  // where the fingers point
  bool moving = false;
};

Mat3 rot_z(double angle) { return Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix(); }

Vec3 any_tangent(const Vec3& n, double angle) {
  Vec3 a = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 t1 = n.cross(a).normalized();
  const Vec3 t2 = n.cross(t1).normalized();
  return std::cos(angle) * t1 + std::sin(angle) * t2;
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(g(rng), g(rng), g(rng));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

ArticulatedObject build_object(const SceneSpec& spec, const SynthOptions& opt) {
  ArticulatedObject obj;
  switch (spec.object) {
    case ObjectKind::Sphere: {
      obj.mesh = make_icosphere(spec.size.x(), 3);
      break;
    }
    case ObjectKind::Box: {
      obj.mesh = make_box(spec.size, opt.mesh_spacing);
      break;
    }
    case ObjectKind::HingedBox: {
      const double lid = 0.012;
      const Vec3 base_half = spec.size;
      TriMesh base = make_box(base_half, opt.mesh_spacing);
      TriMesh top = make_box(Vec3(base_half.x(), base_half.y(), lid / 2), opt.mesh_spacing);
      top = top.transformed(Mat3::Identity(), Vec3(0, 0, base_half.z() + lid / 2));
      obj.mesh = merge(base, top);
      obj.moving.assign(obj.mesh.vertex_count(), 0);
      std::fill(obj.moving.begin() + base.vertex_count(), obj.moving.end(), 1);
      obj.hinge_axis = Vec3::UnitX();
      obj.hinge_pivot = Vec3(0, -base_half.y(), base_half.z());
      break;
    }
  }
  obj.validate();
  return obj;
}

std::array<std::optional<GraspSite>, kHands> grasp_sites(const SceneSpec& spec, std::mt19937_64& rng) {
  std::array<std::optional<GraspSite>, kHands> sites;
  const bool left = spec.hands != HandsUsed::Right;
  const bool right = spec.hands != HandsUsed::Left;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  switch (spec.object) {
    case ObjectKind::Sphere: {
      const double r = spec.size.x();
      const Vec3 n = random_unit(rng);
      const double spin = 2.0 * M_PI * unit(rng);
      if (right) sites[1] = GraspSite{r * n, -n, any_tangent(n, spin), false};
      if (left) sites[0] = GraspSite{-r * n, n, any_tangent(-n, spin + M_PI / 2), false};
      break;
    }
    case ObjectKind::Box: {
      const double hx = spec.size.x();
      const double flip = unit(rng) < 0.5 ? 1.0 : -1.0;
      if (right) sites[1] = GraspSite{Vec3(hx, 0, 0), -Vec3::UnitX(), flip * Vec3::UnitY(), false};
      if (left) sites[0] = GraspSite{Vec3(-hx, 0, 0), Vec3::UnitX(), flip * Vec3::UnitY(), false};
      break;
    }
    case ObjectKind::HingedBox: {
      const Vec3 h = spec.size;
      const double flip = unit(rng) < 0.5 ? 1.0 : -1.0;
      if (left) sites[0] = GraspSite{Vec3(0, h.y(), 0), -Vec3::UnitY(), flip * Vec3::UnitX(), false};
      if (right) sites[1] = GraspSite{Vec3(0, 0, h.z() + 0.012), -Vec3::UnitZ(), flip * Vec3::UnitX(), true};
      break;
    }
  }
  return sites;
}

HandPose palm_pose(const GraspSite& site, double gap) {
  HandPose pose;
  Mat3 q;
  q.col(1) = site.direction;
  q.col(2) = -site.inward;
  q.col(0) = q.col(1).cross(q.col(2));
  pose.root_rot = matrix_to_rot6d(q);
  pose.trans = site.point - site.inward * gap;
  return pose;
}

void set_aperture(HandPose& pose, const FingerChain& chain, double s, double max_angle) {
  const Vec6 r = matrix_to_rot6d(Eigen::AngleAxisd(s * max_angle, chain.curl_axis).toRotationMatrix());
  for (int j : chain.joints) pose.joint_rots[j - 1] = r;
}

std::vector<int> distal_vertices(const HandRig& rig, const FingerChain& chain) {
  std::vector<int> out;
  for (int v : chain.vertices) {
    Eigen::Index best;
    rig.skin_weights.row(v).maxCoeff(&best);
    if (std::find(chain.joints.begin(), chain.joints.end(), static_cast<int>(best)) != chain.joints.end()) {
      out.push_back(v);
    }
  }
  return out;
}

double min_signed_distance(const Points& verts, const std::vector<int>& ids, const TriMesh& mesh) {
  double best = std::numeric_limits<double>::infinity();
  for (int v : ids) {
    const Vec3 p = verts.row(v).transpose();
    const double d = point_to_mesh(p, mesh).distance;
    best = std::min(best, is_inside(p, mesh) ? -d : d);
  }
  return best;
}

// Closes every finger of `pose` independently; returns the apertures.
std::vector<double> close_fingers(const HandRig& rig, HandPose& pose, const TriMesh& mesh, const SynthOptions& opt,
                                  const std::string& hand_name) {
  const auto chains = finger_chains(rig);
  std::vector<double> apertures;
  const int scan_steps = 50;
  for (size_t f = 0; f < chains.size(); ++f) {
    const auto ids = distal_vertices(rig, chains[f]);
    auto distance_at = [&](double s) {
      HandPose trial = pose;
      set_aperture(trial, chains[f], s, opt.finger_max_angle);
      return min_signed_distance(forward_kinematics(rig, trial).vertices, ids, mesh);
    };
    const double band = opt.contact_band;
    double d0 = distance_at(0.0);
    if (d0 < 0.0) {
      std::ostringstream msg;
      msg << "grasp closure failed: " << hand_name << " finger " << f << " penetrates the object when open (distance "
          << d0 << " m)";
      throw Error(msg.str());
    }
    double s_found = 0.0;
    if (d0 > band) {
      double lo = 0.0;
      double hi = -1.0;
      double d_hi = 0.0;
      for (int k = 1; k <= scan_steps; ++k) {
        const double s = static_cast<double>(k) / scan_steps;
        const double d = distance_at(s);
        if (d <= band) {
          hi = s;
          d_hi = d;
          break;
        }
        lo = s;
      }
      if (hi < 0.0) {
        std::ostringstream msg;
        msg << "grasp closure failed: " << hand_name << " finger " << f
            << " does not reach the surface at full aperture (min distance " << distance_at(1.0)
            << " m); object too small or too large for the gripper";
        throw Error(msg.str());
      }
      s_found = hi;
      double d_found = d_hi;
      for (int it = 0; it < 60 && !(d_found >= 0.0 && d_found <= band); ++it) {
        const double mid = 0.5 * (lo + hi);
        const double d = distance_at(mid);
        if (d > band) {
          lo = mid;
        } else {
          hi = mid;
          s_found = mid;
          d_found = d;
        }
      }
      if (!(d_found >= 0.0 && d_found <= band)) {
        std::ostringstream msg;
        msg << "grasp closure failed: " << hand_name << " finger " << f << " jumps past the contact band (distance "
            << d_found << " m at aperture " << s_found << ")";
        throw Error(msg.str());
      }
    }
    set_aperture(pose, chains[f], s_found, opt.finger_max_angle);
    apertures.push_back(s_found);
  }
  return apertures;
}

}  // namespace

std::string to_string(ObjectKind kind) {
  switch (kind) {
    case ObjectKind::Sphere: return "sphere";
    case ObjectKind::Box: return "box";
    case ObjectKind::HingedBox: return "hinged-box";
  }
  return "?";
}

std::string to_string(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::Lift: return "lift";
    case TrajectoryKind::Arc: return "arc";
    case TrajectoryKind::HingeOpen: return "hinge-open";
  }
  return "?";
}

std::string to_string(HandsUsed hands) {
  switch (hands) {
    case HandsUsed::Left: return "left";
    case HandsUsed::Right: return "right";
    case HandsUsed::Both: return "both";
  }
  return "?";
}

ObjectKind parse_object_kind(const std::string& s) {
  if (s == "sphere") return ObjectKind::Sphere;
  if (s == "box") return ObjectKind::Box;
  if (s == "hinged-box") return ObjectKind::HingedBox;
  throw Error("unknown object kind '" + s + "' (expected sphere, box or hinged-box)");
}

TrajectoryKind parse_trajectory_kind(const std::string& s) {
  if (s == "lift") return TrajectoryKind::Lift;
  if (s == "arc") return TrajectoryKind::Arc;
  if (s == "hinge-open") return TrajectoryKind::HingeOpen;
  throw Error("unknown trajectory kind '" + s + "' (expected lift, arc or hinge-open)");
}

HandsUsed parse_hands_used(const std::string& s) {
  if (s == "left") return HandsUsed::Left;
  if (s == "right") return HandsUsed::Right;
  if (s == "both") return HandsUsed::Both;
  throw Error("unknown hands value '" + s + "' (expected left, right or both)");
}

void SceneSpec::validate() const {
  if (frames < 2) throw Error("scene spec: duration must be at least 2 frames");
  if ((size.array() <= 0.0).any()) throw Error("scene spec: sizes must be positive");
  if (trajectory == TrajectoryKind::HingeOpen && object != ObjectKind::HingedBox) {
    throw Error("scene spec: hinge-open needs a hinged-box object");
  }
}

nlohmann::json SceneSpec::to_json() const {
  return {{"object", to_string(object)},
          {"size", {size.x(), size.y(), size.z()}},
          {"trajectory", to_string(trajectory)},
          {"frames", frames},
          {"hands", to_string(hands)},
          {"seed", seed}};
}

SceneSpec SceneSpec::from_json(const nlohmann::json& j) {
  SceneSpec s;
  s.object = parse_object_kind(j.at("object").get<std::string>());
  const auto size = j.at("size").get<std::vector<double>>();
  if (size.size() != 3) throw Error("scene spec: size must have 3 entries");
  s.size = Vec3(size[0], size[1], size[2]);
  s.trajectory = parse_trajectory_kind(j.at("trajectory").get<std::string>());
  s.frames = j.at("frames").get<int>();
  s.hands = parse_hands_used(j.at("hands").get<std::string>());
  s.seed = j.at("seed").get<std::uint64_t>();
  s.validate();
  return s;
}

std::array<HandRig, kHands> bimanual_rigs(const HandRig& right_rig) { return {right_rig.mirrored(), right_rig}; }

BimanualPose Scene::canonical_hands(int frame) const {
  BimanualPose out = hands[frame];
  for (int h = 0; h < kHands; ++h) {
    if (!present[h]) continue;
    out.hands[h] = canonicalize_hand(hands[frame].hands[h], trajectory.rotation[frame], trajectory.translation[frame]);
  }
  return out;
}

Scene generate_scene(const SceneSpec& spec, const HandRig& right_rig, const SynthOptions& opt) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Scene scene;
  scene.spec = spec;
  scene.object = build_object(spec, opt);
  const TriMesh rest = scene.object.posed(0.0);
  const auto rigs = bimanual_rigs(right_rig);
  const auto sites = grasp_sites(spec, rng);

  const int frames = spec.frames;
  int approach = static_cast<int>(std::lround(opt.approach_fraction * frames));
  int closing = static_cast<int>(std::lround(opt.closing_fraction * frames));
  if (approach + closing >= frames) {
    approach = 0;
    closing = std::max(0, frames - 1);
  }
  const int hold = frames - approach - closing;

  // Object trajectory: still while the hands reach, moving while held.
  const double yaw = 2.0 * M_PI * unit(rng);
  const Mat3 r0 = rot_z(yaw);
  const Vec3 d0(0.4 * (unit(rng) - 0.5), 0.4 * (unit(rng) - 0.5), 0.1);
  auto& traj = scene.trajectory;
  traj.rotation.resize(frames);
  traj.translation.resize(frames);
  traj.articulation.assign(frames, 0.0);
  scene.phase.resize(frames);
  for (int l = 0; l < frames; ++l) {
    scene.phase[l] = l < approach ? Phase::Approach : (l < approach + closing ? Phase::Closing : Phase::Hold);
    const double u = l < approach + closing || hold <= 1 ? 0.0 : static_cast<double>(l - approach - closing) / (hold - 1);
    traj.rotation[l] = r0;
    traj.translation[l] = d0;
    switch (spec.trajectory) {
      case TrajectoryKind::Lift:
        traj.translation[l] = d0 + Vec3(0, 0, opt.lift_height * u);
        break;
      case TrajectoryKind::Arc: {
        const double phi = opt.arc_angle * u;
        traj.rotation[l] = rot_z(phi) * r0;
        traj.translation[l] =
            d0 + Vec3(opt.arc_radius * std::sin(phi), opt.arc_radius * (1.0 - std::cos(phi)), 0.05 * u);
        break;
      }
      case TrajectoryKind::HingeOpen:
        traj.articulation[l] = opt.hinge_angle * u;
        break;
    }
  }

  std::array<HandPose, kHands> grasp{HandPose::zero(), HandPose::zero()};
  std::array<HandPose, kHands> open{HandPose::zero(), HandPose::zero()};
  for (int h = 0; h < kHands; ++h) {
    if (!sites[h]) continue;
    scene.present[h] = true;
    scene.on_moving_part[h] = sites[h]->moving;
    const std::string name = h == 0 ? "left hand" : "right hand";
    HandPose pose = palm_pose(*sites[h], opt.gap);
    const Points palm = forward_kinematics(rigs[h], pose).vertices;
    std::vector<int> all(palm.rows());
    for (int i = 0; i < palm.rows(); ++i) all[i] = i;
    const double clearance = min_signed_distance(palm, all, rest);
    if (clearance < 0.0) {
      std::ostringstream msg;
      msg << "grasp closure failed: " << name << " penetrates the object when open (distance " << clearance << " m)";
      throw Error(msg.str());
    }
    open[h] = pose;
    scene.aperture[h] = close_fingers(rigs[h], pose, rest, opt, name);
    grasp[h] = pose;
  }

  scene.hands.resize(frames);
  const auto chains_by_hand = std::array<std::vector<FingerChain>, kHands>{finger_chains(rigs[0]), finger_chains(rigs[1])};
  for (int l = 0; l < frames; ++l) {
    BimanualPose bp;
    bp.present = scene.present;
    for (int h = 0; h < kHands; ++h) {
      if (!scene.present[h]) continue;
      HandPose canon = grasp[h];
      if (scene.phase[l] == Phase::Approach) {
        canon = open[h];
        const double back = opt.approach_distance * (1.0 - static_cast<double>(l) / approach);
        canon.trans -= sites[h]->inward * back;
      } else if (scene.phase[l] == Phase::Closing) {
        canon = open[h];
        const double frac = static_cast<double>(l - approach + 1) / closing;
        for (size_t f = 0; f < chains_by_hand[h].size(); ++f) {
          set_aperture(canon, chains_by_hand[h][f], frac * scene.aperture[h][f], opt.finger_max_angle);
        }
      }
      if (sites[h]->moving) {
        const auto [rp, tp] = scene.object.part_transform(traj.articulation[l]);
        canon = decanonicalize_hand(canon, rp, tp);
      }
      bp.hands[h] = decanonicalize_hand(canon, traj.rotation[l], traj.translation[l]);
    }
    scene.hands[l] = bp;
  }
  return scene;
}

SceneSpec random_scene_spec(std::uint64_t seed, int frames) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto in = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  SceneSpec s;
  s.frames = frames;
  s.seed = rng();
  const int kind = static_cast<int>(unit(rng) * 3.0);
  const int hands = static_cast<int>(unit(rng) * 3.0);
  s.hands = hands == 0 ? HandsUsed::Left : (hands == 1 ? HandsUsed::Right : HandsUsed::Both);
  switch (kind) {
    case 0:
      s.object = ObjectKind::Sphere;
      s.size = Vec3::Constant(in(0.035, 0.05));
      s.trajectory = unit(rng) < 0.5 ? TrajectoryKind::Lift : TrajectoryKind::Arc;
      break;
    case 1:
      s.object = ObjectKind::Box;
      s.size = Vec3(in(0.03, 0.05), in(0.02, 0.028), in(0.03, 0.045));
      s.trajectory = unit(rng) < 0.5 ? TrajectoryKind::Lift : TrajectoryKind::Arc;
      break;
    default:
      s.object = ObjectKind::HingedBox;
      s.size = Vec3(in(0.02, 0.028), in(0.03, 0.045), in(0.025, 0.035));
      s.trajectory = TrajectoryKind::HingeOpen;
      s.hands = HandsUsed::Both;
      break;
  }
  return s;
}

FrameRange clip_silent(const ContactSequence& maps, double threshold, int margin) {
  const int frames = maps.length();
  int first = -1;
  int last = -1;
  for (int l = 0; l < frames; ++l) {
    if (maps.frames[l].contact.size() > 0 && maps.frames[l].contact.maxCoeff() >= threshold) {
      if (first < 0) first = l;
      last = l;
    }
  }
  if (first < 0) throw Error("clip_silent: every frame is silent (max contact below threshold)");
  return {std::max(0, first - margin), std::min(frames, last + 1 + margin)};
}

std::vector<Window> eval_windows(int frames, int length, int stride) {
  if (length < 1 || stride < 1) throw Error("eval_windows: length and stride must be positive");
  if (frames < 1) return {};
  auto make = [&](int start) {
    Window w;
    w.start = start;
    w.length = length;
    w.real = std::min(length, frames - start);
    w.valid.assign(length, 0);
    std::fill(w.valid.begin(), w.valid.begin() + w.real, 1);
    return w;
  };
  std::vector<Window> out;
  if (frames <= length) {
    out.push_back(make(0));
    return out;
  }
  int start = 0;
  for (; start + length < frames; start += stride) out.push_back(make(start));
  const int final_start = frames - length;
  if (out.empty() || out.back().start != final_start) out.push_back(make(final_start));
  return out;
}

Window train_window(int frames, int length, std::mt19937_64& rng) {
  if (length < 1 || frames < 1) throw Error("train_window: length and frames must be positive");
  Window w;
  w.length = length;
  if (frames > length) {
    std::uniform_int_distribution<int> pick(0, frames - length);
    w.start = pick(rng);
  }
  w.real = std::min(length, frames - w.start);
  w.valid.assign(length, 0);
  std::fill(w.valid.begin(), w.valid.begin() + w.real, 1);
  return w;
}

std::vector<int> stitch_assignment(const std::vector<Window>& windows, int frames) {
  if (windows.empty()) throw Error("stitch_assignment: no windows");
  std::vector<int> owner(frames, -1);
  for (int f = 0; f < frames; ++f) {
    double best = std::numeric_limits<double>::infinity();
    for (size_t w = 0; w < windows.size(); ++w) {
      const Window& win = windows[w];
      if (f < win.start || f >= win.start + win.real) continue;
      const double centre = win.start + 0.5 * (win.real - 1);
      const double d = std::abs(f - centre);
      if (d < best) {
        best = d;
        owner[f] = static_cast<int>(w);
      }
    }
    if (owner[f] < 0) throw Error("stitch_assignment: frame " + std::to_string(f) + " not covered by any window");
  }
  return owner;
}

}  // namespace dexsynth
