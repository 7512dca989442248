#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dexsynth/contact_maps.hpp"
#include "dexsynth/motion_frames.hpp"
#include "dexsynth/object_model.hpp"

namespace dexsynth {

enum class ObjectKind { Sphere, Box, HingedBox };
enum class TrajectoryKind { Lift, Arc, HingeOpen };
enum class HandsUsed { Left, Right, Both };

std::string to_string(ObjectKind kind);
std::string to_string(TrajectoryKind kind);
std::string to_string(HandsUsed hands);
ObjectKind parse_object_kind(const std::string& s);
TrajectoryKind parse_trajectory_kind(const std::string& s);
HandsUsed parse_hands_used(const std::string& s);

/// size: sphere radius in x; box half extents; hinged box base half extents.
struct SceneSpec {
  ObjectKind object = ObjectKind::Sphere;
  Vec3 size{0.04, 0.04, 0.04};
  TrajectoryKind trajectory = TrajectoryKind::Lift;
  int frames = 120;
  HandsUsed hands = HandsUsed::Right;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static SceneSpec from_json(const nlohmann::json& j);
};

struct SynthOptions {
  double gap = 0.001;               // palm clearance at the grasp site
  double contact_band = 0.002;      // closure target: min finger distance in [0, band]
  double finger_max_angle = 0.7;    // radians per finger joint at full aperture
  double approach_distance = 0.08;  // palm start offset along the outward normal
  double approach_fraction = 0.2;
  double closing_fraction = 0.15;
  double lift_height = 0.15;
  double arc_radius = 0.2;
  double arc_angle = 1.0;
  double hinge_angle = 1.0;
  double mesh_spacing = 0.005;
};

enum class Phase { Approach = 0, Closing = 1, Hold = 2 };

struct Scene {
  SceneSpec spec;
  ArticulatedObject object;
  ObjectSequenceWorld trajectory;
  std::vector<BimanualPose> hands;  // world frame, per frame
  std::vector<Phase> phase;
  std::array<bool, kHands> present{false, false};
  std::array<bool, kHands> on_moving_part{false, false};
  std::array<std::vector<double>, kHands> aperture;  // per finger, final grip

  int frames() const { return trajectory.frames(); }
  /// Hand pose in the object frame (R_l, D_l).
  BimanualPose canonical_hands(int frame) const;
};

/// Deterministic toy scene: approach, closing by per-finger aperture
/// bisection, then rigid co-motion with the object (or its moving part).
/// Throws Error with diagnostics when a finger cannot reach the surface.
Scene generate_scene(const SceneSpec& spec, const HandRig& right_rig, const SynthOptions& options = {});

/// Random spec drawn from the toy distribution (all kinds, seeded).
SceneSpec random_scene_spec(std::uint64_t seed, int frames);

/// Mirrored left rig and the right rig, indexed by hand.
std::array<HandRig, kHands> bimanual_rigs(const HandRig& right_rig);

struct FrameRange {
  int begin = 0;
  int end = 0;  // exclusive
  int size() const { return end - begin; }
};

/// Trims leading/trailing frames whose max C over both hands is below
/// `threshold`, keeping `margin` such frames on each side.
FrameRange clip_silent(const ContactSequence& maps, double threshold = 0.1, int margin = 5);

struct Window {
  int start = 0;
  int real = 0;     // frames taken from the sequence
  int length = 0;   // window length including zero padding
  std::vector<char> valid;
};

/// Covering windows at `stride`; the last window ends at the final frame.
std::vector<Window> eval_windows(int frames, int length, int stride);
/// One random window, zero-padded when the sequence is shorter.
Window train_window(int frames, int length, std::mt19937_64& rng);
/// For each frame, the window whose centre is nearest (ties: earlier window).
std::vector<int> stitch_assignment(const std::vector<Window>& windows, int frames);

}  // namespace dexsynth
