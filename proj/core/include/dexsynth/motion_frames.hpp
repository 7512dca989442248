#pragma once

#include <vector>

#include "dexsynth/hand_model.hpp"

namespace dexsynth {

/// Object trajectory in world coordinates: x_world = R_l x_object + D_l.
struct ObjectSequenceWorld {
  std::vector<Mat3> rotation;
  std::vector<Vec3> translation;
  std::vector<double> articulation;  // radians; zeros for rigid objects

  int frames() const { return static_cast<int>(rotation.size()); }
  void validate() const;
};

/// Differential description of the same trajectory. Frame l holds the
/// rotation and translation of frame l relative to frame l-1, expressed in
/// the frame l-1 object coordinates. Frame 0 is identity / zero.
struct ObjectMotionCanonical {
  std::vector<Mat3> relative_rotation;   // omega_l
  std::vector<Vec3> velocity;            // v_l, meters / frame
  std::vector<double> articulation_velocity;  // alpha_l, radians / frame
  Mat3 anchor_rotation = Mat3::Identity();
  Vec3 anchor_translation = Vec3::Zero();
  double anchor_articulation = 0.0;

  int frames() const { return static_cast<int>(relative_rotation.size()); }

  /// Per-frame network feature: omega as rotation-6D, v, alpha (10 values).
  MatX features() const;
};

ObjectMotionCanonical world_to_canonical_object(const ObjectSequenceWorld& seq);

/// Re-integrates the motion; rotations are re-orthonormalised every step.
ObjectSequenceWorld integrate_canonical(const ObjectMotionCanonical& motion);

/// Expresses a world hand pose in the object frame (R, D).
HandPose canonicalize_hand(const HandPose& pose, const Mat3& rotation, const Vec3& translation);
HandPose decanonicalize_hand(const HandPose& pose, const Mat3& rotation, const Vec3& translation);

/// Nearest rotation in the Frobenius sense.
Mat3 orthonormalize(const Mat3& m);

}  // namespace dexsynth
