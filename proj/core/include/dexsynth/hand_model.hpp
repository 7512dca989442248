#pragma once

#include <array>
#include <span>
#include <vector>

#include "dexsynth/common.hpp"

namespace dexsynth {

constexpr int kJointCount = 16;   // root + 15 articulated joints
constexpr int kFingerJoints = 15;
constexpr int kPoseDim = 3 + 6 + 6 * kFingerJoints;  // 99
constexpr int kBimanualPoseDim = kHands * kPoseDim;  // 198

/// Rigged template hand: mesh, skeleton and linear blend skinning weights.
///
/// Joint 0 is the root. Parents always precede their children, so a single
/// forward pass over joint indices visits the tree top-down.
struct HandRig {
  Points template_vertices;            // V x 3, meters
  Eigen::MatrixX3i faces;              // F x 3
  std::vector<int> parent_index;       // J entries, parent_index[0] == -1
  Points joint_rest_positions;         // J x 3
  MatX skin_weights;                   // V x J, rows sum to 1
  Vec3 palm_normal{0.0, 0.0, -1.0};    // contact side of the palm, rest frame

  int vertex_count() const { return static_cast<int>(template_vertices.rows()); }
  int joint_count() const { return static_cast<int>(parent_index.size()); }

  /// Throws Error when an invariant (tree, weights, face indices) is broken.
  void validate() const;

  /// Left-hand counterpart: x-negated geometry with reversed face winding.
  HandRig mirrored() const;
};

struct HandPose {
  Vec3 trans = Vec3::Zero();
  Vec6 root_rot = identity_rot6d();
  std::array<Vec6, kFingerJoints> joint_rots = filled_identity();

  static Vec6 identity_rot6d() {
    Vec6 r;
    r << 1, 0, 0, 0, 1, 0;
    return r;
  }
  static HandPose zero();

  Eigen::Matrix<double, kPoseDim, 1> flatten() const;
  static HandPose unflatten(std::span<const double> values);

 private:
  static std::array<Vec6, kFingerJoints> filled_identity() {
    std::array<Vec6, kFingerJoints> a;
    a.fill(identity_rot6d());
    return a;
  }
};

struct BimanualPose {
  std::array<HandPose, kHands> hands{HandPose::zero(), HandPose::zero()};
  std::array<bool, kHands> present{false, false};

  HandPose& left() { return hands[0]; }
  HandPose& right() { return hands[1]; }
  const HandPose& left() const { return hands[0]; }
  const HandPose& right() const { return hands[1]; }
};

/// Layout: per hand trans | root_rot | joint_rots, left then right.
VecX flatten_pose(const BimanualPose& pose);
BimanualPose unflatten_pose(std::span<const double> values);

// Rotation-6D conversion. The first three entries are the first column of
// the rotation matrix, the last three the second column.
Mat3 rot6d_to_matrix(const Vec6& r);
Vec6 matrix_to_rot6d(const Mat3& rotation);

/// Reverse-mode derivative of rot6d_to_matrix: d(loss)/d(r) given d(loss)/d(R).
Vec6 rot6d_to_matrix_backward(const Vec6& r, const Mat3& grad_rotation);

/// Posed hand together with the per-joint transforms needed for backprop.
struct FkResult {
  Points vertices;                  // V x 3
  Points joints;                    // J x 3
  std::vector<Mat3> local;          // per-joint local rotation (root: root_rot)
  std::vector<Mat3> global;         // per-joint accumulated rotation
};

/// Skeleton propagation followed by linear blend skinning.
///
/// The root rotation acts about the rig origin and the translation is added
/// afterwards, so a rigid change of frame (Q, t) applied to (root_rot, trans)
/// moves every output point by x -> Q x + t.
FkResult forward_kinematics(const HandRig& rig, const HandPose& pose);

/// Gradient of a scalar loss wrt the 99 pose parameters, given its
/// gradients wrt FK vertices and joints. Either gradient may be empty.
Eigen::Matrix<double, kPoseDim, 1> forward_kinematics_backward(
    const HandRig& rig, const HandPose& pose, const FkResult& fk,
    const Points& grad_vertices, const Points& grad_joints);

}  // namespace dexsynth
