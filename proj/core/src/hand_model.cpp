#include "dexsynth/hand_model.hpp"

#include <cmath>

namespace dexsynth {

namespace {
constexpr double kDegenerateNorm = 1e-8;

Vec3 least_aligned_axis(const Vec3& b1) {
  int best = 0;
  for (int k = 1; k < 3; ++k) {
    if (std::abs(b1[k]) < std::abs(b1[best])) best = k;
  }
  return Vec3::Unit(best);
}
}  // namespace

// ---------------------------------------------------------------------------
// Rig

void HandRig::validate() const {
  const int v = vertex_count();
  const int j = joint_count();
  if (j != kJointCount) {
    throw Error("hand rig must have " + std::to_string(kJointCount) + " joints, got " +
                std::to_string(j));
  }
  if (parent_index[0] != -1) throw Error("hand rig: joint 0 must be the root");
  for (int k = 1; k < j; ++k) {
    if (parent_index[k] < 0 || parent_index[k] >= k) {
      throw Error("hand rig: parent of joint " + std::to_string(k) +
                  " must precede it (tree rooted at 0)");
    }
  }
  if (joint_rest_positions.rows() != j) throw Error("hand rig: joint rest positions size");
  if (skin_weights.rows() != v || skin_weights.cols() != j) {
    throw Error("hand rig: skin weights must be V x J");
  }
  for (int r = 0; r < v; ++r) {
    if ((skin_weights.row(r).array() < 0.0).any()) {
      throw Error("hand rig: negative skin weight at vertex " + std::to_string(r));
    }
    if (std::abs(skin_weights.row(r).sum() - 1.0) > 1e-6) {
      throw Error("hand rig: skin weights of vertex " + std::to_string(r) +
                  " do not sum to 1");
    }
  }
  if (faces.size() > 0 && (faces.minCoeff() < 0 || faces.maxCoeff() >= v)) {
    throw Error("hand rig: face index out of range");
  }
}

HandRig HandRig::mirrored() const {
  HandRig out = *this;
  out.template_vertices.col(0) *= -1.0;
  out.joint_rest_positions.col(0) *= -1.0;
  out.palm_normal.x() *= -1.0;
  const Eigen::VectorXi second = out.faces.col(1);
  out.faces.col(1) = out.faces.col(2);
  out.faces.col(2) = second;
  return out;
}

// ---------------------------------------------------------------------------
// Pose layout

HandPose HandPose::zero() {
  HandPose p;
  p.root_rot.setZero();
  for (auto& r : p.joint_rots) r.setZero();
  return p;
}

Eigen::Matrix<double, kPoseDim, 1> HandPose::flatten() const {
  Eigen::Matrix<double, kPoseDim, 1> v;
  v.segment<3>(0) = trans;
  v.segment<6>(3) = root_rot;
  for (int k = 0; k < kFingerJoints; ++k) v.segment<6>(9 + 6 * k) = joint_rots[k];
  return v;
}

HandPose HandPose::unflatten(std::span<const double> values) {
  if (values.size() != kPoseDim) {
    throw Error("hand pose vector must have length 99, got " + std::to_string(values.size()));
  }
  HandPose p;
  p.trans = Vec3(values[0], values[1], values[2]);
  for (int i = 0; i < 6; ++i) p.root_rot[i] = values[3 + i];
  for (int k = 0; k < kFingerJoints; ++k) {
    for (int i = 0; i < 6; ++i) p.joint_rots[k][i] = values[9 + 6 * k + i];
  }
  return p;
}

VecX flatten_pose(const BimanualPose& pose) {
  VecX v(kBimanualPoseDim);
  for (int h = 0; h < kHands; ++h) v.segment<kPoseDim>(h * kPoseDim) = pose.hands[h].flatten();
  return v;
}

BimanualPose unflatten_pose(std::span<const double> values) {
  if (values.size() != kBimanualPoseDim) {
    throw Error("bimanual pose vector must have length 198, got " +
                std::to_string(values.size()));
  }
  BimanualPose p;
  for (int h = 0; h < kHands; ++h) {
    p.hands[h] = HandPose::unflatten(values.subspan(h * kPoseDim, kPoseDim));
  }
  return p;
}

// ---------------------------------------------------------------------------
// Rotation 6D

Mat3 rot6d_to_matrix(const Vec6& r) {
  const Vec3 a1 = r.head<3>();
  const Vec3 a2 = r.tail<3>();
  const double n1 = a1.norm();
  const Vec3 b1 = n1 < kDegenerateNorm ? Vec3::UnitX() : Vec3(a1 / n1);
  Vec3 u = a2 - b1.dot(a2) * b1;
  double nu = u.norm();
  if (nu < kDegenerateNorm) {
    const Vec3 axis = least_aligned_axis(b1);
    u = axis - b1.dot(axis) * b1;
    nu = u.norm();
  }
  const Vec3 b2 = u / nu;
  Mat3 m;
  m.col(0) = b1;
  m.col(1) = b2;
  m.col(2) = b1.cross(b2);
  return m;
}

Vec6 matrix_to_rot6d(const Mat3& rotation) {
  Vec6 r;
  r.head<3>() = rotation.col(0);
  r.tail<3>() = rotation.col(1);
  return r;
}

Vec6 rot6d_to_matrix_backward(const Vec6& r, const Mat3& grad_rotation) {
  const Vec3 a1 = r.head<3>();
  const Vec3 a2 = r.tail<3>();
  const double n1 = a1.norm();
  const bool first_degenerate = n1 < kDegenerateNorm;
  const Vec3 b1 = first_degenerate ? Vec3::UnitX() : Vec3(a1 / n1);
  Vec3 u = a2 - b1.dot(a2) * b1;
  double nu = u.norm();
  const bool second_degenerate = nu < kDegenerateNorm;
  if (second_degenerate) {
    const Vec3 axis = least_aligned_axis(b1);
    u = axis - b1.dot(axis) * b1;
    nu = u.norm();
  }
  const Vec3 b2 = u / nu;

  Vec3 g_b1 = grad_rotation.col(0);
  Vec3 g_b2 = grad_rotation.col(1);
  const Vec3 g_b3 = grad_rotation.col(2);
  // b3 = b1 x b2
  g_b1 += b2.cross(g_b3);
  g_b2 += g_b3.cross(b1);

  Vec6 grad = Vec6::Zero();
  const Vec3 g_u = (g_b2 - b2 * b2.dot(g_b2)) / nu;
  if (!second_degenerate) {
    // u = a2 - (b1 . a2) b1
    grad.tail<3>() = g_u - b1 * b1.dot(g_u);
    g_b1 -= b1.dot(a2) * g_u + a2 * b1.dot(g_u);
  } else {
    const Vec3 axis = least_aligned_axis(b1);
    g_b1 -= b1.dot(axis) * g_u + axis * b1.dot(g_u);
  }
  if (!first_degenerate) grad.head<3>() = (g_b1 - b1 * b1.dot(g_b1)) / n1;
  return grad;
}

// ---------------------------------------------------------------------------
// Forward kinematics

FkResult forward_kinematics(const HandRig& rig, const HandPose& pose) {
  const int nj = rig.joint_count();
  FkResult out;
  out.local.resize(nj);
  out.global.resize(nj);
  out.joints.resize(nj, 3);

  out.local[0] = rot6d_to_matrix(pose.root_rot);
  out.global[0] = out.local[0];
  out.joints.row(0) = (out.global[0] * rig.joint_rest_positions.row(0).transpose() + pose.trans)
                          .transpose();
  for (int j = 1; j < nj; ++j) {
    const int p = rig.parent_index[j];
    out.local[j] = rot6d_to_matrix(pose.joint_rots[j - 1]);
    out.global[j] = out.global[p] * out.local[j];
    const Vec3 bone = (rig.joint_rest_positions.row(j) - rig.joint_rest_positions.row(p)).transpose();
    out.joints.row(j) = out.joints.row(p) + (out.global[p] * bone).transpose();
  }

  const int nv = rig.vertex_count();
  out.vertices.setZero(nv, 3);
  for (int v = 0; v < nv; ++v) {
    const Vec3 x = rig.template_vertices.row(v).transpose();
    Vec3 acc = Vec3::Zero();
    for (int j = 0; j < nj; ++j) {
      const double w = rig.skin_weights(v, j);
      if (w == 0.0) continue;
      const Vec3 local = x - rig.joint_rest_positions.row(j).transpose();
      acc += w * (out.global[j] * local + out.joints.row(j).transpose());
    }
    out.vertices.row(v) = acc.transpose();
  }
  return out;
}

Eigen::Matrix<double, kPoseDim, 1> forward_kinematics_backward(
    const HandRig& rig, const HandPose& pose, const FkResult& fk,
    const Points& grad_vertices, const Points& grad_joints) {
  const int nj = rig.joint_count();
  std::vector<Mat3> g_global(nj, Mat3::Zero());
  Points g_joint = Points::Zero(nj, 3);
  if (grad_joints.rows() == nj) g_joint = grad_joints;

  if (grad_vertices.rows() == rig.vertex_count()) {
    for (int v = 0; v < rig.vertex_count(); ++v) {
      const Vec3 g = grad_vertices.row(v).transpose();
      if (g.isZero(0.0)) continue;
      const Vec3 x = rig.template_vertices.row(v).transpose();
      for (int j = 0; j < nj; ++j) {
        const double w = rig.skin_weights(v, j);
        if (w == 0.0) continue;
        const Vec3 local = x - rig.joint_rest_positions.row(j).transpose();
        g_global[j] += w * g * local.transpose();
        g_joint.row(j) += w * g.transpose();
      }
    }
  }

  Eigen::Matrix<double, kPoseDim, 1> grad = Eigen::Matrix<double, kPoseDim, 1>::Zero();
  for (int j = nj - 1; j >= 1; --j) {
    const int p = rig.parent_index[j];
    const Vec3 bone = (rig.joint_rest_positions.row(j) - rig.joint_rest_positions.row(p)).transpose();
    // global[j] = global[p] * local[j]
    g_global[p] += g_global[j] * fk.local[j].transpose();
    const Mat3 g_local = fk.global[p].transpose() * g_global[j];
    // joints[j] = joints[p] + global[p] * bone
    g_joint.row(p) += g_joint.row(j);
    g_global[p] += g_joint.row(j).transpose() * bone.transpose();
    grad.segment<6>(9 + 6 * (j - 1)) = rot6d_to_matrix_backward(pose.joint_rots[j - 1], g_local);
  }
  // joints[0] = global[0] * rest[0] + trans
  g_global[0] += g_joint.row(0).transpose() * rig.joint_rest_positions.row(0);
  grad.segment<3>(0) = g_joint.row(0).transpose();
  grad.segment<6>(3) = rot6d_to_matrix_backward(pose.root_rot, g_global[0]);
  return grad;
}

}  // namespace dexsynth
