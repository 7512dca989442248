#include "dexsynth/motion_frames.hpp"

#include <Eigen/SVD>

namespace dexsynth {

void ObjectSequenceWorld::validate() const {
  if (rotation.empty()) throw Error("object sequence has no frames");
  if (translation.size() != rotation.size()) throw Error("object sequence: rotation/translation length mismatch");
  if (!articulation.empty() && articulation.size() != rotation.size()) {
    throw Error("object sequence: articulation length mismatch");
  }
  for (size_t l = 0; l < rotation.size(); ++l) {
    const Mat3& r = rotation[l];
    if (!(r.transpose() * r).isApprox(Mat3::Identity(), 1e-6) || std::abs(r.determinant() - 1.0) > 1e-6) {
      throw Error("object sequence: frame " + std::to_string(l) + " rotation is not orthonormal");
    }
  }
}

Mat3 orthonormalize(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return u * v.transpose();
}

MatX ObjectMotionCanonical::features() const {
  MatX f(frames(), 10);
  for (int l = 0; l < frames(); ++l) {
    f.row(l).segment<6>(0) = matrix_to_rot6d(relative_rotation[l]).transpose();
    f.row(l).segment<3>(6) = velocity[l].transpose();
    f(l, 9) = articulation_velocity[l];
  }
  return f;
}

ObjectMotionCanonical world_to_canonical_object(const ObjectSequenceWorld& seq) {
  seq.validate();
  const int n = seq.frames();
  ObjectMotionCanonical out;
  out.relative_rotation.assign(n, Mat3::Identity());
  out.velocity.assign(n, Vec3::Zero());
  out.articulation_velocity.assign(n, 0.0);
  out.anchor_rotation = seq.rotation[0];
  out.anchor_translation = seq.translation[0];
  out.anchor_articulation = seq.articulation.empty() ? 0.0 : seq.articulation[0];
  for (int l = 1; l < n; ++l) {
    const Mat3 prev_t = seq.rotation[l - 1].transpose();
    out.relative_rotation[l] = prev_t * seq.rotation[l];
    out.velocity[l] = prev_t * (seq.translation[l] - seq.translation[l - 1]);
    if (!seq.articulation.empty()) out.articulation_velocity[l] = seq.articulation[l] - seq.articulation[l - 1];
  }
  return out;
}

ObjectSequenceWorld integrate_canonical(const ObjectMotionCanonical& motion) {
  const int n = motion.frames();
  if (n < 1) throw Error("integrate_canonical: empty motion");
  ObjectSequenceWorld seq;
  seq.rotation.resize(n);
  seq.translation.resize(n);
  seq.articulation.resize(n);
  seq.rotation[0] = motion.anchor_rotation;
  seq.translation[0] = motion.anchor_translation;
  seq.articulation[0] = motion.anchor_articulation;
  for (int l = 1; l < n; ++l) {
    seq.translation[l] = seq.translation[l - 1] + seq.rotation[l - 1] * motion.velocity[l];
    seq.rotation[l] = orthonormalize(seq.rotation[l - 1] * motion.relative_rotation[l]);
    seq.articulation[l] = seq.articulation[l - 1] + motion.articulation_velocity[l];
  }
  return seq;
}

HandPose canonicalize_hand(const HandPose& pose, const Mat3& rotation, const Vec3& translation) {
  HandPose out = pose;
  out.root_rot = matrix_to_rot6d(rotation.transpose() * rot6d_to_matrix(pose.root_rot));
  out.trans = rotation.transpose() * (pose.trans - translation);
  return out;
}

HandPose decanonicalize_hand(const HandPose& pose, const Mat3& rotation, const Vec3& translation) {
  HandPose out = pose;
  out.root_rot = matrix_to_rot6d(rotation * rot6d_to_matrix(pose.root_rot));
  out.trans = rotation * pose.trans + translation;
  return out;
}

}  // namespace dexsynth
