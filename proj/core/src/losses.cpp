#include "dexsynth/losses.hpp"

#include <algorithm>
#include <cmath>

namespace dexsynth {

namespace {

constexpr double kProbEps = 1e-7;

bool row_valid(const std::vector<char>& valid, int l) { return valid.empty() || valid[l] != 0; }

}  // namespace

void LossWeights::validate() const {
  for (double w : {contact, embedding, data, pen, joints, vel, att, consist}) {
    if (!(w >= 0.0)) throw Error("loss weights must be non-negative");
  }
}

nlohmann::json LossWeights::to_json() const {
  return {{"contact", contact}, {"embedding", embedding}, {"data", data}, {"pen", pen},
          {"joints", joints},   {"vel", vel},             {"att", att},   {"consist", consist}};
}

LossWeights LossWeights::from_json(const nlohmann::json& j, const LossWeights& d) {
  LossWeights w;
  w.contact = j.value("contact", d.contact);
  w.embedding = j.value("embedding", d.embedding);
  w.data = j.value("data", d.data);
  w.pen = j.value("pen", d.pen);
  w.joints = j.value("joints", d.joints);
  w.vel = j.value("vel", d.vel);
  w.att = j.value("att", d.att);
  w.consist = j.value("consist", d.consist);
  w.validate();
  return w;
}

LossWeights LossWeights::from_json(const nlohmann::json& j) { return from_json(j, LossWeights{}); }

Stage1Loss stage1_loss(const MatX& pred, const MatX& gt, const MapLayout& layout, const LossWeights& weights,
                       const std::vector<char>& valid, MatX* grad) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols() || pred.cols() != layout.width()) {
    throw Error("stage1_loss: pred/gt shapes do not match the map layout");
  }
  if (!valid.empty() && static_cast<Eigen::Index>(valid.size()) != pred.rows()) {
    throw Error("stage1_loss: mask length mismatch");
  }
  const int frames = static_cast<int>(pred.rows());
  int valid_frames = 0;
  for (int l = 0; l < frames; ++l) valid_frames += row_valid(valid, l) ? 1 : 0;
  long gated = 0;
  for (int l = 0; l < frames; ++l) {
    if (!row_valid(valid, l)) continue;
    for (int q = 0; q < layout.points; ++q) {
      for (int h = 0; h < kHands; ++h) gated += gt(l, layout.column(q, h, 0)) > 0.5 ? 1 : 0;
    }
  }
  const double n_contact = static_cast<double>(valid_frames) * layout.points * kHands;
  if (grad) *grad = MatX::Zero(pred.rows(), pred.cols());

  Stage1Loss out;
  for (int l = 0; l < frames; ++l) {
    if (!row_valid(valid, l)) continue;
    for (int q = 0; q < layout.points; ++q) {
      for (int h = 0; h < kHands; ++h) {
        const int c = layout.column(q, h, 0);
        const double target = gt(l, c);
        const double p = std::clamp(pred(l, c), kProbEps, 1.0 - kProbEps);
        out.contact -= target * std::log(p) + (1.0 - target) * std::log(1.0 - p);
        if (grad) (*grad)(l, c) = weights.contact * (pred(l, c) - target) / n_contact;
        if (target <= 0.5) continue;
        for (int k = 1; k <= layout.dim; ++k) {
          const double diff = pred(l, c + k) - gt(l, c + k);
          out.embedding += diff * diff;
          if (grad) (*grad)(l, c + k) = weights.embedding * 2.0 * diff / static_cast<double>(gated);
        }
      }
    }
  }
  if (n_contact > 0) out.contact /= n_contact;
  if (gated > 0) out.embedding /= static_cast<double>(gated);
  out.total = weights.contact * out.contact + weights.embedding * out.embedding;
  return out;
}

std::array<std::vector<int>, kHands> consistency_match(const EmbeddingTable& table, const ContactFrame& frame) {
  std::array<std::vector<int>, kHands> out;
  for (int h = 0; h < kHands; ++h) {
    out[h].assign(frame.points(), -1);
    for (int q = 0; q < frame.points(); ++q) {
      if (frame.contact(q, h) > 0.0) out[h][q] = nearest_by_embedding(frame.embedding[h].row(q).transpose(), table.values);
    }
  }
  return out;
}

Stage2Loss stage2_loss(const MatX& pred, const Stage2Target& target, const LossWeights& weights, bool with_pen,
                       MatX* grad) {
  const int frames = target.frames();
  if (pred.rows() != frames || pred.cols() != kBimanualPoseDim) throw Error("stage2_loss: prediction must be L x 198");
  if (!target.rigs) throw Error("stage2_loss: rigs missing");
  if (with_pen && !target.sdf) throw Error("stage2_loss: penetration requested without an object SDF");

  int valid_frames = 0;
  for (int l = 0; l < frames; ++l) valid_frames += target.frame_valid(l) ? 1 : 0;
  int hands = 0;
  for (bool p : target.present) hands += p ? 1 : 0;
  int vel_pairs = 0;
  for (int l = 1; l < frames; ++l) vel_pairs += target.frame_valid(l) && target.frame_valid(l - 1) ? 1 : 0;

  Stage2Loss out;
  if (grad) *grad = MatX::Zero(frames, kBimanualPoseDim);
  if (hands == 0 || valid_frames == 0) return out;

  const double n_items = static_cast<double>(valid_frames) * hands;
  const double n_data = n_items * kPoseDim;
  const int joints_per_hand = (*target.rigs)[1].joint_count();
  const int verts = (*target.rigs)[1].vertex_count();
  const double n_joints = n_items * joints_per_hand;
  const double n_vel = static_cast<double>(vel_pairs) * hands * joints_per_hand;
  const double n_verts = n_items * verts;
  const int n_points = target.maps.empty() ? 0 : target.maps[0].points();
  const double n_consist = n_items * std::max(n_points, 1);

  std::vector<std::array<FkResult, kHands>> fk(frames);
  std::vector<std::array<HandPose, kHands>> poses(frames);
  std::vector<std::array<Points, kHands>> g_vert(frames);
  std::vector<std::array<Points, kHands>> g_joint(frames);
  for (int l = 0; l < frames; ++l) {
    if (!target.frame_valid(l)) continue;
    for (int h = 0; h < kHands; ++h) {
      if (!target.present[h]) continue;
      const HandRig& rig = (*target.rigs)[h];
      poses[l][h] = HandPose::unflatten(std::span<const double>(pred.row(l).data() + h * kPoseDim, kPoseDim));
      fk[l][h] = forward_kinematics(rig, poses[l][h]);
      g_vert[l][h] = Points::Zero(rig.vertex_count(), 3);
      g_joint[l][h] = Points::Zero(rig.joint_count(), 3);
    }
  }

  for (int l = 0; l < frames; ++l) {
    if (!target.frame_valid(l)) continue;
    for (int h = 0; h < kHands; ++h) {
      if (!target.present[h]) continue;
      // Parameters.
      for (int k = 0; k < kPoseDim; ++k) {
        const int c = h * kPoseDim + k;
        const double diff = pred(l, c) - target.gt_pose(l, c);
        out.data += std::abs(diff);
        if (grad) (*grad)(l, c) += weights.data * (diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0)) / n_data;
      }
      // Joints.
      const Points dj = fk[l][h].joints - target.gt_joints[l][h];
      out.joints += dj.squaredNorm();
      g_joint[l][h] += weights.joints * 2.0 / n_joints * dj;
      // Velocity.
      if (l > 0 && target.frame_valid(l - 1)) {
        const Points dv = (fk[l][h].joints - fk[l - 1][h].joints) - (target.gt_joints[l][h] - target.gt_joints[l - 1][h]);
        out.vel += dv.squaredNorm();
        g_joint[l][h] += weights.vel * 2.0 / n_vel * dv;
        g_joint[l - 1][h] -= weights.vel * 2.0 / n_vel * dv;
      }
      // Attraction, weighted by the residual matching.
      if (!target.match.empty()) {
        const VecX& w = target.match[l].weight[h];
        const Points dvtx = fk[l][h].vertices - target.gt_vertices[l][h];
        for (int i = 0; i < verts; ++i) {
          if (w[i] == 0.0) continue;
          out.att += w[i] * dvtx.row(i).squaredNorm();
          g_vert[l][h].row(i) += weights.att * 2.0 * w[i] / n_verts * dvtx.row(i);
        }
      }
      // Distance consistency with the contact map.
      if (!target.consist.empty()) {
        const ContactFrame& f = target.maps[l];
        for (int q = 0; q < f.points(); ++q) {
          const int i = target.consist[l][h][q];
          if (i < 0) continue;
          const double c = f.contact(q, h);
          const Eigen::RowVector3d diff = fk[l][h].vertices.row(i) - f.surface_points.row(q);
          const double dist = diff.norm();
          const double e = dist - prob_to_distance(c, target.sigma_c);
          out.consist += c * e * e;
          if (dist > 0.0) g_vert[l][h].row(i) += weights.consist * 2.0 * c * e / n_consist * diff / dist;
        }
      }
      // Penetration hinge.
      if (with_pen) {
        double pen = 0.0;
        const double angle = target.articulation.empty() ? 0.0 : target.articulation[l];
        for (int i = 0; i < verts; ++i) {
          Vec3 g;
          const double sd = target.sdf->evaluate(fk[l][h].vertices.row(i).transpose(), angle, &g);
          if (sd < 0.0) {
            pen -= sd;
            g_vert[l][h].row(i) -= weights.pen / n_items * g.transpose();
          }
        }
        out.pen += pen;
      }
    }
  }
  out.data /= n_data;
  out.joints /= n_joints;
  if (n_vel > 0) out.vel /= n_vel;
  out.att /= n_verts;
  out.consist /= n_consist;
  out.pen /= n_items;
  out.total = weights.data * out.data + weights.joints * out.joints + weights.vel * out.vel + weights.att * out.att +
              weights.consist * out.consist + (with_pen ? weights.pen * out.pen : 0.0);

  if (grad) {
    for (int l = 0; l < frames; ++l) {
      if (!target.frame_valid(l)) continue;
      for (int h = 0; h < kHands; ++h) {
        if (!target.present[h]) continue;
        const auto g = forward_kinematics_backward((*target.rigs)[h], poses[l][h], fk[l][h], g_vert[l][h], g_joint[l][h]);
        grad->row(l).segment(h * kPoseDim, kPoseDim) += g.transpose();
      }
    }
  }
  return out;
}

}  // namespace dexsynth
