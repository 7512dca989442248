#include "dexsynth/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dexsynth/geometry.hpp"

namespace dexsynth {

double penetration_volume(const TriMesh& hand, const TriMesh& object, double voxel) {
  return intersection_volume(hand, object, voxel);
}

double sequence_penetration(const SequenceGeometry& g, double voxel) {
  if (g.hands.size() != g.objects.size()) throw Error("sequence_penetration: frame count mismatch");
  if (g.objects.empty()) return 0.0;
  double total = 0.0;
  for (int l = 0; l < g.frames(); ++l) {
    for (int h = 0; h < kHands; ++h) {
      if (!g.hands[l][h].empty()) total += penetration_volume(g.hands[l][h], g.objects[l], voxel);
    }
  }
  return total / g.frames();
}

GatedMetric valid_contact_ratio(const SequenceGeometry& g, const ContactSequence& maps, double contact_tol,
                                double gate) {
  if (maps.length() != g.frames() || g.hands.size() != g.objects.size()) {
    throw Error("valid_contact_ratio: maps and geometry must have the same frame count");
  }
  GatedMetric out;
  int hits = 0;
  for (int l = 0; l < g.frames(); ++l) {
    for (int h = 0; h < kHands; ++h) {
      if (maps.frames[l].contact.col(h).maxCoeff() <= gate) continue;
      ++out.count;
      const TriMesh& hand = g.hands[l][h];
      double best = std::numeric_limits<double>::infinity();
      for (int i = 0; i < hand.vertex_count() && best >= contact_tol; ++i) {
        const Vec3 p = hand.vertices.row(i).transpose();
        const double d = point_to_mesh(p, g.objects[l]).distance;
        best = std::min(best, d < contact_tol ? d : (is_inside(p, g.objects[l]) ? -d : d));
      }
      if (best < contact_tol) ++hits;
    }
  }
  out.value = out.count > 0 ? static_cast<double>(hits) / out.count : std::numeric_limits<double>::quiet_NaN();
  return out;
}

std::vector<int> contact_region(const ContactFrame& frame, int hand, const EmbeddingTable& table, double gate) {
  std::vector<int> region;
  for (int q = 0; q < frame.points(); ++q) {
    if (frame.contact(q, hand) > gate) {
      region.push_back(nearest_by_embedding(frame.embedding[hand].row(q).transpose(), table.values));
    }
  }
  std::sort(region.begin(), region.end());
  region.erase(std::unique(region.begin(), region.end()), region.end());
  return region;
}

GatedMetric v_mpvpe(const std::vector<std::array<Points, kHands>>& pred,
                    const std::vector<std::array<Points, kHands>>& gt, const ContactSequence& gt_maps,
                    const EmbeddingTable& table, double gate) {
  if (pred.size() != gt.size() || static_cast<int>(gt.size()) != gt_maps.length()) {
    throw Error("v_mpvpe: prediction, ground truth and maps must have the same frame count");
  }
  GatedMetric out;
  double sum = 0.0;
  for (size_t l = 0; l < gt.size(); ++l) {
    for (int h = 0; h < kHands; ++h) {
      const auto region = contact_region(gt_maps.frames[l], h, table, gate);
      if (region.empty() || pred[l][h].rows() == 0) continue;
      if (gt[l][h].rows() == 0) throw Error("v_mpvpe: contact region on an absent ground-truth hand");
      for (int i : region) {
        sum += (pred[l][h].row(i) - gt[l][h].row(i)).norm();
        ++out.count;
      }
    }
  }
  out.value = out.count > 0 ? 100.0 * sum / out.count : std::numeric_limits<double>::quiet_NaN();
  return out;
}

}  // namespace dexsynth
