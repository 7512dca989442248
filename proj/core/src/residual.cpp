#include "dexsynth/residual.hpp"

#include <cmath>
#include <limits>

namespace dexsynth {

ResidualMatch match_residual(const EmbeddingTable& table, const ContactFrame& frame, double min_contact) {
  if (table.dim() != frame.dim()) throw Error("match_residual: embedding dimension mismatch");
  const int verts = table.rows();
  ResidualMatch m;
  for (int h = 0; h < kHands; ++h) {
    m.index[h].assign(verts, -1);
    m.weight[h] = VecX::Zero(verts);
    std::vector<int> candidates;
    for (int q = 0; q < frame.points(); ++q) {
      if (frame.contact(q, h) > min_contact) candidates.push_back(q);
    }
    if (candidates.empty()) continue;
    const MatX& emap = frame.embedding[h];
    for (int i = 0; i < verts; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int best_q = -1;
      for (int q : candidates) {
        const double d2 = (table.values.row(i) - emap.row(q)).squaredNorm();
        // Exact embedding ties (points copied from the same hand vertex) go to
        // the strongest contact, then the lowest index.
        if (d2 < best || (d2 == best && frame.contact(q, h) > frame.contact(best_q, h))) {
          best = d2;
          best_q = q;
        }
      }
      m.index[h][i] = best_q;
      m.weight[h][i] = std::exp(-std::sqrt(best)) * frame.contact(best_q, h);
    }
  }
  return m;
}

ResidualField compute_residual(const std::array<Points, kHands>& hand_vertices, const ContactFrame& frame,
                               const ResidualMatch& match) {
  ResidualField out;
  for (int h = 0; h < kHands; ++h) {
    const int verts = static_cast<int>(match.index[h].size());
    out.r[h] = Points::Zero(verts, 3);
    out.matched_index[h] = match.index[h];
    const Points& hv = hand_vertices[h];
    if (hv.rows() == 0) continue;
    if (hv.rows() != verts) throw Error("compute_residual: hand vertex count does not match embedding table");
    for (int i = 0; i < verts; ++i) {
      const int j = match.index[h][i];
      if (j < 0) continue;
      out.r[h].row(i) = match.weight[h][i] * (hv.row(i) - frame.surface_points.row(j));
    }
  }
  return out;
}

ResidualField compute_residual(const std::array<Points, kHands>& hand_vertices, const EmbeddingTable& table,
                               const ContactFrame& frame, double min_contact) {
  return compute_residual(hand_vertices, frame, match_residual(table, frame, min_contact));
}

}  // namespace dexsynth
