#pragma once

#include <array>
#include <vector>

#include "dexsynth/contact_maps.hpp"

namespace dexsynth {

/// Embedding matching of hand vertices to map points for one frame. Depends
/// only on the table and the maps, so it can be reused across hand poses.
struct ResidualMatch {
  std::array<std::vector<int>, kHands> index;  // j* per hand vertex, -1 when no point qualifies
  std::array<VecX, kHands> weight;             // Phi_emd * C at j*, 0 when unmatched
};

struct ResidualField {
  std::array<Points, kHands> r;  // V x 3 per hand, meters
  std::array<std::vector<int>, kHands> matched_index;
};

/// j* = argmin over points with C > min_contact of ||E_i - E_map^j||; exact
/// ties pick the highest C, then the lowest index.
ResidualMatch match_residual(const EmbeddingTable& table, const ContactFrame& frame, double min_contact = 0.0);

/// r''_i = Phi * C * (h_i - b_j*). An absent hand (empty Points) yields zero rows.
ResidualField compute_residual(const std::array<Points, kHands>& hand_vertices, const ContactFrame& frame,
                               const ResidualMatch& match);
ResidualField compute_residual(const std::array<Points, kHands>& hand_vertices, const EmbeddingTable& table,
                               const ContactFrame& frame, double min_contact = 0.0);

}  // namespace dexsynth
