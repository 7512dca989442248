#pragma once

#include <array>
#include <vector>

#include "dexsynth/contact_maps.hpp"
#include "dexsynth/mesh.hpp"

namespace dexsynth {

/// Voxel overlap of hand and object, cm^3.
double penetration_volume(const TriMesh& hand, const TriMesh& object, double voxel = 0.005);

/// Per-frame hand meshes (empty mesh for an absent hand) and object meshes,
/// all in one common frame.
struct SequenceGeometry {
  std::vector<std::array<TriMesh, kHands>> hands;
  std::vector<TriMesh> objects;

  int frames() const { return static_cast<int>(objects.size()); }
};

/// Per-frame sum over hands of the penetration volume, averaged over frames.
double sequence_penetration(const SequenceGeometry& geometry, double voxel = 0.005);

struct GatedMetric {
  double value = 0.0;  // NaN when count == 0
  int count = 0;       // gated (frame, hand) pairs or contact-region vertices
};

/// Fraction of (frame, hand) pairs with max C above `gate` whose closest hand
/// vertex lies within `contact_tol` of the object (penetrating counts).
GatedMetric valid_contact_ratio(const SequenceGeometry& geometry, const ContactSequence& maps,
                                double contact_tol = 0.005, double gate = 0.8);

/// Contact-region hand vertices of one frame and hand: the embedding-nearest
/// vertex of every map point with C > gate, deduplicated and sorted.
std::vector<int> contact_region(const ContactFrame& frame, int hand, const EmbeddingTable& table, double gate = 0.8);

/// Mean vertex error (cm) over contact regions derived from the GT maps.
/// Vertex arrays are per frame and hand (empty for an absent hand); pairs
/// whose predicted hand is absent are skipped.
GatedMetric v_mpvpe(const std::vector<std::array<Points, kHands>>& pred,
                    const std::vector<std::array<Points, kHands>>& gt, const ContactSequence& gt_maps,
                    const EmbeddingTable& table, double gate = 0.8);

}  // namespace dexsynth
