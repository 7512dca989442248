#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "dexsynth/embedding.hpp"

namespace dexsynth {

constexpr double kDefaultContactSigma = 0.02;  // meters

/// Gaussian contact kernel exp(-d^2 / (2 sigma^2)).
double distance_to_prob(double distance, double sigma_c);

/// Inverse kernel sqrt(-2 sigma^2 log p). Probabilities <= 0 are clamped to
/// 1e-8 and reported through `clamped`.
double prob_to_distance(double probability, double sigma_c, bool* clamped = nullptr);

/// Contact and correspondence maps of one frame.
struct ContactFrame {
  Points surface_points;                 // n x 3
  MatX contact;                          // n x 2 (left, right), in [0, 1]
  std::array<MatX, kHands> embedding;    // per hand n x d
  std::array<std::vector<int>, kHands> nearest_vertex;  // GT construction only

  int points() const { return static_cast<int>(surface_points.rows()); }
  int dim() const { return static_cast<int>(embedding[0].cols()); }

  static ContactFrame zeros(const Points& surface_points, int dim);
  void clear_maps();
  /// Zeroes the embedding rows of points with C <= gate, per hand.
  void gate_embeddings(double gate);

  /// Network layout: point-major, then hand, then [C, E_0 .. E_{d-1}].
  VecX flatten() const;
  void assign_flat(const Eigen::Ref<const VecX>& values);
};

struct ContactSequence {
  std::vector<ContactFrame> frames;
  double sigma_c = kDefaultContactSigma;

  int length() const { return static_cast<int>(frames.size()); }
  int points() const { return frames.empty() ? 0 : frames[0].points(); }
  int dim() const { return frames.empty() ? 0 : frames[0].dim(); }
  void validate() const;

  /// L x (n * 2 * (1 + d)).
  MatX flatten() const;
};

/// Per frame: surface points of the object and posed hand vertices (empty
/// Points for an absent hand).
struct ContactScene {
  std::vector<Points> surface_points;
  std::vector<std::array<Points, kHands>> hand_vertices;
};

/// Nearest-hand-vertex maps: C from the distance kernel, E from the
/// nearest vertex's embedding. Absent hands give zero rows.
ContactSequence build_gt_maps(const ContactScene& scene, const EmbeddingTable& table, double sigma_c);

struct MaskResult {
  ContactSequence maps;
  bool fully_masked = false;
  std::vector<int> masked_frames;  // sorted
};

/// Training augmentation: with probability full_p zero everything, otherwise
/// zero round(frame_p * L) distinct frames.
MaskResult mask_maps(const ContactSequence& seq, double full_p, double frame_p, std::uint64_t seed);

void write_contact_sequence(const std::filesystem::path& path, const ContactSequence& seq);
ContactSequence read_contact_sequence(const std::filesystem::path& path);

}  // namespace dexsynth
