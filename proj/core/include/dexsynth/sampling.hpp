#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "dexsynth/denoiser.hpp"
#include "dexsynth/losses.hpp"
#include "dexsynth/schedule.hpp"

namespace dexsynth {

/// Object-side condition of one window: BPS directions and canonical motion.
struct ObjectWindow {
  MatX bps;     // L x 3n
  MatX motion;  // L x 10
  std::vector<char> valid;

  int frames() const { return static_cast<int>(bps.rows()); }
};

/// Stage-2 condition: object window plus (possibly masked) maps.
struct Stage2Window {
  ObjectWindow object;
  std::vector<ContactFrame> maps;
  std::vector<ResidualMatch> match;  // from `maps`
  std::array<bool, kHands> present{true, true};
};

/// Maps: x is the flattened map sequence; the C columns of the raw network
/// output are logits.
struct Stage1Model {
  Denoiser net;
  FeatureNormalizer bps_norm;
  FeatureNormalizer motion_norm;
  MapLayout layout;

  DenoiserInput make_input(const ObjectWindow& w, const MatX& x_t, int t) const;
  /// Sigmoid on the C columns of a raw output.
  MatX decode(const MatX& raw) const;

  void save(const std::filesystem::path& path, const nlohmann::json& meta) const;
  static Stage1Model load(const std::filesystem::path& path, nlohmann::json* meta = nullptr);
};

/// Poses: x is the normalised L x 198 pose sequence.
struct Stage2Model {
  Denoiser net;
  FeatureNormalizer pose_norm;
  FeatureNormalizer bps_norm;
  FeatureNormalizer motion_norm;
  MapLayout layout;
  EmbeddingTable table;
  double residual_scale = 50.0;
  double embedding_gate = 0.0;  // see ContactConfig::embedding_gate

  /// Poses the hands of z_t, computes r'' against the window's maps and builds
  /// the network input. `residual` receives the per-frame fields when given.
  DenoiserInput make_input(const Stage2Window& w, const MatX& z_t, int t, const std::array<HandRig, kHands>& rigs,
                           std::vector<ResidualField>* residual = nullptr) const;

  void save(const std::filesystem::path& path, const nlohmann::json& meta) const;
  static Stage2Model load(const std::filesystem::path& path, nlohmann::json* meta = nullptr);
};

/// Predicts x0 from (x_t, t).
using X0Predictor = std::function<MatX(const MatX& x_t, int t)>;

/// Reverse DDPM chain from standard normal noise over the strided timesteps.
/// All noise is drawn from one generator seeded with `seed`.
MatX reverse_chain(int rows, int cols, const NoiseSchedule& schedule, std::uint64_t seed, int stride,
                   const X0Predictor& predict, const std::function<void(int t, const MatX& x_t)>& observer = {});

/// Returns L x width maps with C clamped to [0, 1]. `oracle` replaces the network.
MatX sample_stage1(const Stage1Model& model, const ObjectWindow& window, const NoiseSchedule& schedule,
                   std::uint64_t seed, int stride = 1, const X0Predictor* oracle = nullptr);

/// Mean ||r''|| (meters) over the contact region (see contact_region) of the given maps.
double contact_region_residual(const std::vector<ResidualField>& residual, const std::vector<ContactFrame>& maps,
                               const EmbeddingTable& table, double gate = 0.8);

/// Residual-guided reverse chain; returns raw L x 198 poses with absent
/// hands zeroed. `oracle` maps normalised (z_t, t) to a normalised z0.
/// `residual_trace` receives contact_region_residual at every step.
MatX sample_stage2(const Stage2Model& model, const Stage2Window& window, const std::array<HandRig, kHands>& rigs,
                   const NoiseSchedule& schedule, std::uint64_t seed, int stride = 1,
                   const X0Predictor* oracle = nullptr, std::vector<double>* residual_trace = nullptr);

/// Contact frames of a decoded stage-1 output (surface points taken from `points`).
std::vector<ContactFrame> maps_from_matrix(const MatX& maps, const MapLayout& layout,
                                           const std::vector<Points>& surface_points);

}  // namespace dexsynth
