#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "dexsynth/denoiser.hpp"
#include "dexsynth/losses.hpp"
#include "dexsynth/schedule.hpp"
#include "dexsynth/synthetic.hpp"
#include "dexsynth/toy_hand.hpp"

namespace dexsynth {

struct DataConfig {
  int train_scenes = 20;
  int test_scenes = 5;
  int frames = 120;
  int hand_vertices = 200;
};

struct BpsConfig {
  int points = 512;
  double radius = 0.3;
  std::uint64_t seed = 42;
};

struct ContactConfig {
  double sigma_c = kDefaultContactSigma;
  double mask_full = 0.2;
  double mask_frame = 0.3;
  double clip_threshold = 0.1;
  int clip_margin = 5;
  // Stage-1 embeddings are only supervised where C > 0.5; the stage-2 map
  // condition zeroes them elsewhere and residual matching skips those points.
  double embedding_gate = 0.5;
};

struct EmbeddingConfig {
  int dim = 3;
  double sigma_g = 0.0;  // <= 0: derived from the geodesic diameter
  int steps = 5000;
  double learning_rate = 1e-2;
};

struct DiffusionConfig {
  int steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 2e-2;
  int sample_stride = 1;

  NoiseSchedule schedule() const { return NoiseSchedule::linear(steps, beta_start, beta_end); }
};

struct WindowConfig {
  int length = 120;
  int stride = 60;
};

/// Network and optimiser settings shared by both stages.
struct StageConfig {
  int width = 256;
  int blocks = 4;
  int heads = 4;
  int ff_width = 512;
  int time_dim = 64;
  int condition_hidden = 256;
  int condition_out = 128;
  int pool_width = 64;
  double learning_rate = 1e-4;
  double lr_final_fraction = 1.0;  // cosine decay to this fraction; 1 keeps lr constant
  double clip_norm = 1.0;
  int batch = 32;
  int steps = 300000;
  int log_every = 100;
  int checkpoint_every = 0;  // 0: only the final checkpoint
  int pen_warmup = 250000;   // stage 2 only
  double residual_scale = 50.0;

  DenoiserConfig denoiser(int x_dim, std::vector<int> condition_dims, int pool_in) const;
};

struct EvalConfig {
  double contact_tol = 0.005;
  double gate = 0.8;
  double voxel = 0.005;
};

struct Config {
  DataConfig data;
  BpsConfig bps;
  ContactConfig contact;
  EmbeddingConfig embedding;
  DiffusionConfig diffusion;
  WindowConfig window;
  StageConfig stage1;
  StageConfig stage2;
  LossWeights weights;
  EvalConfig eval;
  SynthOptions synth;
  ToyHandOptions hand;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static Config from_json(const nlohmann::json& j);
  static Config load(const std::filesystem::path& path);
};

}  // namespace dexsynth
