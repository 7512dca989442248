#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "dexsynth/nn.hpp"

namespace dexsynth {

struct DenoiserConfig {
  int x_dim = 0;
  std::vector<int> condition_dims;  // per-frame width of each condition group
  int condition_hidden = 64;
  int condition_out = 64;
  int pool_in = 0;  // per-vertex pooled feature width; 0 disables the pooled branch
  int pool_width = 64;
  int width = 64;
  int blocks = 4;
  int heads = 4;
  int ff_width = 128;
  int time_dim = 32;

  void validate() const;
  nlohmann::json to_json() const;
  static DenoiserConfig from_json(const nlohmann::json& j);
};

/// One sequence item. Conditions are already normalised network features.
struct DenoiserInput {
  MatX x;                       // L x x_dim
  int t = 1;
  std::vector<MatX> conditions; // one L x condition_dims[g] per group
  MatX pool;                    // (L * 2 * pool_vertices) x pool_in; frame, hand, vertex order
  int pool_vertices = 0;
  std::vector<char> valid;      // L frame validity (key mask); empty = all valid

  int frames() const { return static_cast<int>(x.rows()); }
};

struct DenoiserTape {
  std::vector<nn::Mlp::Cache> conditions;
  MatX pool_pre;
  MatX tokens;
  std::vector<nn::TransformerBlock::Cache> blocks;
  nn::LayerNorm::Cache out_norm;
  MatX out_hidden;
};

/// Frame-token transformer: per frame [x_t, encoded conditions, pooled
/// features, t embedding] -> width -> pre-norm attention blocks over frames ->
/// projection back to x_dim.
class Denoiser {
 public:
  Denoiser() = default;
  Denoiser(DenoiserConfig config, std::uint64_t seed);

  MatX forward(const DenoiserInput& in, DenoiserTape* tape = nullptr) const;
  /// Accumulates parameter gradients for d(loss)/d(output).
  void backward(const DenoiserInput& in, const DenoiserTape& tape, const MatX& d_out);

  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  const DenoiserConfig& config() const { return config_; }

  /// Parameters plus `meta` (and the config under "denoiser") in one array file.
  void save(const std::filesystem::path& path, const nlohmann::json& meta) const;
  static Denoiser load(const std::filesystem::path& path, nlohmann::json* meta = nullptr);

 private:
  void check_input(const DenoiserInput& in) const;

  DenoiserConfig config_;
  nn::ParamStore params_;
  std::vector<nn::Mlp> condition_encoders_;
  nn::Linear pool_proj_;
  nn::Linear in_proj_;
  std::vector<nn::TransformerBlock> blocks_;
  nn::LayerNorm out_norm_;
  nn::Linear out_proj_;
};

/// Per-feature affine normaliser; std entries below `floor` are raised to it.
struct FeatureNormalizer {
  VecX mean;
  VecX std;

  static FeatureNormalizer fit(const std::vector<MatX>& blocks, double floor = 1e-3);
  static FeatureNormalizer identity(int dim);
  MatX apply(const MatX& x) const;
  MatX invert(const MatX& z) const;
  int dim() const { return static_cast<int>(mean.size()); }

  nlohmann::json to_json() const;
  static FeatureNormalizer from_json(const nlohmann::json& j);
};

}  // namespace dexsynth
