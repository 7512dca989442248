#pragma once

#include <cstdint>
#include <vector>

#include "dexsynth/common.hpp"

namespace dexsynth {

/// Per-hand-vertex correspondence embedding (V x d).
struct EmbeddingTable {
  MatX values;         // V x d
  double sigma_g = 0;  // geodesic kernel width used to fit the table

  int rows() const { return static_cast<int>(values.rows()); }
  int dim() const { return static_cast<int>(values.cols()); }

  /// Per-vertex RGB in [0,1]: first three dims min-max normalised.
  Points colors() const;
};

/// Geodesic kernel exp(-G^2 / (2 sigma^2)); non-finite distances map to 0.
MatX gt_similarity(const MatX& geodesic, double sigma_g);

/// exp(-||E_i - E_j||).
double emb_similarity(const EmbeddingTable& table, int i, int j);
double emb_similarity(const Eigen::Ref<const VecX>& a, const Eigen::Ref<const VecX>& b);

/// Default kernel width: a fixed fraction of the geodesic diameter.
double default_sigma_g(const MatX& geodesic);

struct EmbeddingOptions {
  int dim = 3;
  double sigma_g = 0.0;  // <= 0: default_sigma_g
  int steps = 5000;
  double learning_rate = 1e-2;
  std::uint64_t seed = 0;
  int checkpoint_every = 100;
  int minibatch_pairs = 65536;  // used when V > full_batch_limit
  int full_batch_limit = 1000;
};

struct EmbeddingFit {
  EmbeddingTable table;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> checkpoint_losses;  // full loss every checkpoint_every steps
};

/// Mean binary cross-entropy between exp(-||E_i-E_j||) and the geodesic
/// kernel, over ordered pairs i != j.
double embedding_loss(const MatX& embedding, const MatX& target_similarity);

/// Adam on the pairwise BCE. Throws Error when the loss becomes non-finite.
EmbeddingFit optimize_embeddings(const MatX& geodesic, const EmbeddingOptions& options);

/// Row of `rows` closest to `query` in Euclidean distance; lowest index on ties.
int nearest_by_embedding(const Eigen::Ref<const VecX>& query, const MatX& rows);

/// Spearman rank correlation with average ranks for ties.
double spearman_correlation(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace dexsynth
