#include "dexsynth/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace dexsynth {

namespace {

constexpr double kMinSeparation = 1e-12;
constexpr double kSigmaFraction = 0.2;

// BCE(p = exp(-delta), y) and its derivative wrt delta.
inline double pair_bce(double delta, double y, double* d_delta) {
  const double sep = std::max(delta, kMinSeparation);
  const double one_minus_p = -std::expm1(-sep);
  double loss = y * sep;
  if (y < 1.0) loss -= (1.0 - y) * std::log(one_minus_p);
  if (d_delta) *d_delta = y - (y < 1.0 ? (1.0 - y) / std::expm1(sep) : 0.0);
  return loss;
}

}  // namespace

Points EmbeddingTable::colors() const {
  Points rgb = Points::Zero(rows(), 3);
  for (int k = 0; k < std::min(3, dim()); ++k) {
    const double lo = values.col(k).minCoeff();
    const double hi = values.col(k).maxCoeff();
    const double span = hi - lo;
    rgb.col(k) = span > 0.0 ? VecX((values.col(k).array() - lo) / span) : VecX::Constant(rows(), 0.5);
  }
  return rgb;
}

MatX gt_similarity(const MatX& geodesic, double sigma_g) {
  if (!(sigma_g > 0.0)) throw Error("gt_similarity: sigma_g must be positive");
  MatX phi = (-geodesic.array().square() / (2.0 * sigma_g * sigma_g)).exp();
  for (Eigen::Index i = 0; i < phi.size(); ++i) {
    if (!std::isfinite(geodesic.data()[i])) phi.data()[i] = 0.0;
  }
  phi.diagonal().setOnes();
  return phi;
}

double emb_similarity(const Eigen::Ref<const VecX>& a, const Eigen::Ref<const VecX>& b) {
  return std::exp(-(a - b).norm());
}

double emb_similarity(const EmbeddingTable& table, int i, int j) {
  return std::exp(-(table.values.row(i) - table.values.row(j)).norm());
}

double default_sigma_g(const MatX& geodesic) { return kSigmaFraction * geodesic.maxCoeff(); }

double embedding_loss(const MatX& embedding, const MatX& target_similarity) {
  const int n = static_cast<int>(embedding.rows());
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      total += pair_bce((embedding.row(i) - embedding.row(j)).norm(), target_similarity(i, j), nullptr);
    }
  }
  const double pairs = 0.5 * n * (n - 1.0);
  return pairs > 0 ? total / pairs : 0.0;
}

EmbeddingFit optimize_embeddings(const MatX& geodesic, const EmbeddingOptions& options) {
  const int n = static_cast<int>(geodesic.rows());
  if (n < 2 || geodesic.cols() != n) throw Error("optimize_embeddings: need a square matrix with V >= 2");
  if (options.dim < 1) throw Error("optimize_embeddings: embedding dimension must be >= 1");
  const double sigma = options.sigma_g > 0.0 ? options.sigma_g : default_sigma_g(geodesic);
  const MatX target = gt_similarity(geodesic, sigma);

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatX emb(n, options.dim);
  for (Eigen::Index i = 0; i < emb.size(); ++i) emb.data()[i] = 0.1 * normal(rng);

  MatX m = MatX::Zero(n, options.dim);
  MatX v = MatX::Zero(n, options.dim);
  MatX grad(n, options.dim);
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  const bool full_batch = n <= options.full_batch_limit;
  std::uniform_int_distribution<int> pick(0, n - 1);

  EmbeddingFit fit;
  fit.initial_loss = embedding_loss(emb, target);
  fit.checkpoint_losses.push_back(fit.initial_loss);

  auto accumulate = [&](int i, int j, double weight) {
    const Eigen::RowVectorXd diff = emb.row(i) - emb.row(j);
    const double delta = diff.norm();
    double d_delta = 0.0;
    pair_bce(delta, target(i, j), &d_delta);
    if (delta < kMinSeparation) return;
    const Eigen::RowVectorXd g = (weight * d_delta / delta) * diff;
    grad.row(i) += g;
    grad.row(j) -= g;
  };

  for (int step = 1; step <= options.steps; ++step) {
    grad.setZero();
    if (full_batch) {
      const double w = 1.0 / (0.5 * n * (n - 1.0));
      for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) accumulate(i, j, w);
      }
    } else {
      const double w = 1.0 / options.minibatch_pairs;
      for (int s = 0; s < options.minibatch_pairs; ++s) {
        int i = pick(rng), j = pick(rng);
        while (j == i) j = pick(rng);
        accumulate(i, j, w);
      }
    }
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(beta1, step);
    const double c2 = 1.0 - std::pow(beta2, step);
    emb.array() -= options.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);

    if (options.checkpoint_every > 0 && (step % options.checkpoint_every == 0 || step == options.steps)) {
      const double loss = embedding_loss(emb, target);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "optimize_embeddings: non-finite loss at step " << step << " (last finite "
            << fit.checkpoint_losses.back() << ", max |E| " << emb.cwiseAbs().maxCoeff() << ")";
        throw Error(msg.str());
      }
      fit.checkpoint_losses.push_back(loss);
    }
  }
  fit.table.values = emb;
  fit.table.sigma_g = sigma;
  fit.final_loss = embedding_loss(emb, target);
  return fit;
}

int nearest_by_embedding(const Eigen::Ref<const VecX>& query, const MatX& rows) {
  if (rows.rows() == 0) throw Error("nearest_by_embedding: empty candidate set");
  if (rows.cols() != query.size()) throw Error("nearest_by_embedding: dimension mismatch");
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int r = 0; r < rows.rows(); ++r) {
    const double d = (rows.row(r).transpose() - query).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = r;
    }
  }
  return best;
}

double spearman_correlation(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("spearman_correlation: need two equal-length samples");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (size_t i = 0; i < order.size();) {
      size_t j = i;
      while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
      for (size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> rx = ranks(x);
  const std::vector<double> ry = ranks(y);
  const Eigen::Map<const VecX> a(rx.data(), rx.size());
  const Eigen::Map<const VecX> b(ry.data(), ry.size());
  const VecX ca = a.array() - a.mean();
  const VecX cb = b.array() - b.mean();
  return ca.dot(cb) / std::sqrt(ca.squaredNorm() * cb.squaredNorm());
}

}  // namespace dexsynth
