#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dexsynth/common.hpp"

namespace dexsynth::nn {

struct Param {
  std::string name;
  MatX value;
  MatX grad;
};

/// Flat owner of every learnable array. Layers refer to params by index.
class ParamStore {
 public:
  int add(std::string name, MatX init);
  Param& operator[](int id) { return params_[static_cast<size_t>(id)]; }
  const Param& operator[](int id) const { return params_[static_cast<size_t>(id)]; }
  std::vector<Param>& all() { return params_; }
  const std::vector<Param>& all() const { return params_; }
  int find(const std::string& name) const;  // -1 when missing

  void zero_grad();
  std::size_t scalar_count() const;
  double grad_norm() const;
  void scale_grad(double factor);

 private:
  std::vector<Param> params_;
};

/// y = x W + b, W: in x out.
struct Linear {
  int w = -1;
  int b = -1;
  int in = 0;
  int out = 0;

  static Linear create(ParamStore& ps, const std::string& name, int in, int out, std::mt19937_64& rng,
                       double gain = 1.0);
  MatX forward(const ParamStore& ps, const MatX& x) const;
  /// Accumulates dW, db; returns dx when need_dx (else an empty matrix).
  MatX backward(ParamStore& ps, const MatX& x, const MatX& dy, bool need_dx = true) const;
};

/// tanh-approximated GELU.
MatX gelu(const MatX& x);
MatX gelu_backward(const MatX& x, const MatX& dy);

/// Normalises each row over its features.
struct LayerNorm {
  int gamma = -1;
  int beta = -1;
  int dim = 0;
  double eps = 1e-5;

  struct Cache {
    MatX xhat;
    VecX inv_std;
  };

  static LayerNorm create(ParamStore& ps, const std::string& name, int dim);
  MatX forward(const ParamStore& ps, const MatX& x, Cache* cache) const;
  MatX backward(ParamStore& ps, const Cache& cache, const MatX& dy) const;
};

/// Two-layer perceptron with GELU between the layers.
struct Mlp {
  Linear l1;
  Linear l2;

  struct Cache {
    MatX x;
    MatX pre;
    MatX hidden;
  };

  static Mlp create(ParamStore& ps, const std::string& name, int in, int hidden, int out, std::mt19937_64& rng);
  MatX forward(const ParamStore& ps, const MatX& x, Cache* cache) const;
  MatX backward(ParamStore& ps, const Cache& cache, const MatX& dy, bool need_dx = true) const;
};

/// Self-attention over rows (tokens). key_valid[j] == 0 hides token j as a key.
struct MultiHeadAttention {
  Linear q;
  Linear k;
  Linear v;
  Linear o;
  int heads = 1;

  struct Cache {
    MatX x;
    MatX q;
    MatX k;
    MatX v;
    MatX concat;
    std::vector<MatX> probs;
  };

  static MultiHeadAttention create(ParamStore& ps, const std::string& name, int width, int heads,
                                   std::mt19937_64& rng);
  MatX forward(const ParamStore& ps, const MatX& x, const std::vector<char>& key_valid, Cache* cache) const;
  MatX backward(ParamStore& ps, const Cache& cache, const MatX& dy) const;
};

/// Pre-norm residual block: x + Attn(LN(x)), then + Mlp(LN(.)).
struct TransformerBlock {
  LayerNorm ln1;
  MultiHeadAttention attn;
  LayerNorm ln2;
  Mlp ff;

  struct Cache {
    LayerNorm::Cache ln1;
    MultiHeadAttention::Cache attn;
    LayerNorm::Cache ln2;
    Mlp::Cache ff;
  };

  static TransformerBlock create(ParamStore& ps, const std::string& name, int width, int heads, int ff_width,
                                 std::mt19937_64& rng);
  MatX forward(const ParamStore& ps, const MatX& x, const std::vector<char>& key_valid, Cache* cache) const;
  MatX backward(ParamStore& ps, const Cache& cache, const MatX& dy) const;
};

/// Sinusoidal features of a scalar position, `dim` values (sin half, cos half).
VecX sinusoidal_embedding(double position, int dim);

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // <= 0 disables global-norm clipping
};

class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}
  /// Applies one update from the accumulated grads; returns the pre-clip grad norm.
  double step(ParamStore& ps);
  long long steps() const { return t_; }
  const AdamOptions& options() const { return options_; }
  void set_learning_rate(double lr) { options_.learning_rate = lr; }

  /// Moment state for checkpointing.
  std::vector<MatX>& first_moments() { return m_; }
  std::vector<MatX>& second_moments() { return v_; }
  void set_steps(long long t) { t_ = t; }

 private:
  AdamOptions options_;
  long long t_ = 0;
  std::vector<MatX> m_;
  std::vector<MatX> v_;
};

}  // namespace dexsynth::nn
