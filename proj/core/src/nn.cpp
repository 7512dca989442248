#include "dexsynth/nn.hpp"

#include <cmath>

namespace dexsynth::nn {

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

MatX random_normal(int rows, int cols, double std, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std);
  MatX m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace

int ParamStore::add(std::string name, MatX init) {
  if (find(name) >= 0) throw Error("duplicate parameter name '" + name + "'");
  Param p;
  p.name = std::move(name);
  p.grad = MatX::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  params_.push_back(std::move(p));
  return static_cast<int>(params_.size()) - 1;
}

int ParamStore::find(const std::string& name) const {
  for (size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

double ParamStore::grad_norm() const {
  double s = 0.0;
  for (const auto& p : params_) s += p.grad.squaredNorm();
  return std::sqrt(s);
}

void ParamStore::scale_grad(double factor) {
  for (auto& p : params_) p.grad *= factor;
}

Linear Linear::create(ParamStore& ps, const std::string& name, int in, int out, std::mt19937_64& rng, double gain) {
  Linear l;
  l.in = in;
  l.out = out;
  l.w = ps.add(name + ".w", random_normal(in, out, gain / std::sqrt(static_cast<double>(std::max(in, 1))), rng));
  l.b = ps.add(name + ".b", MatX::Zero(1, out));
  return l;
}

MatX Linear::forward(const ParamStore& ps, const MatX& x) const {
  if (x.cols() != in) {
    throw Error("linear layer '" + ps[w].name + "': expected " + std::to_string(in) + " inputs, got " +
                std::to_string(x.cols()));
  }
  MatX y = x * ps[w].value;
  y.rowwise() += ps[b].value.row(0);
  return y;
}

MatX Linear::backward(ParamStore& ps, const MatX& x, const MatX& dy, bool need_dx) const {
  ps[w].grad.noalias() += x.transpose() * dy;
  ps[b].grad.row(0) += dy.colwise().sum();
  if (!need_dx) return MatX();
  return dy * ps[w].value.transpose();
}

MatX gelu(const MatX& x) {
  return x.unaryExpr([](double v) {
    return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  });
}

MatX gelu_backward(const MatX& x, const MatX& dy) {
  MatX dx(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    const double th = std::tanh(kGeluC * (v + kGeluA * v * v * v));
    const double d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
    dx.data()[i] = d * dy.data()[i];
  }
  return dx;
}

LayerNorm LayerNorm::create(ParamStore& ps, const std::string& name, int dim) {
  LayerNorm ln;
  ln.dim = dim;
  ln.gamma = ps.add(name + ".gamma", MatX::Ones(1, dim));
  ln.beta = ps.add(name + ".beta", MatX::Zero(1, dim));
  return ln;
}

MatX LayerNorm::forward(const ParamStore& ps, const MatX& x, Cache* cache) const {
  const Eigen::Index n = x.rows();
  MatX xhat(n, dim);
  VecX inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mean) * inv_std[r];
  }
  MatX y = xhat.array().rowwise() * ps[gamma].value.row(0).array();
  y.rowwise() += ps[beta].value.row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

MatX LayerNorm::backward(ParamStore& ps, const Cache& cache, const MatX& dy) const {
  ps[gamma].grad.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  ps[beta].grad.row(0) += dy.colwise().sum();
  const MatX dxhat = dy.array().rowwise() * ps[gamma].value.row(0).array();
  MatX dx(dy.rows(), dy.cols());
  const double inv_d = 1.0 / dim;
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double s1 = dxhat.row(r).sum();
    const double s2 = dxhat.row(r).dot(cache.xhat.row(r));
    dx.row(r) = cache.inv_std[r] * inv_d *
                (dim * dxhat.row(r).array() - s1 - cache.xhat.row(r).array() * s2);
  }
  return dx;
}

Mlp Mlp::create(ParamStore& ps, const std::string& name, int in, int hidden, int out, std::mt19937_64& rng) {
  Mlp m;
  m.l1 = Linear::create(ps, name + ".l1", in, hidden, rng);
  m.l2 = Linear::create(ps, name + ".l2", hidden, out, rng);
  return m;
}

MatX Mlp::forward(const ParamStore& ps, const MatX& x, Cache* cache) const {
  MatX pre = l1.forward(ps, x);
  MatX hidden = gelu(pre);
  MatX y = l2.forward(ps, hidden);
  if (cache) {
    cache->x = x;
    cache->pre = std::move(pre);
    cache->hidden = std::move(hidden);
  }
  return y;
}

MatX Mlp::backward(ParamStore& ps, const Cache& cache, const MatX& dy, bool need_dx) const {
  const MatX dh = l2.backward(ps, cache.hidden, dy);
  const MatX dpre = gelu_backward(cache.pre, dh);
  return l1.backward(ps, cache.x, dpre, need_dx);
}

MultiHeadAttention MultiHeadAttention::create(ParamStore& ps, const std::string& name, int width, int heads,
                                              std::mt19937_64& rng) {
  if (heads < 1 || width % heads != 0) throw Error("attention width must be divisible by the head count");
  MultiHeadAttention a;
  a.heads = heads;
  a.q = Linear::create(ps, name + ".q", width, width, rng);
  a.k = Linear::create(ps, name + ".k", width, width, rng);
  a.v = Linear::create(ps, name + ".v", width, width, rng);
  a.o = Linear::create(ps, name + ".o", width, width, rng);
  return a;
}

MatX MultiHeadAttention::forward(const ParamStore& ps, const MatX& x, const std::vector<char>& key_valid,
                                 Cache* cache) const {
  const int n = static_cast<int>(x.rows());
  const int width = q.out;
  const int dh = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  if (!key_valid.empty() && static_cast<int>(key_valid.size()) != n) throw Error("attention: mask length mismatch");

  MatX qm = q.forward(ps, x);
  MatX km = k.forward(ps, x);
  MatX vm = v.forward(ps, x);
  MatX concat(n, width);
  std::vector<MatX> probs(heads);
  for (int h = 0; h < heads; ++h) {
    MatX s = qm.middleCols(h * dh, dh) * km.middleCols(h * dh, dh).transpose() * scale;
    for (int i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < n; ++j) {
        if (key_valid.empty() || key_valid[j]) mx = std::max(mx, s(i, j));
      }
      double sum = 0.0;
      for (int j = 0; j < n; ++j) {
        const double e = (key_valid.empty() || key_valid[j]) ? std::exp(s(i, j) - mx) : 0.0;
        s(i, j) = e;
        sum += e;
      }
      s.row(i) /= sum;
    }
    concat.middleCols(h * dh, dh) = s * vm.middleCols(h * dh, dh);
    probs[h] = std::move(s);
  }
  MatX y = o.forward(ps, concat);
  if (cache) {
    cache->x = x;
    cache->q = std::move(qm);
    cache->k = std::move(km);
    cache->v = std::move(vm);
    cache->concat = std::move(concat);
    cache->probs = std::move(probs);
  }
  return y;
}

MatX MultiHeadAttention::backward(ParamStore& ps, const Cache& c, const MatX& dy) const {
  const int n = static_cast<int>(c.x.rows());
  const int width = q.out;
  const int dh = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const MatX dconcat = o.backward(ps, c.concat, dy);
  MatX dq(n, width);
  MatX dk(n, width);
  MatX dv(n, width);
  for (int h = 0; h < heads; ++h) {
    const MatX& p = c.probs[h];
    const MatX dout = dconcat.middleCols(h * dh, dh);
    const MatX dp = dout * c.v.middleCols(h * dh, dh).transpose();
    dv.middleCols(h * dh, dh) = p.transpose() * dout;
    MatX ds = p.array() * dp.array();
    const VecX row_dot = ds.rowwise().sum();
    ds -= (p.array().colwise() * row_dot.array()).matrix();
    ds *= scale;
    dq.middleCols(h * dh, dh) = ds * c.k.middleCols(h * dh, dh);
    dk.middleCols(h * dh, dh) = ds.transpose() * c.q.middleCols(h * dh, dh);
  }
  MatX dx = q.backward(ps, c.x, dq);
  dx += k.backward(ps, c.x, dk);
  dx += v.backward(ps, c.x, dv);
  return dx;
}

TransformerBlock TransformerBlock::create(ParamStore& ps, const std::string& name, int width, int heads,
                                          int ff_width, std::mt19937_64& rng) {
  TransformerBlock b;
  b.ln1 = LayerNorm::create(ps, name + ".ln1", width);
  b.attn = MultiHeadAttention::create(ps, name + ".attn", width, heads, rng);
  b.ln2 = LayerNorm::create(ps, name + ".ln2", width);
  b.ff = Mlp::create(ps, name + ".ff", width, ff_width, width, rng);
  return b;
}

MatX TransformerBlock::forward(const ParamStore& ps, const MatX& x, const std::vector<char>& key_valid,
                               Cache* cache) const {
  const MatX a_in = ln1.forward(ps, x, cache ? &cache->ln1 : nullptr);
  const MatX h = x + attn.forward(ps, a_in, key_valid, cache ? &cache->attn : nullptr);
  const MatX f_in = ln2.forward(ps, h, cache ? &cache->ln2 : nullptr);
  return h + ff.forward(ps, f_in, cache ? &cache->ff : nullptr);
}

MatX TransformerBlock::backward(ParamStore& ps, const Cache& cache, const MatX& dy) const {
  MatX dh = dy + ln2.backward(ps, cache.ln2, ff.backward(ps, cache.ff, dy));
  return dh + ln1.backward(ps, cache.ln1, attn.backward(ps, cache.attn, dh));
}

VecX sinusoidal_embedding(double position, int dim) {
  VecX e = VecX::Zero(dim);
  const int half = dim / 2;
  for (int k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(10000.0) * k / std::max(half, 1));
    e[k] = std::sin(position * freq);
    e[half + k] = std::cos(position * freq);
  }
  return e;
}

double Adam::step(ParamStore& ps) {
  auto& params = ps.all();
  if (m_.size() != params.size()) {
    m_.clear();
    v_.clear();
    for (const auto& p : params) {
      m_.push_back(MatX::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(MatX::Zero(p.value.rows(), p.value.cols()));
    }
  }
  const double norm = ps.grad_norm();
  if (!std::isfinite(norm)) throw Error("non-finite gradient encountered during training");
  double clip = 1.0;
  if (options_.clip_norm > 0.0 && norm > options_.clip_norm) clip = options_.clip_norm / norm;
  ++t_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    const MatX g = params[i].grad * clip;
    m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * g;
    v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * g.cwiseProduct(g);
    params[i].value.array() -= options_.learning_rate * (m_[i].array() / bc1) /
                               ((v_[i].array() / bc2).sqrt() + options_.eps);
  }
  return norm;
}

}  // namespace dexsynth::nn
