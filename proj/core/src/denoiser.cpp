#include "dexsynth/denoiser.hpp"

#include <cmath>

#include "dexsynth/array_io.hpp"

namespace dexsynth {

void DenoiserConfig::validate() const {
  if (x_dim < 1) throw Error("denoiser: x_dim must be positive");
  if (width < 1 || blocks < 0 || heads < 1 || width % heads != 0) {
    throw Error("denoiser: width must be positive and divisible by heads");
  }
  if (time_dim < 2 || time_dim % 2 != 0) throw Error("denoiser: time_dim must be even and >= 2");
  for (int d : condition_dims) {
    if (d < 1) throw Error("denoiser: condition group widths must be positive");
  }
  if (pool_in < 0) throw Error("denoiser: pool_in must be >= 0");
}

nlohmann::json DenoiserConfig::to_json() const {
  return {{"x_dim", x_dim},
          {"condition_dims", condition_dims},
          {"condition_hidden", condition_hidden},
          {"condition_out", condition_out},
          {"pool_in", pool_in},
          {"pool_width", pool_width},
          {"width", width},
          {"blocks", blocks},
          {"heads", heads},
          {"ff_width", ff_width},
          {"time_dim", time_dim}};
}

DenoiserConfig DenoiserConfig::from_json(const nlohmann::json& j) {
  DenoiserConfig c;
  c.x_dim = j.at("x_dim").get<int>();
  c.condition_dims = j.at("condition_dims").get<std::vector<int>>();
  c.condition_hidden = j.at("condition_hidden").get<int>();
  c.condition_out = j.at("condition_out").get<int>();
  c.pool_in = j.at("pool_in").get<int>();
  c.pool_width = j.at("pool_width").get<int>();
  c.width = j.at("width").get<int>();
  c.blocks = j.at("blocks").get<int>();
  c.heads = j.at("heads").get<int>();
  c.ff_width = j.at("ff_width").get<int>();
  c.time_dim = j.at("time_dim").get<int>();
  return c;
}

Denoiser::Denoiser(DenoiserConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  int token_in = config_.x_dim + config_.time_dim;
  for (size_t g = 0; g < config_.condition_dims.size(); ++g) {
    condition_encoders_.push_back(nn::Mlp::create(params_, "cond" + std::to_string(g), config_.condition_dims[g],
                                                  config_.condition_hidden, config_.condition_out, rng));
    token_in += config_.condition_out;
  }
  if (config_.pool_in > 0) {
    pool_proj_ = nn::Linear::create(params_, "pool", config_.pool_in, config_.pool_width, rng);
    token_in += kHands * config_.pool_width;
  }
  in_proj_ = nn::Linear::create(params_, "in", token_in, config_.width, rng);
  for (int b = 0; b < config_.blocks; ++b) {
    blocks_.push_back(nn::TransformerBlock::create(params_, "block" + std::to_string(b), config_.width,
                                                   config_.heads, config_.ff_width, rng));
  }
  out_norm_ = nn::LayerNorm::create(params_, "out_norm", config_.width);
  out_proj_ = nn::Linear::create(params_, "out", config_.width, config_.x_dim, rng);
}

void Denoiser::check_input(const DenoiserInput& in) const {
  const int frames = in.frames();
  if (frames < 1 || in.x.cols() != config_.x_dim) {
    throw Error("denoiser: x must be L x " + std::to_string(config_.x_dim) + ", got " + std::to_string(in.x.rows()) +
                " x " + std::to_string(in.x.cols()));
  }
  if (in.conditions.size() != config_.condition_dims.size()) throw Error("denoiser: wrong number of condition groups");
  for (size_t g = 0; g < in.conditions.size(); ++g) {
    if (in.conditions[g].rows() != frames || in.conditions[g].cols() != config_.condition_dims[g]) {
      throw Error("denoiser: condition group " + std::to_string(g) + " has wrong shape");
    }
  }
  if (config_.pool_in > 0) {
    if (in.pool_vertices < 1 || in.pool.rows() != static_cast<Eigen::Index>(frames) * kHands * in.pool_vertices ||
        in.pool.cols() != config_.pool_in) {
      throw Error("denoiser: pooled features have wrong shape");
    }
  }
  if (!in.valid.empty() && static_cast<int>(in.valid.size()) != frames) throw Error("denoiser: mask length mismatch");
}

MatX Denoiser::forward(const DenoiserInput& in, DenoiserTape* tape) const {
  check_input(in);
  const int frames = in.frames();
  std::vector<MatX> parts;
  parts.push_back(in.x);
  if (tape) tape->conditions.resize(condition_encoders_.size());
  for (size_t g = 0; g < condition_encoders_.size(); ++g) {
    parts.push_back(condition_encoders_[g].forward(params_, in.conditions[g], tape ? &tape->conditions[g] : nullptr));
  }
  if (config_.pool_in > 0) {
    MatX pre = pool_proj_.forward(params_, in.pool);
    const MatX act = nn::gelu(pre);
    MatX pooled(frames, kHands * config_.pool_width);
    const int verts = in.pool_vertices;
    for (int l = 0; l < frames; ++l) {
      for (int h = 0; h < kHands; ++h) {
        pooled.block(l, h * config_.pool_width, 1, config_.pool_width) =
            act.middleRows((static_cast<Eigen::Index>(l) * kHands + h) * verts, verts).colwise().mean();
      }
    }
    parts.push_back(std::move(pooled));
    if (tape) tape->pool_pre = std::move(pre);
  }
  const VecX temb = nn::sinusoidal_embedding(static_cast<double>(in.t), config_.time_dim);
  parts.push_back(temb.transpose().replicate(frames, 1));

  Eigen::Index total = 0;
  for (const auto& p : parts) total += p.cols();
  MatX tokens(frames, total);
  Eigen::Index col = 0;
  for (const auto& p : parts) {
    tokens.middleCols(col, p.cols()) = p;
    col += p.cols();
  }

  MatX h = in_proj_.forward(params_, tokens);
  for (int l = 0; l < frames; ++l) h.row(l) += nn::sinusoidal_embedding(l, config_.width).transpose();
  if (tape) {
    tape->tokens = std::move(tokens);
    tape->blocks.resize(blocks_.size());
  }
  for (size_t b = 0; b < blocks_.size(); ++b) h = blocks_[b].forward(params_, h, in.valid, tape ? &tape->blocks[b] : nullptr);
  MatX out_hidden = out_norm_.forward(params_, h, tape ? &tape->out_norm : nullptr);
  MatX y = out_proj_.forward(params_, out_hidden);
  if (tape) tape->out_hidden = std::move(out_hidden);
  return y;
}

void Denoiser::backward(const DenoiserInput& in, const DenoiserTape& tape, const MatX& d_out) {
  const int frames = in.frames();
  if (d_out.rows() != frames || d_out.cols() != config_.x_dim) throw Error("denoiser backward: gradient shape mismatch");
  MatX dh = out_proj_.backward(params_, tape.out_hidden, d_out);
  dh = out_norm_.backward(params_, tape.out_norm, dh);
  for (size_t b = blocks_.size(); b-- > 0;) dh = blocks_[b].backward(params_, tape.blocks[b], dh);
  const MatX dtokens = in_proj_.backward(params_, tape.tokens, dh);

  Eigen::Index col = config_.x_dim;
  for (size_t g = 0; g < condition_encoders_.size(); ++g) {
    condition_encoders_[g].backward(params_, tape.conditions[g], dtokens.middleCols(col, config_.condition_out), false);
    col += config_.condition_out;
  }
  if (config_.pool_in > 0) {
    const int verts = in.pool_vertices;
    MatX dact(tape.pool_pre.rows(), config_.pool_width);
    const double inv = 1.0 / verts;
    for (int l = 0; l < frames; ++l) {
      for (int h = 0; h < kHands; ++h) {
        const Eigen::RowVectorXd g = dtokens.block(l, col + h * config_.pool_width, 1, config_.pool_width) * inv;
        dact.middleRows((static_cast<Eigen::Index>(l) * kHands + h) * verts, verts) = g.replicate(verts, 1);
      }
    }
    pool_proj_.backward(params_, in.pool, nn::gelu_backward(tape.pool_pre, dact), false);
  }
}

void Denoiser::save(const std::filesystem::path& path, const nlohmann::json& meta) const {
  ArrayFile file;
  file.meta = meta;
  file.meta["kind"] = "denoiser_checkpoint";
  file.meta["denoiser"] = config_.to_json();
  for (const auto& p : params_.all()) file.arrays.push_back(NamedArray::from_matrix(p.name, p.value));
  file.write(path);
}

Denoiser Denoiser::load(const std::filesystem::path& path, nlohmann::json* meta) {
  const ArrayFile file = ArrayFile::read(path);
  if (file.meta.value("kind", "") != "denoiser_checkpoint") throw Error(path.string() + ": not a denoiser checkpoint");
  Denoiser d(DenoiserConfig::from_json(file.meta.at("denoiser")), 0);
  for (auto& p : d.params_.all()) {
    const MatX m = file.get(p.name).as_matrix();
    if (m.rows() != p.value.rows() || m.cols() != p.value.cols()) {
      throw Error(path.string() + ": parameter '" + p.name + "' has the wrong shape");
    }
    p.value = m;
  }
  if (meta) *meta = file.meta;
  return d;
}

FeatureNormalizer FeatureNormalizer::fit(const std::vector<MatX>& blocks, double floor) {
  if (blocks.empty()) throw Error("FeatureNormalizer::fit: no data");
  const Eigen::Index dim = blocks[0].cols();
  VecX sum = VecX::Zero(dim);
  VecX sq = VecX::Zero(dim);
  double count = 0;
  for (const auto& b : blocks) {
    if (b.cols() != dim) throw Error("FeatureNormalizer::fit: inconsistent widths");
    sum += b.colwise().sum().transpose();
    count += static_cast<double>(b.rows());
  }
  if (count == 0) throw Error("FeatureNormalizer::fit: no rows");
  FeatureNormalizer n;
  n.mean = sum / count;
  for (const auto& b : blocks) sq += (b.rowwise() - n.mean.transpose()).array().square().colwise().sum().matrix().transpose();
  n.std = (sq / count).cwiseSqrt().cwiseMax(floor);
  return n;
}

FeatureNormalizer FeatureNormalizer::identity(int dim) {
  FeatureNormalizer n;
  n.mean = VecX::Zero(dim);
  n.std = VecX::Ones(dim);
  return n;
}

MatX FeatureNormalizer::apply(const MatX& x) const {
  if (x.cols() != mean.size()) throw Error("FeatureNormalizer: width mismatch");
  return (x.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array();
}

MatX FeatureNormalizer::invert(const MatX& z) const {
  if (z.cols() != mean.size()) throw Error("FeatureNormalizer: width mismatch");
  MatX x = z.array().rowwise() * std.transpose().array();
  x.rowwise() += mean.transpose();
  return x;
}

nlohmann::json FeatureNormalizer::to_json() const {
  return {{"mean", std::vector<double>(mean.data(), mean.data() + mean.size())},
          {"std", std::vector<double>(std.data(), std.data() + std.size())}};
}

FeatureNormalizer FeatureNormalizer::from_json(const nlohmann::json& j) {
  const auto m = j.at("mean").get<std::vector<double>>();
  const auto s = j.at("std").get<std::vector<double>>();
  if (m.size() != s.size()) throw Error("normalizer: mean/std length mismatch");
  FeatureNormalizer n;
  n.mean = Eigen::Map<const VecX>(m.data(), static_cast<Eigen::Index>(m.size()));
  n.std = Eigen::Map<const VecX>(s.data(), static_cast<Eigen::Index>(s.size()));
  return n;
}

}  // namespace dexsynth
