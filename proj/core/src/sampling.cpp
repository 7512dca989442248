#include "dexsynth/sampling.hpp"

#include <cmath>
#include <random>

#include "dexsynth/array_io.hpp"
#include "dexsynth/metrics.hpp"

namespace dexsynth {

namespace {

MatX standard_normal(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  MatX m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

void check_window(const ObjectWindow& w) {
  if (w.bps.rows() != w.motion.rows()) throw Error("object window: bps/motion frame counts differ");
  if (!w.valid.empty() && static_cast<int>(w.valid.size()) != w.frames()) throw Error("object window: mask length");
}

nlohmann::json layout_json(const MapLayout& l) { return {{"points", l.points}, {"dim", l.dim}}; }
MapLayout layout_from(const nlohmann::json& j) { return {j.at("points").get<int>(), j.at("dim").get<int>()}; }

}  // namespace

DenoiserInput Stage1Model::make_input(const ObjectWindow& w, const MatX& x_t, int t) const {
  check_window(w);
  DenoiserInput in;
  in.x = x_t;
  in.t = t;
  in.conditions = {bps_norm.apply(w.bps), motion_norm.apply(w.motion)};
  in.valid = w.valid;
  return in;
}

MatX Stage1Model::decode(const MatX& raw) const {
  MatX out = raw;
  for (int q = 0; q < layout.points; ++q) {
    for (int h = 0; h < kHands; ++h) {
      const int c = layout.column(q, h, 0);
      out.col(c) = raw.col(c).unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    }
  }
  return out;
}

void Stage1Model::save(const std::filesystem::path& path, const nlohmann::json& meta) const {
  nlohmann::json m = meta;
  m["stage"] = 1;
  m["layout"] = layout_json(layout);
  m["bps_norm"] = bps_norm.to_json();
  m["motion_norm"] = motion_norm.to_json();
  net.save(path, m);
}

Stage1Model Stage1Model::load(const std::filesystem::path& path, nlohmann::json* meta) {
  nlohmann::json m;
  Stage1Model model;
  model.net = Denoiser::load(path, &m);
  if (m.value("stage", 0) != 1) throw Error(path.string() + ": not a stage-1 checkpoint");
  model.layout = layout_from(m.at("layout"));
  model.bps_norm = FeatureNormalizer::from_json(m.at("bps_norm"));
  model.motion_norm = FeatureNormalizer::from_json(m.at("motion_norm"));
  if (meta) *meta = m;
  return model;
}

DenoiserInput Stage2Model::make_input(const Stage2Window& w, const MatX& z_t, int t,
                                      const std::array<HandRig, kHands>& rigs,
                                      std::vector<ResidualField>* residual) const {
  check_window(w.object);
  const int frames = w.object.frames();
  if (static_cast<int>(w.maps.size()) != frames || static_cast<int>(w.match.size()) != frames) {
    throw Error("stage-2 window: maps/match length mismatch");
  }
  const int verts = table.rows();
  const int d = table.dim();
  DenoiserInput in;
  in.x = z_t;
  in.t = t;
  MatX maps(frames, layout.width());
  for (int l = 0; l < frames; ++l) maps.row(l) = w.maps[l].flatten().transpose();
  in.conditions = {bps_norm.apply(w.object.bps), motion_norm.apply(w.object.motion), std::move(maps)};
  in.valid = w.object.valid;
  in.pool_vertices = verts;
  in.pool = MatX::Zero(static_cast<Eigen::Index>(frames) * kHands * verts, 3 + d);

  const MatX raw = pose_norm.invert(z_t);
  if (residual) residual->assign(frames, ResidualField{});
  for (int l = 0; l < frames; ++l) {
    std::array<Points, kHands> hv;
    for (int h = 0; h < kHands; ++h) {
      if (!w.present[h]) continue;
      const HandPose pose = HandPose::unflatten(std::span<const double>(raw.row(l).data() + h * kPoseDim, kPoseDim));
      hv[h] = forward_kinematics(rigs[h], pose).vertices;
    }
    ResidualField field = compute_residual(hv, w.maps[l], w.match[l]);
    for (int h = 0; h < kHands; ++h) {
      const Eigen::Index base = (static_cast<Eigen::Index>(l) * kHands + h) * verts;
      in.pool.block(base, 0, verts, 3) = field.r[h] * residual_scale;
      in.pool.block(base, 3, verts, d) = table.values;
    }
    if (residual) (*residual)[l] = std::move(field);
  }
  return in;
}

void Stage2Model::save(const std::filesystem::path& path, const nlohmann::json& meta) const {
  nlohmann::json m = meta;
  m["stage"] = 2;
  m["layout"] = layout_json(layout);
  m["pose_norm"] = pose_norm.to_json();
  m["bps_norm"] = bps_norm.to_json();
  m["motion_norm"] = motion_norm.to_json();
  m["residual_scale"] = residual_scale;
  m["embedding_gate"] = embedding_gate;
  m["sigma_g"] = table.sigma_g;
  m["embedding"] = {{"rows", table.rows()},
                    {"dim", table.dim()},
                    {"values", std::vector<double>(table.values.data(), table.values.data() + table.values.size())}};
  net.save(path, m);
}

Stage2Model Stage2Model::load(const std::filesystem::path& path, nlohmann::json* meta) {
  nlohmann::json m;
  Stage2Model model;
  model.net = Denoiser::load(path, &m);
  if (m.value("stage", 0) != 2) throw Error(path.string() + ": not a stage-2 checkpoint");
  model.layout = layout_from(m.at("layout"));
  model.pose_norm = FeatureNormalizer::from_json(m.at("pose_norm"));
  model.bps_norm = FeatureNormalizer::from_json(m.at("bps_norm"));
  model.motion_norm = FeatureNormalizer::from_json(m.at("motion_norm"));
  model.residual_scale = m.at("residual_scale").get<double>();
  model.embedding_gate = m.value("embedding_gate", 0.0);
  const auto& e = m.at("embedding");
  const auto values = e.at("values").get<std::vector<double>>();
  model.table.values.resize(e.at("rows").get<int>(), e.at("dim").get<int>());
  if (static_cast<Eigen::Index>(values.size()) != model.table.values.size()) throw Error(path.string() + ": bad embedding");
  std::copy(values.begin(), values.end(), model.table.values.data());
  model.table.sigma_g = m.at("sigma_g").get<double>();
  if (meta) *meta = m;
  return model;
}

MatX reverse_chain(int rows, int cols, const NoiseSchedule& schedule, std::uint64_t seed, int stride,
                   const X0Predictor& predict, const std::function<void(int t, const MatX& x_t)>& observer) {
  std::mt19937_64 rng(seed);
  MatX x = standard_normal(rows, cols, rng);
  const auto steps = sampling_timesteps(schedule.steps(), stride);
  MatX x0;
  for (size_t k = 0; k < steps.size(); ++k) {
    const int t = steps[k];
    const int t_prev = k + 1 < steps.size() ? steps[k + 1] : 0;
    if (observer) observer(t, x);
    x0 = predict(x, t);
    const MatX noise = t_prev > 0 ? standard_normal(rows, cols, rng) : MatX();
    x = posterior_step_between(x, x0, t, t_prev, schedule, noise);
  }
  return x;
}

MatX sample_stage1(const Stage1Model& model, const ObjectWindow& window, const NoiseSchedule& schedule,
                   std::uint64_t seed, int stride, const X0Predictor* oracle) {
  const int frames = window.frames();
  X0Predictor net = [&](const MatX& x_t, int t) { return model.decode(model.net.forward(model.make_input(window, x_t, t))); };
  MatX maps = reverse_chain(frames, model.layout.width(), schedule, seed, stride, oracle ? *oracle : net);
  for (int q = 0; q < model.layout.points; ++q) {
    for (int h = 0; h < kHands; ++h) {
      const int c = model.layout.column(q, h, 0);
      maps.col(c) = maps.col(c).cwiseMax(0.0).cwiseMin(1.0);
    }
  }
  return maps;
}

double contact_region_residual(const std::vector<ResidualField>& residual, const std::vector<ContactFrame>& maps,
                               const EmbeddingTable& table, double gate) {
  double sum = 0.0;
  long count = 0;
  for (size_t l = 0; l < residual.size(); ++l) {
    for (int h = 0; h < kHands; ++h) {
      if (residual[l].r[h].rows() == 0) continue;
      for (int i : contact_region(maps[l], h, table, gate)) {
        sum += residual[l].r[h].row(i).norm();
        ++count;
      }
    }
  }
  return count > 0 ? sum / count : 0.0;
}

MatX sample_stage2(const Stage2Model& model, const Stage2Window& window, const std::array<HandRig, kHands>& rigs,
                   const NoiseSchedule& schedule, std::uint64_t seed, int stride, const X0Predictor* oracle,
                   std::vector<double>* residual_trace) {
  const int frames = window.object.frames();
  X0Predictor predict = [&](const MatX& z_t, int t) {
    std::vector<ResidualField> fields;
    const DenoiserInput in = model.make_input(window, z_t, t, rigs, residual_trace ? &fields : nullptr);
    if (residual_trace) residual_trace->push_back(contact_region_residual(fields, window.maps, model.table));
    return oracle ? (*oracle)(z_t, t) : model.net.forward(in);
  };
  const MatX z = reverse_chain(frames, kBimanualPoseDim, schedule, seed, stride, predict);
  MatX raw = model.pose_norm.invert(z);
  for (int h = 0; h < kHands; ++h) {
    if (!window.present[h]) raw.middleCols(h * kPoseDim, kPoseDim).setZero();
  }
  if (residual_trace) {
    std::vector<ResidualField> fields;
    model.make_input(window, model.pose_norm.apply(raw), 1, rigs, &fields);
    residual_trace->push_back(contact_region_residual(fields, window.maps, model.table));
  }
  return raw;
}

std::vector<ContactFrame> maps_from_matrix(const MatX& maps, const MapLayout& layout,
                                           const std::vector<Points>& surface_points) {
  if (static_cast<Eigen::Index>(surface_points.size()) != maps.rows() || maps.cols() != layout.width()) {
    throw Error("maps_from_matrix: shape mismatch");
  }
  std::vector<ContactFrame> out;
  for (Eigen::Index l = 0; l < maps.rows(); ++l) {
    ContactFrame f = ContactFrame::zeros(surface_points[static_cast<size_t>(l)], layout.dim);
    f.assign_flat(maps.row(l).transpose());
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace dexsynth
