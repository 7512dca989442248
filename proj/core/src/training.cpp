#include "dexsynth/training.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "dexsynth/geometry.hpp"

namespace dexsynth {

namespace {

constexpr int kMotionDim = 10;

MatX standard_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  MatX m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

void check_scenes(const std::vector<PreparedScene>& scenes) {
  if (scenes.empty()) throw Error("training: no scenes");
  const int n = scenes[0].maps.points();
  const int d = scenes[0].maps.dim();
  for (const auto& s : scenes) {
    if (s.maps.points() != n || s.maps.dim() != d) throw Error("training: scenes disagree on map shape");
    if (s.range.size() < 1) throw Error("training: scene " + s.name + " has an empty frame range");
  }
}

// Picks the window for one batch item.
class WindowSource {
 public:
  WindowSource(const std::vector<PreparedScene>& scenes, const TrainOptions& opt, std::mt19937_64& rng)
      : scenes_(scenes), opt_(opt), rng_(rng) {
    if (opt.overfit_one) fixed_ = eval_windows(scenes[0].range.size(), opt.window.length, opt.window.stride);
  }

  std::pair<const PreparedScene*, Window> next() {
    if (opt_.overfit_one) {
      const Window w = fixed_[cursor_ % fixed_.size()];
      ++cursor_;
      return {&scenes_[0], w};
    }
    std::uniform_int_distribution<size_t> pick(0, scenes_.size() - 1);
    const PreparedScene& s = scenes_[pick(rng_)];
    return {&s, train_window(s.range.size(), opt_.window.length, rng_)};
  }

 private:
  const std::vector<PreparedScene>& scenes_;
  const TrainOptions& opt_;
  std::mt19937_64& rng_;
  std::vector<Window> fixed_;
  size_t cursor_ = 0;
};

// Running means between log lines.
class Interval {
 public:
  explicit Interval(std::vector<std::string> names) : names_(std::move(names)), sums_(names_.size(), 0.0) {}

  void add(double total, const std::vector<double>& parts, double grad_norm) {
    total_ += total;
    grad_ += grad_norm;
    for (size_t k = 0; k < parts.size(); ++k) sums_[k] += parts[k];
    ++count_;
  }

  TrainLogRow flush(int step, double lr) {
    TrainLogRow row;
    row.step = step;
    row.learning_rate = lr;
    const double c = count_ > 0 ? static_cast<double>(count_) : 1.0;
    row.total = total_ / c;
    row.grad_norm = grad_ / c;
    for (size_t k = 0; k < names_.size(); ++k) row.components.emplace_back(names_[k], sums_[k] / c);
    total_ = grad_ = 0.0;
    std::fill(sums_.begin(), sums_.end(), 0.0);
    count_ = 0;
    return row;
  }

 private:
  std::vector<std::string> names_;
  std::vector<double> sums_;
  double total_ = 0.0;
  double grad_ = 0.0;
  int count_ = 0;
};

FeatureNormalizer fit_over_ranges(const std::vector<PreparedScene>& scenes, const std::function<const MatX&(const PreparedScene&)>& pick) {
  std::vector<MatX> blocks;
  for (const auto& s : scenes) blocks.push_back(pick(s).middleRows(s.range.begin, s.range.size()));
  return FeatureNormalizer::fit(blocks);
}

nn::Adam make_adam(const StageConfig& stage) {
  nn::AdamOptions o;
  o.learning_rate = stage.learning_rate;
  o.clip_norm = stage.clip_norm;
  return nn::Adam(o);
}

}  // namespace

Vec3 bps_center(const ArticulatedObject& object) { return min_bounding_sphere(object.mesh.vertices).center; }

ObjectFeatures object_features(const ArticulatedObject& object, const ObjectSequenceWorld& trajectory,
                               const BasisPointSet& basis) {
  trajectory.validate();
  const int frames = trajectory.frames();
  const Vec3 center = bps_center(object);
  ObjectFeatures f;
  f.bps.resize(frames, 3 * basis.size());
  f.motion = world_to_canonical_object(trajectory).features();
  f.articulation = trajectory.articulation;
  if (f.articulation.empty()) f.articulation.assign(frames, 0.0);
  for (int l = 0; l < frames; ++l) {
    const BpsEncoding enc = bps_encode(object.posed_vertices(f.articulation[l]), basis, center);
    f.bps.row(l) = Eigen::Map<const Eigen::RowVectorXd>(enc.directions.data(), enc.directions.size());
    f.surface_points.push_back(enc.surface_points(basis, center));
  }
  return f;
}

MatX window_rows(const MatX& m, int begin, int real, int length) {
  if (begin < 0 || real < 0 || real > length || begin + real > m.rows()) throw Error("window_rows: range out of bounds");
  MatX out = MatX::Zero(length, m.cols());
  out.topRows(real) = m.middleRows(begin, real);
  return out;
}

ObjectWindow PreparedScene::object_window(const Window& w) const {
  ObjectWindow o;
  o.bps = window_rows(object.bps, range.begin + w.start, w.real, w.length);
  o.motion = window_rows(object.motion, range.begin + w.start, w.real, w.length);
  o.valid = w.valid;
  return o;
}

Stage2Target PreparedScene::target(const Window& w, const std::array<HandRig, kHands>& rigs, double sigma_c) const {
  const int first = range.begin + w.start;
  Stage2Target t;
  t.rigs = &rigs;
  t.gt_pose = window_rows(pose, first, w.real, w.length);
  t.present = scene.present;
  t.valid = w.valid;
  t.gt_vertices.resize(w.length);
  t.gt_joints.resize(w.length);
  t.match.assign(w.length, empty_match);
  t.consist.resize(w.length);
  t.articulation.assign(w.length, 0.0);
  t.maps.reserve(w.length);
  for (int l = 0; l < w.length; ++l) {
    if (l < w.real) {
      t.gt_vertices[l] = vertices[first + l];
      t.gt_joints[l] = joints[first + l];
      t.match[l] = match[first + l];
      t.consist[l] = consist[first + l];
      t.articulation[l] = object.articulation[first + l];
      t.maps.push_back(maps.frames[first + l]);
    } else {
      t.maps.push_back(ContactFrame::zeros(maps.frames[0].surface_points, maps.dim()));
    }
  }
  t.sdf = sdf.get();
  t.sigma_c = sigma_c;
  return t;
}

PreparedScene prepare_scene(std::string name, Scene scene, ContactSequence maps, const std::array<HandRig, kHands>& rigs,
                            const BasisPointSet& basis, const EmbeddingTable& table, const ContactConfig& contact,
                            bool full_range, bool with_sdf) {
  const int frames = scene.frames();
  if (maps.length() != frames) throw Error(name + ": maps cover " + std::to_string(maps.length()) + " frames, scene has " + std::to_string(frames));
  if (static_cast<int>(scene.hands.size()) != frames) throw Error(name + ": scene has no hand sequence");
  PreparedScene p;
  p.name = std::move(name);
  p.object = object_features(scene.object, scene.trajectory, basis);
  p.range = full_range ? FrameRange{0, frames} : clip_silent(maps, contact.clip_threshold, contact.clip_margin);
  p.pose.resize(frames, kBimanualPoseDim);
  p.vertices.resize(frames);
  p.joints.resize(frames);
  for (int l = 0; l < frames; ++l) {
    const BimanualPose c = scene.canonical_hands(l);
    p.pose.row(l) = flatten_pose(c).transpose();
    for (int h = 0; h < kHands; ++h) {
      if (!scene.present[h]) continue;
      const FkResult fk = forward_kinematics(rigs[h], c.hands[h]);
      p.vertices[l][h] = fk.vertices;
      p.joints[l][h] = fk.joints;
    }
    p.match.push_back(match_residual(table, maps.frames[l], contact.embedding_gate));
    p.consist.push_back(consistency_match(table, maps.frames[l]));
  }
  p.empty_match = match_residual(table, ContactFrame::zeros(maps.frames[0].surface_points, maps.dim()));
  if (with_sdf) p.sdf = std::make_shared<const ObjectSdf>(scene.object);
  p.maps = std::move(maps);
  p.scene = std::move(scene);
  return p;
}

double scheduled_learning_rate(const StageConfig& stage, int step) {
  if (stage.lr_final_fraction >= 1.0 || stage.steps <= 1) return stage.learning_rate;
  const double progress = std::clamp(static_cast<double>(step - 1) / (stage.steps - 1), 0.0, 1.0);
  const double f = stage.lr_final_fraction + (1.0 - stage.lr_final_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return stage.learning_rate * f;
}

namespace {

bool checkpoint_due(const StageConfig& stage, int step) {
  return stage.checkpoint_every > 0 && step % stage.checkpoint_every == 0 && step < stage.steps;
}

}  // namespace

Stage1Model train_stage1(const std::vector<PreparedScene>& scenes, const TrainOptions& opt) {
  check_scenes(scenes);
  Stage1Model model;
  model.layout = {scenes[0].maps.points(), scenes[0].maps.dim()};
  model.bps_norm = fit_over_ranges(scenes, [](const PreparedScene& s) -> const MatX& { return s.object.bps; });
  model.motion_norm = fit_over_ranges(scenes, [](const PreparedScene& s) -> const MatX& { return s.object.motion; });
  model.net = Denoiser(opt.stage.denoiser(model.layout.width(), {3 * model.layout.points, kMotionDim}, 0),
                       derive_seed(opt.seed, 1));
  std::vector<MatX> flat;
  for (const auto& s : scenes) flat.push_back(s.maps.flatten());

  std::mt19937_64 rng(derive_seed(opt.seed, 2));
  WindowSource source(scenes, opt, rng);
  std::uniform_int_distribution<int> pick_t(1, opt.schedule.steps());
  nn::Adam adam = make_adam(opt.stage);
  Interval interval({"contact", "embedding"});
  for (int step = 1; step <= opt.stage.steps; ++step) {
    model.net.params().zero_grad();
    double total = 0.0;
    std::vector<double> parts(2, 0.0);
    for (int b = 0; b < opt.stage.batch; ++b) {
      const auto [scene, w] = source.next();
      const size_t si = static_cast<size_t>(scene - scenes.data());
      const MatX x0 = window_rows(flat[si], scene->range.begin + w.start, w.real, w.length);
      const int t = pick_t(rng);
      const MatX xt = forward_noise(x0, t, standard_normal(x0.rows(), x0.cols(), rng), opt.schedule);
      const DenoiserInput in = model.make_input(scene->object_window(w), xt, t);
      DenoiserTape tape;
      const MatX pred = model.decode(model.net.forward(in, &tape));
      MatX grad;
      const Stage1Loss loss = stage1_loss(pred, x0, model.layout, opt.weights, w.valid, &grad);
      grad /= opt.stage.batch;
      model.net.backward(in, tape, grad);
      total += loss.total;
      parts[0] += loss.contact;
      parts[1] += loss.embedding;
    }
    const double lr = scheduled_learning_rate(opt.stage, step);
    adam.set_learning_rate(lr);
    const double gn = adam.step(model.net.params());
    for (double& p : parts) p /= opt.stage.batch;
    interval.add(total / opt.stage.batch, parts, gn);
    if (step % opt.stage.log_every == 0 || step == opt.stage.steps) {
      if (opt.on_log) opt.on_log(interval.flush(step, lr));
    }
    if (opt.on_stage1_checkpoint && checkpoint_due(opt.stage, step)) opt.on_stage1_checkpoint(step, model);
  }
  return model;
}

Stage2Model train_stage2(const std::vector<PreparedScene>& scenes, const std::array<HandRig, kHands>& rigs,
                         const EmbeddingTable& table, const TrainOptions& opt) {
  check_scenes(scenes);
  for (const auto& s : scenes) {
    if (opt.stage.pen_warmup < opt.stage.steps && !s.sdf) throw Error("train_stage2: scene " + s.name + " has no SDF");
  }
  if (table.rows() != rigs[1].vertex_count()) throw Error("train_stage2: embedding rows do not match the rig");
  Stage2Model model;
  model.layout = {scenes[0].maps.points(), scenes[0].maps.dim()};
  model.table = table;
  model.residual_scale = opt.stage.residual_scale;
  model.embedding_gate = opt.contact.embedding_gate;
  model.pose_norm = fit_over_ranges(scenes, [](const PreparedScene& s) -> const MatX& { return s.pose; });
  model.bps_norm = fit_over_ranges(scenes, [](const PreparedScene& s) -> const MatX& { return s.object.bps; });
  model.motion_norm = fit_over_ranges(scenes, [](const PreparedScene& s) -> const MatX& { return s.object.motion; });
  model.net = Denoiser(opt.stage.denoiser(kBimanualPoseDim, {3 * model.layout.points, kMotionDim, model.layout.width()},
                                          3 + table.dim()),
                       derive_seed(opt.seed, 1));
  const MatX std_diag = model.pose_norm.std.transpose();

  std::mt19937_64 rng(derive_seed(opt.seed, 2));
  WindowSource source(scenes, opt, rng);
  std::uniform_int_distribution<int> pick_t(1, opt.schedule.steps());
  const double full_p = opt.overfit_one ? 0.0 : opt.contact.mask_full;
  const double frame_p = opt.overfit_one ? 0.0 : opt.contact.mask_frame;
  nn::Adam adam = make_adam(opt.stage);
  Interval interval({"data", "pen", "joints", "vel", "att", "consist"});
  const int batch = opt.stage.batch;
  for (int step = 1; step <= opt.stage.steps; ++step) {
    const bool with_pen = step > opt.stage.pen_warmup;
    model.net.params().zero_grad();
    double total = 0.0;
    std::vector<double> parts(6, 0.0);
    for (int b = 0; b < batch; ++b) {
      const auto [scene, w] = source.next();
      const Stage2Target target = scene->target(w, rigs, opt.contact.sigma_c);

      ContactSequence window_maps;
      window_maps.frames = target.maps;
      window_maps.sigma_c = opt.contact.sigma_c;
      const MaskResult masked = mask_maps(window_maps, full_p, frame_p, rng());
      Stage2Window cond;
      cond.object = scene->object_window(w);
      cond.maps = masked.maps.frames;
      for (auto& f : cond.maps) f.gate_embeddings(model.embedding_gate);
      cond.match = target.match;
      cond.present = scene->scene.present;
      if (masked.fully_masked) {
        std::fill(cond.match.begin(), cond.match.end(), scene->empty_match);
      } else {
        for (int l : masked.masked_frames) cond.match[l] = scene->empty_match;
      }

      const MatX z0 = model.pose_norm.apply(target.gt_pose);
      const int t = pick_t(rng);
      const MatX zt = forward_noise(z0, t, standard_normal(z0.rows(), z0.cols(), rng), opt.schedule);
      const DenoiserInput in = model.make_input(cond, zt, t, rigs);
      DenoiserTape tape;
      const MatX z_hat = model.net.forward(in, &tape);
      MatX grad_raw;
      const Stage2Loss loss = stage2_loss(model.pose_norm.invert(z_hat), target, opt.weights, with_pen, &grad_raw);
      MatX grad_z = grad_raw.array().rowwise() * std_diag.row(0).array();
      grad_z /= batch;
      model.net.backward(in, tape, grad_z);
      total += loss.total;
      const double v[6] = {loss.data, loss.pen, loss.joints, loss.vel, loss.att, loss.consist};
      for (int k = 0; k < 6; ++k) parts[k] += v[k];
    }
    const double lr = scheduled_learning_rate(opt.stage, step);
    adam.set_learning_rate(lr);
    const double gn = adam.step(model.net.params());
    for (double& p : parts) p /= batch;
    interval.add(total / batch, parts, gn);
    if (step % opt.stage.log_every == 0 || step == opt.stage.steps) {
      if (opt.on_log) opt.on_log(interval.flush(step, lr));
    }
    if (opt.on_stage2_checkpoint && checkpoint_due(opt.stage, step)) opt.on_stage2_checkpoint(step, model);
  }
  return model;
}

}  // namespace dexsynth
