#include "dexsynth/config.hpp"

#include <set>

#include "dexsynth/scene_io.hpp"

namespace dexsynth {

namespace {

// Reads fields present in `in` (if any) and records every field in `out`, so
// one visitor serves both directions.
class Section {
 public:
  Section(const nlohmann::json* root, std::string name) : name_(std::move(name)) {
    if (root && root->contains(name_)) {
      in_ = &root->at(name_);
      if (!in_->is_object()) throw Error("config: section '" + name_ + "' must be an object");
    }
  }

  template <class T>
  Section& field(const char* key, T& value) {
    if (in_ && in_->contains(key)) {
      try {
        value = in_->at(key).get<T>();
      } catch (const nlohmann::json::exception&) {
        throw Error("config: " + name_ + "." + key + " has the wrong type");
      }
    }
    seen_.insert(key);
    out_[key] = value;
    return *this;
  }

  nlohmann::json finish() {
    if (in_) {
      for (const auto& [key, value] : in_->items()) {
        if (!seen_.count(key)) throw Error("config: unknown key " + name_ + "." + key);
      }
    }
    return out_;
  }

 private:
  std::string name_;
  const nlohmann::json* in_ = nullptr;
  std::set<std::string> seen_;
  nlohmann::json out_ = nlohmann::json::object();
};

void bind_stage(Section& s, StageConfig& c) {
  s.field("width", c.width)
      .field("blocks", c.blocks)
      .field("heads", c.heads)
      .field("ff_width", c.ff_width)
      .field("time_dim", c.time_dim)
      .field("condition_hidden", c.condition_hidden)
      .field("condition_out", c.condition_out)
      .field("pool_width", c.pool_width)
      .field("learning_rate", c.learning_rate)
      .field("lr_final_fraction", c.lr_final_fraction)
      .field("clip_norm", c.clip_norm)
      .field("batch", c.batch)
      .field("steps", c.steps)
      .field("log_every", c.log_every)
      .field("checkpoint_every", c.checkpoint_every)
      .field("pen_warmup", c.pen_warmup)
      .field("residual_scale", c.residual_scale);
}

nlohmann::json visit(Config& c, const nlohmann::json* in) {
  static const std::set<std::string> kSections = {"data",   "bps",    "contact", "embedding", "diffusion", "window",
                                                  "stage1", "stage2", "weights", "eval",      "synth",     "hand"};
  if (in) {
    if (!in->is_object()) throw Error("config: top level must be an object");
    for (const auto& [key, value] : in->items()) {
      if (!kSections.count(key)) throw Error("config: unknown section '" + key + "'");
    }
  }
  nlohmann::json out;
  {
    Section s(in, "data");
    s.field("train_scenes", c.data.train_scenes)
        .field("test_scenes", c.data.test_scenes)
        .field("frames", c.data.frames)
        .field("hand_vertices", c.data.hand_vertices);
    out["data"] = s.finish();
  }
  {
    Section s(in, "bps");
    s.field("points", c.bps.points).field("radius", c.bps.radius).field("seed", c.bps.seed);
    out["bps"] = s.finish();
  }
  {
    Section s(in, "contact");
    s.field("sigma_c", c.contact.sigma_c)
        .field("mask_full", c.contact.mask_full)
        .field("mask_frame", c.contact.mask_frame)
        .field("clip_threshold", c.contact.clip_threshold)
        .field("clip_margin", c.contact.clip_margin)
        .field("embedding_gate", c.contact.embedding_gate);
    out["contact"] = s.finish();
  }
  {
    Section s(in, "embedding");
    s.field("dim", c.embedding.dim)
        .field("sigma_g", c.embedding.sigma_g)
        .field("steps", c.embedding.steps)
        .field("learning_rate", c.embedding.learning_rate);
    out["embedding"] = s.finish();
  }
  {
    Section s(in, "diffusion");
    s.field("steps", c.diffusion.steps)
        .field("beta_start", c.diffusion.beta_start)
        .field("beta_end", c.diffusion.beta_end)
        .field("sample_stride", c.diffusion.sample_stride);
    out["diffusion"] = s.finish();
  }
  {
    Section s(in, "window");
    s.field("length", c.window.length).field("stride", c.window.stride);
    out["window"] = s.finish();
  }
  for (auto [name, stage] : {std::pair{"stage1", &c.stage1}, std::pair{"stage2", &c.stage2}}) {
    Section s(in, name);
    bind_stage(s, *stage);
    out[name] = s.finish();
  }
  {
    Section s(in, "weights");
    LossWeights& w = c.weights;
    s.field("contact", w.contact)
        .field("embedding", w.embedding)
        .field("data", w.data)
        .field("pen", w.pen)
        .field("joints", w.joints)
        .field("vel", w.vel)
        .field("att", w.att)
        .field("consist", w.consist);
    out["weights"] = s.finish();
  }
  {
    Section s(in, "eval");
    s.field("contact_tol", c.eval.contact_tol).field("gate", c.eval.gate).field("voxel", c.eval.voxel);
    out["eval"] = s.finish();
  }
  {
    Section s(in, "synth");
    SynthOptions& o = c.synth;
    s.field("gap", o.gap)
        .field("contact_band", o.contact_band)
        .field("finger_max_angle", o.finger_max_angle)
        .field("approach_distance", o.approach_distance)
        .field("approach_fraction", o.approach_fraction)
        .field("closing_fraction", o.closing_fraction)
        .field("lift_height", o.lift_height)
        .field("arc_radius", o.arc_radius)
        .field("arc_angle", o.arc_angle)
        .field("hinge_angle", o.hinge_angle)
        .field("mesh_spacing", o.mesh_spacing);
    out["synth"] = s.finish();
  }
  {
    Section s(in, "hand");
    ToyHandOptions& h = c.hand;
    s.field("palm_half_width", h.palm_half_width)
        .field("palm_half_length", h.palm_half_length)
        .field("palm_thickness", h.palm_thickness)
        .field("segment_length", h.segment_length);
    out["hand"] = s.finish();
  }
  return out;
}

void check_stage(const StageConfig& s, const char* name) {
  const std::string n = name;
  if (s.batch < 1 || s.steps < 0 || s.log_every < 1 || s.checkpoint_every < 0 || s.pen_warmup < 0) {
    throw Error("config: " + n + " batch/steps/log_every/checkpoint_every/pen_warmup out of range");
  }
  if (!(s.learning_rate > 0) || !(s.lr_final_fraction > 0 && s.lr_final_fraction <= 1) || !(s.clip_norm > 0)) {
    throw Error("config: " + n + " optimiser settings out of range");
  }
  if (!(s.residual_scale > 0)) throw Error("config: " + n + ".residual_scale must be positive");
  s.denoiser(1, {1}, 1).validate();
}

}  // namespace

DenoiserConfig StageConfig::denoiser(int x_dim, std::vector<int> condition_dims, int pool_in) const {
  DenoiserConfig d;
  d.x_dim = x_dim;
  d.condition_dims = std::move(condition_dims);
  d.condition_hidden = condition_hidden;
  d.condition_out = condition_out;
  d.pool_in = pool_in;
  d.pool_width = pool_width;
  d.width = width;
  d.blocks = blocks;
  d.heads = heads;
  d.ff_width = ff_width;
  d.time_dim = time_dim;
  return d;
}

void Config::validate() const {
  if (data.train_scenes < 1 || data.test_scenes < 0 || data.frames < 2) throw Error("config: data section out of range");
  if (data.hand_vertices < 50) throw Error("config: data.hand_vertices must be at least 50");
  if (bps.points < 1 || !(bps.radius > 0)) throw Error("config: bps.points and bps.radius must be positive");
  if (!(contact.sigma_c > 0)) throw Error("config: contact.sigma_c must be positive");
  for (double p : {contact.mask_full, contact.mask_frame}) {
    if (!(p >= 0 && p <= 1)) throw Error("config: mask probabilities must lie in [0, 1]");
  }
  if (contact.clip_margin < 0) throw Error("config: contact.clip_margin must be non-negative");
  if (!(contact.embedding_gate >= 0.0 && contact.embedding_gate < 1.0)) {
    throw Error("config: contact.embedding_gate must lie in [0, 1)");
  }
  if (embedding.dim < 1 || embedding.steps < 1 || !(embedding.learning_rate > 0)) {
    throw Error("config: embedding section out of range");
  }
  diffusion.schedule();
  if (diffusion.sample_stride < 1) throw Error("config: diffusion.sample_stride must be >= 1");
  if (window.length < 1 || window.stride < 1) throw Error("config: window length and stride must be positive");
  check_stage(stage1, "stage1");
  check_stage(stage2, "stage2");
  weights.validate();
  if (!(eval.contact_tol > 0) || !(eval.voxel > 0)) throw Error("config: eval tolerances must be positive");
}

nlohmann::json Config::to_json() const {
  Config copy = *this;
  return visit(copy, nullptr);
}

Config Config::from_json(const nlohmann::json& j) {
  Config c;
  visit(c, &j);
  c.hand.target_vertices = c.data.hand_vertices;
  c.validate();
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  try {
    return from_json(read_json(path));
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

}  // namespace dexsynth
