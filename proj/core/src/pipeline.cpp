#include "dexsynth/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "dexsynth/array_io.hpp"
#include "dexsynth/geometry.hpp"
#include "dexsynth/metrics.hpp"
#include "dexsynth/scene_io.hpp"

namespace dexsynth {

namespace {

constexpr int kSynthRetries = 10;

std::string scene_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%03d", i);
  return buf;
}

std::string frame_name(const char* prefix, int l) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%04d.obj", prefix, l);
  return buf;
}

void require_file(const fs::path& p, const char* what) {
  if (p.empty()) throw Error(std::string("missing ") + what);
  if (!fs::is_regular_file(p)) throw Error(std::string(what) + " not found: " + p.string());
}

std::array<HandRig, kHands> rigs_of(const HandRig& right) { return bimanual_rigs(right); }

BimanualPose canonical_to_world(const BimanualPose& canonical, const Mat3& r, const Vec3& d) {
  BimanualPose out;
  out.present = canonical.present;
  for (int h = 0; h < kHands; ++h) {
    if (canonical.present[h]) out.hands[h] = decanonicalize_hand(canonical.hands[h], r, d);
  }
  return out;
}

struct MapsIndexEntry {
  std::string name;
  std::string file;
  FrameRange clip;
};

std::vector<MapsIndexEntry> load_maps_index(const fs::path& maps) {
  const auto j = read_json(maps / "index.json");
  if (j.value("format", "") != "dexsynth-maps-index") throw Error((maps / "index.json").string() + ": not a maps index");
  std::vector<MapsIndexEntry> out;
  for (const auto& e : j.at("scenes")) {
    const auto clip = e.at("clip").get<std::vector<int>>();
    out.push_back({e.at("name").get<std::string>(), e.at("file").get<std::string>(), {clip.at(0), clip.at(1)}});
  }
  return out;
}

// Loads the training split (or its first scene) with maps from build-maps.
std::vector<PreparedScene> load_training_scenes(const Config& config, const TrainPaths& paths, bool overfit_one,
                                                bool with_sdf, HandRig* rig_out, BasisPointSet* basis_out,
                                                EmbeddingTable* table_out) {
  const Dataset data = Dataset::load(paths.data);
  require_file(paths.embedding, "embedding file");
  const EmbeddingTable table = embedding_from_json(read_json(paths.embedding));
  if (table.rows() != data.rig.vertex_count()) throw Error("embedding rows do not match the rig vertex count");
  const BasisPointSet basis = basis_from_json(read_json(paths.maps / "bps.json"));
  const auto index = load_maps_index(paths.maps);
  const auto rigs = rigs_of(data.rig);
  std::vector<PreparedScene> scenes;
  for (const auto& e : data.entries) {
    if (!e.train) continue;
    const MapsIndexEntry* m = nullptr;
    for (const auto& x : index) {
      if (x.name == e.name) m = &x;
    }
    if (!m) throw Error("no maps for scene " + e.name + " in " + paths.maps.string());
    ContactSequence maps = read_contact_sequence(paths.maps / m->file);
    scenes.push_back(prepare_scene(e.name, data.scene(e), std::move(maps), rigs, basis, table, config.contact, overfit_one,
                                   with_sdf));
    if (overfit_one) break;
  }
  if (scenes.empty()) throw Error("dataset has no training scenes");
  *rig_out = data.rig;
  *basis_out = basis;
  *table_out = table;
  return scenes;
}

class CsvLog {
 public:
  CsvLog(const fs::path& path, std::vector<std::string> components) : out_(path) {
    if (!out_) throw Error("cannot write " + path.string());
    out_ << "step,lr,grad_norm,total";
    for (const auto& c : components) out_ << ',' << c;
    out_ << '\n';
    out_ << std::setprecision(10);
  }
  void write(const TrainLogRow& row) {
    out_ << row.step << ',' << row.learning_rate << ',' << row.grad_norm << ',' << row.total;
    for (const auto& [name, v] : row.components) out_ << ',' << v;
    out_ << '\n';
    out_.flush();
    last_ = row;
  }
  const TrainLogRow& last() const { return last_; }

 private:
  std::ofstream out_;
  TrainLogRow last_;
};

TrainOptions train_options(const Config& config, const StageConfig& stage, std::uint64_t seed, bool overfit_one) {
  TrainOptions o;
  o.stage = stage;
  o.weights = config.weights;
  o.contact = config.contact;
  o.window = config.window;
  o.schedule = config.diffusion.schedule();
  o.seed = seed;
  o.overfit_one = overfit_one;
  return o;
}

nlohmann::json checkpoint_meta(const Config& config, std::uint64_t seed, int steps, bool overfit_one,
                               const BasisPointSet& basis) {
  return {{"seed", seed},
          {"step", steps},
          {"overfit_one", overfit_one},
          {"config", config.to_json()},
          {"bps", basis_to_json(basis)},
          {"sigma_c", config.contact.sigma_c}};
}

std::vector<std::array<Points, kHands>> posed_vertices(const std::vector<BimanualPose>& canonical,
                                                       const std::array<HandRig, kHands>& rigs,
                                                       const std::array<bool, kHands>& present) {
  std::vector<std::array<Points, kHands>> out(canonical.size());
  for (size_t l = 0; l < canonical.size(); ++l) {
    for (int h = 0; h < kHands; ++h) {
      if (present[h]) out[l][h] = forward_kinematics(rigs[h], canonical[l].hands[h]).vertices;
    }
  }
  return out;
}


nlohmann::json metric_value(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

}  // namespace

OutputGuard::~OutputGuard() {
  if (committed_) return;
  for (auto it = created_.rbegin(); it != created_.rend(); ++it) {
    std::error_code ec;
    fs::remove_all(*it, ec);
  }
}

const fs::path& OutputGuard::dir(const fs::path& dir) {
  if (dir.empty()) throw Error("missing output directory");
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw Error(dir.string() + " exists and is not a directory");
    return dir;
  }
  // Record the outermost directory we create so cleanup removes all of it.
  fs::path top = dir;
  while (top.has_parent_path() && !top.parent_path().empty() && !fs::exists(top.parent_path())) top = top.parent_path();
  fs::create_directories(dir);
  created_.push_back(top);
  return dir;
}

const fs::path& OutputGuard::file(const fs::path& file) {
  if (file.empty()) throw Error("missing output path");
  if (file.has_parent_path() && !file.parent_path().empty()) dir(file.parent_path());
  created_.push_back(file);
  return file;
}

Dataset Dataset::load(const fs::path& root) {
  require_file(root / "dataset.json", "dataset index");
  const auto j = read_json(root / "dataset.json");
  if (j.value("format", "") != "dexsynth-dataset") throw Error((root / "dataset.json").string() + ": not a dataset index");
  Dataset d;
  d.root = root;
  for (const auto& e : j.at("scenes")) {
    d.entries.push_back({e.at("name").get<std::string>(), e.at("file").get<std::string>(), e.at("split").get<std::string>() == "train"});
  }
  d.rig = rig_from_json(read_json(root / j.at("rig").get<std::string>()));
  return d;
}

Scene Dataset::scene(const DatasetEntry& e) const { return scene_from_json(read_json(root / e.file)); }

void synth_data(const Config& config, std::uint64_t seed, const fs::path& out) {
  OutputGuard guard;
  guard.dir(out);
  const HandRig rig = make_toy_hand(config.hand);
  write_json(guard.file(out / "rig.json"), rig_to_json(rig));

  const int total = config.data.train_scenes + config.data.test_scenes;
  std::set<ObjectKind> train_kinds;
  nlohmann::json entries = nlohmann::json::array();
  std::uint64_t stream = 100;
  for (int i = 0; i < total; ++i) {
    const bool train = i < config.data.train_scenes;
    std::optional<Scene> scene;
    for (int attempt = 0; attempt < kSynthRetries && !scene; ++attempt) {
      const SceneSpec spec = random_scene_spec(derive_seed(seed, stream++), config.data.frames);
      // Held-out scenes only use object kinds seen in training.
      if (!train && !train_kinds.count(spec.object)) {
        --attempt;
        continue;
      }
      try {
        scene = generate_scene(spec, rig, config.synth);
      } catch (const Error& e) {
        warn(std::string("synth-data: discarded a ") + to_string(spec.object) + " scene: " + e.what());
      }
    }
    if (!scene) throw Error("synth-data: scene " + std::to_string(i) + " failed after repeated closure failures");
    if (train) train_kinds.insert(scene->spec.object);
    const std::string name = scene_name(i);
    write_json(guard.file(out / (name + ".json")), scene_to_json(*scene));
    entries.push_back({{"name", name}, {"file", name + ".json"}, {"split", train ? "train" : "test"},
                       {"object", to_string(scene->spec.object)}, {"trajectory", to_string(scene->spec.trajectory)}});
  }
  write_json(guard.file(out / "dataset.json"),
             {{"format", "dexsynth-dataset"}, {"seed", seed}, {"rig", "rig.json"}, {"config", config.to_json()}, {"scenes", entries}});
  guard.commit();
}

EmbeddingFit embed_optimize(const Config& config, std::uint64_t seed, const fs::path& rig_path, const fs::path& out) {
  require_file(rig_path, "rig file");
  const HandRig rig = rig_from_json(read_json(rig_path));
  OutputGuard guard;
  guard.file(out);
  EmbeddingOptions o;
  o.dim = config.embedding.dim;
  o.sigma_g = config.embedding.sigma_g;
  o.steps = config.embedding.steps;
  o.learning_rate = config.embedding.learning_rate;
  o.seed = seed;
  const MatX geo = geodesic_matrix(rig_mesh(rig, rig.template_vertices));
  EmbeddingFit fit = optimize_embeddings(geo, o);
  nlohmann::json j = embedding_to_json(fit.table);
  j["fit"] = {{"seed", seed},
              {"initial_loss", fit.initial_loss},
              {"final_loss", fit.final_loss},
              {"checkpoint_losses", fit.checkpoint_losses}};
  write_json(out, j);
  guard.commit();
  return fit;
}

void build_maps(const Config& config, const fs::path& data_root, const fs::path& embedding, const fs::path& out) {
  const Dataset data = Dataset::load(data_root);
  require_file(embedding, "embedding file");
  const EmbeddingTable table = embedding_from_json(read_json(embedding));
  if (table.rows() != data.rig.vertex_count()) throw Error("embedding rows do not match the rig vertex count");
  const auto rigs = rigs_of(data.rig);
  const BasisPointSet basis = BasisPointSet::sample(config.bps.points, config.bps.radius, config.bps.seed);

  OutputGuard guard;
  guard.dir(out);
  write_json(guard.file(out / "bps.json"), basis_to_json(basis));
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : data.entries) {
    const Scene scene = data.scene(e);
    const ObjectFeatures features = object_features(scene.object, scene.trajectory, basis);
    ContactScene cs;
    cs.surface_points = features.surface_points;
    for (int l = 0; l < scene.frames(); ++l) {
      const BimanualPose c = scene.canonical_hands(l);
      std::array<Points, kHands> v;
      for (int h = 0; h < kHands; ++h) {
        if (scene.present[h]) v[h] = forward_kinematics(rigs[h], c.hands[h]).vertices;
      }
      cs.hand_vertices.push_back(std::move(v));
    }
    const ContactSequence maps = build_gt_maps(cs, table, config.contact.sigma_c);
    const FrameRange clip = clip_silent(maps, config.contact.clip_threshold, config.contact.clip_margin);
    write_contact_sequence(guard.file(out / (e.name + ".dxa")), maps);
    entries.push_back({{"name", e.name}, {"file", e.name + ".dxa"}, {"clip", {clip.begin, clip.end}}});
  }
  write_json(guard.file(out / "index.json"), {{"format", "dexsynth-maps-index"}, {"bps", "bps.json"}, {"scenes", entries}});
  guard.commit();
}

namespace {

/// run.dxa -> run.step001000.dxa
fs::path step_checkpoint_path(const fs::path& out, int step) {
  char tag[32];
  std::snprintf(tag, sizeof tag, ".step%06d", step);
  return out.parent_path() / (out.stem().string() + tag + out.extension().string());
}

}  // namespace

TrainLogRow train_stage1_command(const Config& config, std::uint64_t seed, const TrainPaths& paths, bool overfit_one) {
  HandRig rig;
  BasisPointSet basis;
  EmbeddingTable table;
  const auto scenes = load_training_scenes(config, paths, overfit_one, false, &rig, &basis, &table);
  OutputGuard guard;
  guard.file(paths.out);
  CsvLog log(guard.file(paths.log), {"contact", "embedding"});
  TrainOptions o = train_options(config, config.stage1, seed, overfit_one);
  o.on_log = [&](const TrainLogRow& row) { log.write(row); };
  o.on_stage1_checkpoint = [&](int step, const Stage1Model& m) {
    m.save(guard.file(step_checkpoint_path(paths.out, step)), checkpoint_meta(config, seed, step, overfit_one, basis));
  };
  const Stage1Model model = train_stage1(scenes, o);
  model.save(paths.out, checkpoint_meta(config, seed, config.stage1.steps, overfit_one, basis));
  guard.commit();
  return log.last();
}

TrainLogRow train_stage2_command(const Config& config, std::uint64_t seed, const TrainPaths& paths, bool overfit_one) {
  HandRig rig;
  BasisPointSet basis;
  EmbeddingTable table;
  const bool with_pen = config.stage2.pen_warmup < config.stage2.steps;
  const auto scenes = load_training_scenes(config, paths, overfit_one, with_pen, &rig, &basis, &table);
  const auto rigs = rigs_of(rig);
  OutputGuard guard;
  guard.file(paths.out);
  CsvLog log(guard.file(paths.log), {"data", "pen", "joints", "vel", "att", "consist"});
  TrainOptions o = train_options(config, config.stage2, seed, overfit_one);
  o.on_log = [&](const TrainLogRow& row) { log.write(row); };
  o.on_stage2_checkpoint = [&](int step, const Stage2Model& m) {
    nlohmann::json meta = checkpoint_meta(config, seed, step, overfit_one, basis);
    meta["rig"] = rig_to_json(rig);
    m.save(guard.file(step_checkpoint_path(paths.out, step)), meta);
  };
  const Stage2Model model = train_stage2(scenes, rigs, table, o);
  nlohmann::json meta = checkpoint_meta(config, seed, config.stage2.steps, overfit_one, basis);
  meta["rig"] = rig_to_json(rig);
  model.save(paths.out, meta);
  guard.commit();
  return log.last();
}

GenerationInput GenerationInput::load(const fs::path& path) {
  require_file(path, "input trajectory");
  const auto j = read_json(path);
  const std::string format = j.value("format", "");
  GenerationInput in;
  if (format == "dexsynth-scene") {
    // Only the object side is read; which hands engage comes from the maps.
    const Scene s = scene_from_json(j);
    in.object = s.object;
    in.trajectory = s.trajectory;
  } else if (format == "dexsynth-trajectory") {
    in.object = object_from_json(j.at("object"));
    in.trajectory = trajectory_from_json(j.at("trajectory"));
    if (j.contains("present")) {
      const auto p = j.at("present").get<std::vector<bool>>();
      if (p.size() != kHands) throw Error(path.string() + ": present must have two entries");
      in.present = std::array<bool, kHands>{p[0], p[1]};
    }
  } else {
    throw Error(path.string() + ": expected a scene or trajectory document");
  }
  if (in.trajectory.frames() < 1) throw Error(path.string() + ": empty trajectory");
  return in;
}

Generated generate_sequence(const Config& config, std::uint64_t seed, const GenerationInput& input,
                            const Stage1Model* stage1, const Stage2Model& stage2, const BasisPointSet& basis,
                            const std::array<HandRig, kHands>& rigs, const ContactSequence* gt_maps) {
  const int frames = input.trajectory.frames();
  const ObjectFeatures features = object_features(input.object, input.trajectory, basis);
  const NoiseSchedule schedule = config.diffusion.schedule();
  const int stride = config.diffusion.sample_stride;
  Generated out;
  out.windows = eval_windows(frames, config.window.length, config.window.stride);
  const auto owner = stitch_assignment(out.windows, frames);
  const MapLayout layout = stage2.layout;
  if (features.bps.cols() != 3 * layout.points) throw Error("generate: BPS size does not match the checkpoint");

  auto object_window = [&](const Window& w) {
    ObjectWindow o;
    o.bps = window_rows(features.bps, w.start, w.real, w.length);
    o.motion = window_rows(features.motion, w.start, w.real, w.length);
    o.valid = w.valid;
    return o;
  };

  if (gt_maps) {
    if (gt_maps->length() != frames || gt_maps->points() != layout.points || gt_maps->dim() != layout.dim) {
      throw Error("generate: supplied maps do not match the trajectory and checkpoint");
    }
    out.maps = *gt_maps;
  } else {
    if (!stage1) throw Error("generate: a stage-1 checkpoint or maps are required");
    if (stage1->layout.points != layout.points || stage1->layout.dim != layout.dim) {
      throw Error("generate: stage-1 and stage-2 checkpoints disagree on the map layout");
    }
    MatX stitched(frames, layout.width());
    for (size_t k = 0; k < out.windows.size(); ++k) {
      const Window& w = out.windows[k];
      const MatX m = sample_stage1(*stage1, object_window(w), schedule, derive_seed(seed, 10 + k), stride);
      for (int f = w.start; f < w.start + w.real; ++f) {
        if (owner[f] == static_cast<int>(k)) stitched.row(f) = m.row(f - w.start);
      }
    }
    out.maps.frames = maps_from_matrix(stitched, layout, features.surface_points);
    out.maps.sigma_c = config.contact.sigma_c;
  }

  std::array<bool, kHands> present{false, false};
  if (input.present) {
    present = *input.present;
  } else {
    for (const auto& f : out.maps.frames) {
      for (int h = 0; h < kHands; ++h) present[h] = present[h] || f.contact.col(h).maxCoeff() > 0.5;
    }
  }

  MatX poses(frames, kBimanualPoseDim);
  for (size_t k = 0; k < out.windows.size(); ++k) {
    const Window& w = out.windows[k];
    Stage2Window cond;
    cond.object = object_window(w);
    cond.present = present;
    for (int l = 0; l < w.length; ++l) {
      cond.maps.push_back(l < w.real ? out.maps.frames[w.start + l]
                                     : ContactFrame::zeros(features.surface_points[0], layout.dim));
      cond.maps.back().gate_embeddings(stage2.embedding_gate);
      cond.match.push_back(match_residual(stage2.table, cond.maps.back(), stage2.embedding_gate));
    }
    const MatX p = sample_stage2(stage2, cond, rigs, schedule, derive_seed(seed, 1000 + k), stride);
    for (int f = w.start; f < w.start + w.real; ++f) {
      if (owner[f] == static_cast<int>(k)) poses.row(f) = p.row(f - w.start);
    }
  }

  for (int l = 0; l < frames; ++l) {
    BimanualPose c = unflatten_pose(std::span<const double>(poses.row(l).data(), kBimanualPoseDim));
    c.present = present;
    out.hands.push_back(canonical_to_world(c, input.trajectory.rotation[l], input.trajectory.translation[l]));
  }
  return out;
}

void generate_command(const Config& config, std::uint64_t seed, const GeneratePaths& paths) {
  const GenerationInput input = GenerationInput::load(paths.input);
  require_file(paths.stage2, "stage-2 checkpoint");
  nlohmann::json meta2;
  const Stage2Model stage2 = Stage2Model::load(paths.stage2, &meta2);
  const BasisPointSet basis = basis_from_json(meta2.at("bps"));
  const auto rigs = rigs_of(rig_from_json(meta2.at("rig")));
  std::optional<Stage1Model> stage1;
  std::optional<ContactSequence> gt;
  if (!paths.gt_maps.empty()) {
    require_file(paths.gt_maps, "maps file");
    gt = read_contact_sequence(paths.gt_maps);
  } else {
    require_file(paths.stage1, "stage-1 checkpoint");
    nlohmann::json meta1;
    stage1 = Stage1Model::load(paths.stage1, &meta1);
    if (meta1.at("bps") != meta2.at("bps")) throw Error("stage-1 and stage-2 checkpoints use different BPS bases");
  }

  const Generated g = generate_sequence(config, seed, input, stage1 ? &*stage1 : nullptr, stage2, basis, rigs,
                                        gt ? &*gt : nullptr);
  OutputGuard guard;
  guard.dir(paths.out);
  write_json(guard.file(paths.out / "hands.json"), hand_sequence_to_json(g.hands));
  write_contact_sequence(guard.file(paths.out / "maps.dxa"), g.maps);
  const fs::path meshes = guard.dir(paths.out / "meshes");
  for (int l = 0; l < input.trajectory.frames(); ++l) {
    const Mat3& r = input.trajectory.rotation[l];
    const Vec3& d = input.trajectory.translation[l];
    const double a = input.trajectory.articulation.empty() ? 0.0 : input.trajectory.articulation[l];
    write_obj(guard.file(meshes / frame_name("object", l)), input.object.posed(a).transformed(r, d));
    TriMesh hands;
    for (int h = 0; h < kHands; ++h) {
      if (!g.hands[l].present[h]) continue;
      hands = merge(hands, rig_mesh(rigs[h], forward_kinematics(rigs[h], g.hands[l].hands[h]).vertices));
    }
    write_obj(guard.file(meshes / frame_name("hands", l)), hands);
  }
  nlohmann::json windows = nlohmann::json::array();
  for (const auto& w : g.windows) windows.push_back({w.start, w.real});
  write_json(guard.file(paths.out / "manifest.json"),
             {{"format", "dexsynth-generation"},
              {"seed", seed},
              {"frames", input.trajectory.frames()},
              {"used_supplied_maps", gt.has_value()},
              {"sample_stride", config.diffusion.sample_stride},
              {"windows", windows}});
  guard.commit();
}

nlohmann::json evaluate_command(const Config& config, const EvaluatePaths& paths) {
  if (paths.scenes.empty()) throw Error("evaluate: no sequences given");
  if (paths.hands.size() != paths.scenes.size()) throw Error("evaluate: need one --hands per --scene");
  if (!paths.maps.empty() && paths.maps.size() != paths.scenes.size()) throw Error("evaluate: need one --maps per --scene");
  require_file(paths.rig, "rig file");
  require_file(paths.bps, "BPS file");
  require_file(paths.embedding, "embedding file");
  const HandRig rig = rig_from_json(read_json(paths.rig));
  const auto rigs = rigs_of(rig);
  const BasisPointSet basis = basis_from_json(read_json(paths.bps));
  const EmbeddingTable table = embedding_from_json(read_json(paths.embedding));
  const EvalConfig& ec = config.eval;

  nlohmann::json sequences = nlohmann::json::array();
  double pen_sum = 0.0;
  long ratio_hits = 0, ratio_count = 0, hold_hits = 0, hold_count = 0, mpvpe_count = 0;
  double mpvpe_sum = 0.0;
  for (size_t s = 0; s < paths.scenes.size(); ++s) {
    require_file(paths.scenes[s], "scene file");
    require_file(paths.hands[s], "hands file");
    const Scene scene = scene_from_json(read_json(paths.scenes[s]));
    const auto hj = read_json(paths.hands[s]);
    const auto pred_world =
        hj.value("format", "") == "dexsynth-scene" ? hand_sequence_from_json(hj.at("hands")) : hand_sequence_from_json(hj);
    const int frames = scene.frames();
    if (static_cast<int>(pred_world.size()) != frames) throw Error(paths.hands[s].string() + ": frame count differs from the scene");

    std::vector<BimanualPose> gt(frames);
    std::vector<std::array<Points, kHands>> pv(frames);
    for (int l = 0; l < frames; ++l) {
      gt[l] = scene.canonical_hands(l);
      for (int h = 0; h < kHands; ++h) {
        if (!pred_world[l].present[h]) continue;
        const HandPose c =
            canonicalize_hand(pred_world[l].hands[h], scene.trajectory.rotation[l], scene.trajectory.translation[l]);
        pv[l][h] = forward_kinematics(rigs[h], c).vertices;
      }
    }
    const auto gv = posed_vertices(gt, rigs, scene.present);

    const ObjectFeatures features = object_features(scene.object, scene.trajectory, basis);
    const ContactSequence gt_maps = build_gt_maps({features.surface_points, gv}, table, config.contact.sigma_c);
    ContactSequence gate_maps = gt_maps;
    if (!paths.maps.empty()) {
      require_file(paths.maps[s], "maps file");
      gate_maps = read_contact_sequence(paths.maps[s]);
      if (gate_maps.length() != frames) throw Error(paths.maps[s].string() + ": frame count differs from the scene");
    }

    SequenceGeometry geom;
    for (int l = 0; l < frames; ++l) {
      std::array<TriMesh, kHands> hands;
      for (int h = 0; h < kHands; ++h) {
        if (pv[l][h].rows() > 0) hands[h] = rig_mesh(rigs[h], pv[l][h]);
      }
      geom.hands.push_back(std::move(hands));
      geom.objects.push_back(scene.object.posed(features.articulation[l]));
    }
    const double pen = sequence_penetration(geom, ec.voxel);
    const GatedMetric ratio = valid_contact_ratio(geom, gate_maps, ec.contact_tol, ec.gate);

    SequenceGeometry hold_geom;
    ContactSequence hold_maps;
    hold_maps.sigma_c = gate_maps.sigma_c;
    for (int l = 0; l < frames; ++l) {
      if (l < static_cast<int>(scene.phase.size()) && scene.phase[l] == Phase::Hold) {
        hold_geom.hands.push_back(geom.hands[l]);
        hold_geom.objects.push_back(geom.objects[l]);
        hold_maps.frames.push_back(gate_maps.frames[l]);
      }
    }
    GatedMetric hold{std::numeric_limits<double>::quiet_NaN(), 0};
    if (hold_maps.length() > 0) hold = valid_contact_ratio(hold_geom, hold_maps, ec.contact_tol, ec.gate);
    const GatedMetric err = v_mpvpe(pv, gv, gt_maps, table, ec.gate);

    pen_sum += pen;
    if (ratio.count > 0) {
      ratio_hits += std::lround(ratio.value * ratio.count);
      ratio_count += ratio.count;
    }
    if (hold.count > 0) {
      hold_hits += std::lround(hold.value * hold.count);
      hold_count += hold.count;
    }
    if (err.count > 0) {
      mpvpe_sum += err.value * err.count;
      mpvpe_count += err.count;
    }
    sequences.push_back({{"scene", paths.scenes[s].filename().string()},
                         {"frames", frames},
                         {"penetration_cm3", pen},
                         {"valid_contact_ratio", metric_value(ratio.value)},
                         {"valid_contact_count", ratio.count},
                         {"valid_contact_ratio_hold", metric_value(hold.value)},
                         {"valid_contact_count_hold", hold.count},
                         {"v_mpvpe_cm", metric_value(err.value)},
                         {"v_mpvpe_count", err.count}});
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  nlohmann::json aggregate = {
      {"scene", "aggregate"},
      {"frames", nullptr},
      {"penetration_cm3", pen_sum / static_cast<double>(paths.scenes.size())},
      {"valid_contact_ratio", metric_value(ratio_count > 0 ? static_cast<double>(ratio_hits) / ratio_count : nan)},
      {"valid_contact_count", ratio_count},
      {"valid_contact_ratio_hold", metric_value(hold_count > 0 ? static_cast<double>(hold_hits) / hold_count : nan)},
      {"valid_contact_count_hold", hold_count},
      {"v_mpvpe_cm", metric_value(mpvpe_count > 0 ? mpvpe_sum / mpvpe_count : nan)},
      {"v_mpvpe_count", mpvpe_count}};
  nlohmann::json result = {{"format", "dexsynth-metrics"}, {"sequences", sequences}, {"aggregate", aggregate}};

  OutputGuard guard;
  guard.dir(paths.out);
  write_json(guard.file(paths.out / "metrics.json"), result);
  std::ofstream csv(guard.file(paths.out / "metrics.csv"));
  const char* columns[] = {"scene", "frames", "penetration_cm3", "valid_contact_ratio", "valid_contact_count",
                           "valid_contact_ratio_hold", "valid_contact_count_hold", "v_mpvpe_cm", "v_mpvpe_count"};
  for (size_t c = 0; c < std::size(columns); ++c) csv << (c ? "," : "") << columns[c];
  csv << '\n' << std::setprecision(10);
  auto row = [&](const nlohmann::json& r) {
    for (size_t c = 0; c < std::size(columns); ++c) {
      const auto& v = r.at(columns[c]);
      csv << (c ? "," : "");
      if (v.is_string()) csv << v.get<std::string>();
      else if (v.is_null()) csv << "nan";
      else if (v.is_number_integer()) csv << v.get<long>();
      else csv << v.get<double>();
    }
    csv << '\n';
  };
  for (const auto& r : sequences) row(r);
  row(aggregate);
  csv.close();
  if (!csv) throw Error("failed while writing metrics.csv");
  guard.commit();
  return result;
}

void export_viz_command(const Config& config, const ExportPaths& paths) {
  require_file(paths.embedding, "embedding file");
  require_file(paths.rig, "rig file");
  const EmbeddingTable table = embedding_from_json(read_json(paths.embedding));
  const auto rigs = rigs_of(rig_from_json(read_json(paths.rig)));
  if (table.rows() != rigs[1].vertex_count()) throw Error("embedding rows do not match the rig vertex count");
  const Points colors = table.colors();

  OutputGuard guard;
  guard.dir(paths.out);
  write_obj(guard.file(paths.out / "hand_right_embedding.obj"), rig_mesh(rigs[1], rigs[1].template_vertices), colors);
  write_obj(guard.file(paths.out / "hand_left_embedding.obj"), rig_mesh(rigs[0], rigs[0].template_vertices), colors);

  if (!paths.maps.empty()) {
    require_file(paths.maps, "maps file");
    const ContactSequence maps = read_contact_sequence(paths.maps);
    if (paths.frame < 0 || paths.frame >= maps.length()) throw Error("export-viz: frame out of range");
    if (maps.dim() != table.dim()) throw Error("export-viz: map and embedding dimensions differ");
    const ContactFrame& f = maps.frames[paths.frame];
    const int k = std::min(3, table.dim());
    const VecX lo = table.values.leftCols(k).colwise().minCoeff().transpose();
    const VecX hi = table.values.leftCols(k).colwise().maxCoeff().transpose();
    const char* names[] = {"left", "right"};
    for (int h = 0; h < kHands; ++h) {
      Points contact(f.points(), 3), emb = Points::Zero(f.points(), 3);
      for (int q = 0; q < f.points(); ++q) {
        const double c = f.contact(q, h);
        contact.row(q) << c, 0.2 * (1.0 - c), 1.0 - c;
        if (c > config.eval.gate) {
          for (int a = 0; a < k; ++a) {
            const double span = hi[a] - lo[a];
            emb(q, a) = span > 0 ? std::clamp((f.embedding[h](q, a) - lo[a]) / span, 0.0, 1.0) : 0.5;
          }
        }
      }
      TriMesh cloud;
      cloud.vertices = f.surface_points;
      cloud.faces.resize(0, 3);
      const std::string stem = "frame_" + std::to_string(paths.frame) + "_" + names[h];
      write_obj(guard.file(paths.out / (stem + "_contact.obj")), cloud, contact);
      write_obj(guard.file(paths.out / (stem + "_embedding.obj")), cloud, emb);
    }
  }
  guard.commit();
}

}  // namespace dexsynth
