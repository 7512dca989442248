#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dexsynth/bps.hpp"
#include "dexsynth/config.hpp"
#include "dexsynth/sampling.hpp"

namespace dexsynth {

/// Object-side features of a trajectory, all in the object frame.
struct ObjectFeatures {
  std::vector<Points> surface_points;  // per frame, n x 3
  MatX bps;                            // L x 3n
  MatX motion;                         // L x 10
  std::vector<double> articulation;

  int frames() const { return static_cast<int>(bps.rows()); }
};

/// The BPS centre of an object: its rest-pose bounding sphere centre.
Vec3 bps_center(const ArticulatedObject& object);

ObjectFeatures object_features(const ArticulatedObject& object, const ObjectSequenceWorld& trajectory,
                               const BasisPointSet& basis);

/// Rows [begin, begin + real) of `m`, zero-padded to `length` rows.
MatX window_rows(const MatX& m, int begin, int real, int length);

/// A ground-truth scene expressed in the object frame with everything the
/// losses need precomputed. `range` is the frame span used for training.
struct PreparedScene {
  std::string name;
  Scene scene;
  ObjectFeatures object;
  ContactSequence maps;
  FrameRange range;
  MatX pose;  // L x 198, object frame
  std::vector<std::array<Points, kHands>> vertices;
  std::vector<std::array<Points, kHands>> joints;
  std::vector<ResidualMatch> match;
  std::vector<std::array<std::vector<int>, kHands>> consist;
  ResidualMatch empty_match;
  std::shared_ptr<const ObjectSdf> sdf;

  /// Object window over sequence frames [range.begin + w.start, ...).
  ObjectWindow object_window(const Window& w) const;
  Stage2Target target(const Window& w, const std::array<HandRig, kHands>& rigs, double sigma_c) const;
};

/// `maps` must cover every frame of the scene. With `full_range` the clip
/// is skipped. The SDF is only built when `with_sdf`.
PreparedScene prepare_scene(std::string name, Scene scene, ContactSequence maps, const std::array<HandRig, kHands>& rigs,
                            const BasisPointSet& basis, const EmbeddingTable& table, const ContactConfig& contact,
                            bool full_range, bool with_sdf);

struct TrainLogRow {
  int step = 0;
  double learning_rate = 0.0;
  double grad_norm = 0.0;  // mean pre-clip norm over the interval
  double total = 0.0;
  std::vector<std::pair<std::string, double>> components;  // interval means
};

struct TrainOptions {
  StageConfig stage;
  LossWeights weights;
  ContactConfig contact;
  WindowConfig window;
  NoiseSchedule schedule;
  std::uint64_t seed = 0;
  /// Cycle through the evaluation windows of the first scene instead of
  /// drawing random windows, with condition masking off.
  bool overfit_one = false;
  std::function<void(const TrainLogRow&)> on_log;
  /// Called every stage.checkpoint_every steps before the last one.
  std::function<void(int, const Stage1Model&)> on_stage1_checkpoint;
  std::function<void(int, const Stage2Model&)> on_stage2_checkpoint;
};

double scheduled_learning_rate(const StageConfig& stage, int step);

Stage1Model train_stage1(const std::vector<PreparedScene>& scenes, const TrainOptions& options);

Stage2Model train_stage2(const std::vector<PreparedScene>& scenes, const std::array<HandRig, kHands>& rigs,
                         const EmbeddingTable& table, const TrainOptions& options);

}  // namespace dexsynth
