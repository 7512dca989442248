#pragma once

#include <array>
#include <vector>

#include <nlohmann/json.hpp>

#include "dexsynth/hand_model.hpp"
#include "dexsynth/object_model.hpp"
#include "dexsynth/residual.hpp"

namespace dexsynth {

struct LossWeights {
  double contact = 1.0;
  double embedding = 1.0;
  double data = 1.0;
  double pen = 10.0;
  double joints = 1.0;
  double vel = 1.0;
  double att = 0.5;
  double consist = 0.5;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep the defaults of `base`.
  static LossWeights from_json(const nlohmann::json& j, const LossWeights& base);
  static LossWeights from_json(const nlohmann::json& j);
};

/// Column layout of a flattened map frame (see ContactFrame::flatten).
struct MapLayout {
  int points = 0;
  int dim = 0;
  int stride() const { return 1 + dim; }
  int width() const { return points * kHands * stride(); }
  int column(int point, int hand, int channel) const { return (point * kHands + hand) * stride() + channel; }
};

struct Stage1Loss {
  double total = 0.0;
  double contact = 0.0;    // mean BCE over points, hands and valid frames
  double embedding = 0.0;  // mean squared E error over entries with gt C > 0.5
};

/// pred and gt are L x width maps with C as probabilities. When `grad` is
/// given it receives d(total)/d(pred) for the E channels and d(total)/d(logit)
/// for the C channels, where C = sigmoid(logit).
Stage1Loss stage1_loss(const MatX& pred, const MatX& gt, const MapLayout& layout, const LossWeights& weights,
                       const std::vector<char>& valid = {}, MatX* grad = nullptr);

/// For every map point with C > 0: the hand vertex whose embedding is closest
/// to the point's E_map row (-1 elsewhere).
std::array<std::vector<int>, kHands> consistency_match(const EmbeddingTable& table, const ContactFrame& frame);

/// Ground truth and geometry for one window, all in the object frame.
struct Stage2Target {
  const std::array<HandRig, kHands>* rigs = nullptr;
  MatX gt_pose;  // L x 198
  std::array<bool, kHands> present{false, false};
  std::vector<char> valid;
  std::vector<std::array<Points, kHands>> gt_vertices;
  std::vector<std::array<Points, kHands>> gt_joints;
  std::vector<ContactFrame> maps;  // unmasked ground-truth maps
  std::vector<ResidualMatch> match;
  std::vector<std::array<std::vector<int>, kHands>> consist;
  const ObjectSdf* sdf = nullptr;
  std::vector<double> articulation;
  double sigma_c = 0.02;

  int frames() const { return static_cast<int>(gt_pose.rows()); }
  bool frame_valid(int l) const { return valid.empty() || valid[l] != 0; }
};

struct Stage2Loss {
  double total = 0.0;
  double data = 0.0;
  double pen = 0.0;
  double joints = 0.0;
  double vel = 0.0;
  double att = 0.0;
  double consist = 0.0;
};

/// Six-term pose loss on raw (unnormalised) poses; `grad` receives
/// d(total)/d(pred) when given. L_pen is only evaluated when `with_pen`.
Stage2Loss stage2_loss(const MatX& pred, const Stage2Target& target, const LossWeights& weights, bool with_pen,
                       MatX* grad = nullptr);

}  // namespace dexsynth
