#include <doctest.h>

#include <random>

#include "dexsynth/losses.hpp"
#include "dexsynth/metrics.hpp"
#include "dexsynth/training.hpp"
#include "fixtures.hpp"

using namespace dexsynth;
using dexsynth::testing::toy_rigs;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

const PreparedScene& prepared_box() {
  static const PreparedScene p = [] {
    const Scene& s = dexsynth::testing::fixture_scene(ObjectKind::HingedBox, TrajectoryKind::HingeOpen, HandsUsed::Both);
    const BasisPointSet basis = BasisPointSet::sample(128, 0.12, 42);
    return prepare_scene("fixture", s, dexsynth::testing::scene_gt_maps(s, basis), toy_rigs(), basis,
                         dexsynth::testing::toy_embedding(), ContactConfig{}, true, true);
  }();
  return p;
}

SequenceGeometry gt_geometry(const Scene& s, const std::vector<std::array<Points, kHands>>& hands) {
  SequenceGeometry g;
  for (int l = 0; l < s.frames(); ++l) {
    std::array<TriMesh, kHands> meshes;
    for (int h = 0; h < kHands; ++h) {
      if (hands[l][h].rows() > 0) meshes[h] = rig_mesh(toy_rigs()[h], hands[l][h]);
    }
    g.hands.push_back(meshes);
    g.objects.push_back(s.object.posed(s.trajectory.articulation[l]));
  }
  return g;
}

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("stage-1 loss matches a direct evaluation and its logit gradient") {
    const MapLayout layout{4, 2};
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    const int frames = 3;
    MatX gt(frames, layout.width()), logits(frames, layout.width()), pred(frames, layout.width());
    for (Eigen::Index i = 0; i < gt.size(); ++i) gt.data()[i] = u(rng), logits.data()[i] = g(rng);
    auto decode = [&](const MatX& lg) {
      MatX p = lg;
      for (int l = 0; l < frames; ++l)
        for (int q = 0; q < layout.points; ++q)
          for (int h = 0; h < kHands; ++h) p(l, layout.column(q, h, 0)) = sigmoid(lg(l, layout.column(q, h, 0)));
      return p;
    };
    pred = decode(logits);
    const std::vector<char> valid{1, 1, 0};
    LossWeights w;
    w.contact = 0.7;
    w.embedding = 1.3;

    double bce = 0, emb = 0;
    int gated = 0;
    for (int l = 0; l < 2; ++l) {
      for (int q = 0; q < layout.points; ++q) {
        for (int h = 0; h < kHands; ++h) {
          const int c = layout.column(q, h, 0);
          bce -= gt(l, c) * std::log(pred(l, c)) + (1 - gt(l, c)) * std::log(1 - pred(l, c));
          if (gt(l, c) > 0.5) {
            ++gated;
            for (int k = 1; k <= layout.dim; ++k) emb += std::pow(pred(l, c + k) - gt(l, c + k), 2);
          }
        }
      }
    }
    MatX grad;
    const Stage1Loss loss = stage1_loss(pred, gt, layout, w, valid, &grad);
    CHECK(loss.contact == doctest::Approx(bce / (2 * layout.points * kHands)).epsilon(1e-12));
    CHECK(loss.embedding == doctest::Approx(emb / gated).epsilon(1e-12));
    CHECK(loss.total == doctest::Approx(0.7 * loss.contact + 1.3 * loss.embedding).epsilon(1e-12));
    CHECK(grad.row(2).isZero(0.0));

    for (Eigen::Index i = 0; i < logits.size(); ++i) {
      MatX up = logits, down = logits;
      up.data()[i] += 1e-6;
      down.data()[i] -= 1e-6;
      const double fd = (stage1_loss(decode(up), gt, layout, w, valid).total -
                         stage1_loss(decode(down), gt, layout, w, valid).total) / 2e-6;
      CHECK(dexsynth::testing::relative_error(grad.data()[i], fd, 1e-6) < 1e-5);
    }
  }

  TEST_CASE("stage-2 loss is zero at the ground truth apart from penetration") {
    const PreparedScene& p = prepared_box();
    const auto windows = eval_windows(p.range.size(), 16, 8);
    const Stage2Target target = p.target(windows[2], toy_rigs(), kDefaultContactSigma);
    const Stage2Loss loss = stage2_loss(target.gt_pose, target, LossWeights{}, true);
    CHECK(loss.data == 0.0);
    CHECK(loss.joints == 0.0);
    CHECK(loss.vel == 0.0);
    CHECK(loss.att == 0.0);
    CHECK(loss.pen < 1e-3);
    CHECK(loss.consist < 1e-6);
  }

  TEST_CASE("stage-2 gradient matches finite differences") {
    const PreparedScene& p = prepared_box();
    const auto windows = eval_windows(p.range.size(), 8, 8);
    Window w = windows[3];
    w.valid[6] = 0;
    const Stage2Target target = p.target(w, toy_rigs(), kDefaultContactSigma);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g(0.0, 0.02);
    MatX pred = target.gt_pose;
    for (Eigen::Index i = 0; i < pred.size(); ++i) pred.data()[i] += g(rng);
    LossWeights weights;
    weights.pen = 0.0;  // piecewise-linear SDF interpolation; checked separately below
    MatX grad;
    stage2_loss(pred, target, weights, false, &grad);
    CHECK(grad.row(6).isZero(0.0));
    std::uniform_int_distribution<Eigen::Index> pick(0, pred.size() - 1);
    double worst = 0;
    for (int n = 0; n < 300; ++n) {
      const Eigen::Index i = pick(rng);
      MatX up = pred, down = pred;
      up.data()[i] += 1e-7;
      down.data()[i] -= 1e-7;
      const double fd = (stage2_loss(up, target, weights, false).total - stage2_loss(down, target, weights, false).total) / 2e-7;
      worst = std::max(worst, dexsynth::testing::relative_error(grad.data()[i], fd, 1e-6));
    }
    CHECK(worst < 1e-4);
  }

  TEST_CASE("penetration gradient points out of the object") {
    const PreparedScene& p = prepared_box();
    const auto windows = eval_windows(p.range.size(), 8, 8);
    const Stage2Target target = p.target(windows.back(), toy_rigs(), kDefaultContactSigma);
    MatX pred = target.gt_pose;
    LossWeights only_pen;
    only_pen = LossWeights::from_json({{"data", 0}, {"joints", 0}, {"vel", 0}, {"att", 0}, {"consist", 0}, {"pen", 1}});
    // Push the right hand 2 cm into the object along its palm normal.
    for (int l = 0; l < pred.rows(); ++l) {
      const HandPose hp = HandPose::unflatten(std::span<const double>(pred.row(l).data() + kPoseDim, kPoseDim));
      const Vec3 normal = rot6d_to_matrix(hp.root_rot) * toy_rigs()[1].palm_normal;
      pred.row(l).segment<3>(kPoseDim) += 0.02 * normal.transpose();
    }
    MatX grad;
    const Stage2Loss loss = stage2_loss(pred, target, only_pen, true, &grad);
    CHECK(loss.pen > 0.0);
    const MatX stepped = pred - 1e-2 * grad / grad.norm();
    CHECK(stage2_loss(stepped, target, only_pen, true).pen < loss.pen);
  }

  TEST_CASE("loss weights parse with defaults and reject negatives") {
    const LossWeights w = LossWeights::from_json({{"pen", 3.0}});
    CHECK(w.pen == 3.0);
    CHECK(w.att == LossWeights{}.att);
    CHECK_THROWS_AS(LossWeights::from_json({{"vel", -1.0}}), Error);
  }
}

TEST_SUITE("metrics") {
  TEST_CASE("GT hands have full hold-frame contact and small penetration") {
    for (auto [obj, traj, hands] : {std::tuple{ObjectKind::Box, TrajectoryKind::Lift, HandsUsed::Right},
                                    std::tuple{ObjectKind::Sphere, TrajectoryKind::Arc, HandsUsed::Left},
                                    std::tuple{ObjectKind::HingedBox, TrajectoryKind::HingeOpen, HandsUsed::Both}}) {
      const Scene& s = dexsynth::testing::fixture_scene(obj, traj, hands);
      std::vector<std::array<Points, kHands>> hv;
      const ContactSequence maps = dexsynth::testing::scene_gt_maps(s, BasisPointSet::sample(256, 0.12, 42), &hv);
      const SequenceGeometry geo = gt_geometry(s, hv);
      ContactSequence hold = maps;
      SequenceGeometry hold_geo;
      hold.frames.clear();
      for (int l = 0; l < s.frames(); ++l) {
        if (s.phase[l] != Phase::Hold) continue;
        hold.frames.push_back(maps.frames[l]);
        hold_geo.hands.push_back(geo.hands[l]);
        hold_geo.objects.push_back(geo.objects[l]);
      }
      const GatedMetric ratio = valid_contact_ratio(hold_geo, hold);
      CHECK(ratio.count > 0);
      CHECK(ratio.value == 1.0);
      const double pen = sequence_penetration(geo);
      MESSAGE(to_string(obj) << " GT penetration " << pen << " cm^3");
      CHECK(pen < 1.0);
      const GatedMetric err = v_mpvpe(hv, hv, maps, dexsynth::testing::toy_embedding());
      CHECK(err.count > 0);
      CHECK(err.value == 0.0);
    }
  }

  TEST_CASE("V-MPVPE of a translated hand equals the offset") {
    const Scene& s = dexsynth::testing::fixture_scene(ObjectKind::Box, TrajectoryKind::Lift, HandsUsed::Right);
    std::vector<std::array<Points, kHands>> hv;
    const ContactSequence maps = dexsynth::testing::scene_gt_maps(s, BasisPointSet::sample(256, 0.12, 42), &hv);
    auto moved = hv;
    for (auto& f : moved) f[1].rowwise() += Eigen::RowVector3d(0.003, 0.0, 0.004);
    const GatedMetric err = v_mpvpe(moved, hv, maps, dexsynth::testing::toy_embedding());
    CHECK(err.value == doctest::Approx(0.5).epsilon(1e-9));
  }

  TEST_CASE("V-MPVPE skips frames whose predicted hand is absent") {
    const Scene& s = dexsynth::testing::fixture_scene(ObjectKind::Box, TrajectoryKind::Lift, HandsUsed::Right);
    std::vector<std::array<Points, kHands>> hv;
    const ContactSequence maps = dexsynth::testing::scene_gt_maps(s, BasisPointSet::sample(256, 0.12, 42), &hv);
    const GatedMetric full = v_mpvpe(hv, hv, maps, dexsynth::testing::toy_embedding());
    auto pred = hv;
    int dropped = 0;
    for (int l = 0; l < s.frames(); l += 2) {
      dropped += static_cast<int>(contact_region(maps.frames[l], 1, dexsynth::testing::toy_embedding()).size());
      pred[l][1].resize(0, 3);
    }
    const GatedMetric err = v_mpvpe(pred, hv, maps, dexsynth::testing::toy_embedding());
    CHECK(dropped > 0);
    CHECK(err.count == full.count - dropped);
    CHECK(err.value == 0.0);
    auto no_gt = hv;
    no_gt[s.frames() - 1][1].resize(0, 3);
    CHECK_THROWS_AS(v_mpvpe(hv, no_gt, maps, dexsynth::testing::toy_embedding()), Error);
  }

  TEST_CASE("no gated frames gives NaN with zero count") {
    const Scene& s = dexsynth::testing::fixture_scene(ObjectKind::Box, TrajectoryKind::Lift, HandsUsed::Right);
    std::vector<std::array<Points, kHands>> hv;
    ContactSequence maps = dexsynth::testing::scene_gt_maps(s, BasisPointSet::sample(64, 0.12, 42), &hv);
    for (auto& f : maps.frames) f.clear_maps();
    const GatedMetric r = valid_contact_ratio(gt_geometry(s, hv), maps);
    CHECK(r.count == 0);
    CHECK(std::isnan(r.value));
  }

  TEST_CASE("hand floating away has zero valid contact") {
    const Scene& s = dexsynth::testing::fixture_scene(ObjectKind::Box, TrajectoryKind::Lift, HandsUsed::Right);
    std::vector<std::array<Points, kHands>> hv;
    const ContactSequence maps = dexsynth::testing::scene_gt_maps(s, BasisPointSet::sample(128, 0.12, 42), &hv);
    auto far = hv;
    for (auto& f : far) f[1].rowwise() += Eigen::RowVector3d(0.0, 0.0, 0.5);
    const GatedMetric r = valid_contact_ratio(gt_geometry(s, far), maps);
    CHECK(r.count > 0);
    CHECK(r.value == 0.0);
  }
}
