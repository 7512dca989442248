#include <doctest.h>

#include "dexsynth/scene_io.hpp"
#include "dexsynth/synthetic.hpp"
#include "fixtures.hpp"

using namespace dexsynth;
using dexsynth::testing::fixture_scene;

TEST_SUITE("synthetic_data") {
  TEST_CASE("scene generation is deterministic") {
    SceneSpec spec;
    spec.object = ObjectKind::Box;
    spec.size = Vec3(0.04, 0.024, 0.035);
    spec.frames = 40;
    spec.seed = 3;
    const Scene a = generate_scene(spec, dexsynth::testing::toy_rig());
    const Scene b = generate_scene(spec, dexsynth::testing::toy_rig());
    CHECK(scene_to_json(a) == scene_to_json(b));
    CHECK(random_scene_spec(5, 120).to_json() == random_scene_spec(5, 120).to_json());
  }

  TEST_CASE("phases run approach, closing, hold") {
    const Scene& s = fixture_scene(ObjectKind::Sphere, TrajectoryKind::Arc, HandsUsed::Left);
    CHECK(s.present[0]);
    CHECK(!s.present[1]);
    CHECK(s.phase.front() == Phase::Approach);
    CHECK(s.phase.back() == Phase::Hold);
    CHECK(std::is_sorted(s.phase.begin(), s.phase.end(), [](Phase a, Phase b) { return static_cast<int>(a) < static_cast<int>(b); }));
  }

  TEST_CASE("hands are constant in the object frame while holding a rigid object") {
    for (auto traj : {TrajectoryKind::Lift, TrajectoryKind::Arc}) {
      const Scene& s = fixture_scene(ObjectKind::Box, traj, HandsUsed::Both);
      int first_hold = 0;
      while (s.phase[first_hold] != Phase::Hold) ++first_hold;
      const VecX ref = flatten_pose(s.canonical_hands(first_hold));
      for (int l = first_hold; l < s.frames(); ++l) CHECK((flatten_pose(s.canonical_hands(l)) - ref).norm() < 1e-6);
    }
  }

  TEST_CASE("hands on a moving part follow the part") {
    const Scene& s = fixture_scene(ObjectKind::HingedBox, TrajectoryKind::HingeOpen, HandsUsed::Both);
    REQUIRE(s.object.articulated());
    int h = s.on_moving_part[0] ? 0 : 1;
    REQUIRE(s.on_moving_part[h]);
    CHECK(!s.on_moving_part[1 - h]);
    CHECK(s.trajectory.articulation.back() > s.trajectory.articulation.front());
    int first_hold = 0;
    while (s.phase[first_hold] != Phase::Hold) ++first_hold;
    auto part_pose = [&](int l) {
      const auto [r, t] = s.object.part_transform(s.trajectory.articulation[l]);
      return canonicalize_hand(s.canonical_hands(l).hands[h], r, t).flatten();
    };
    const auto ref = part_pose(first_hold);
    for (int l = first_hold; l < s.frames(); ++l) CHECK((part_pose(l) - ref).norm() < 1e-6);
  }

  TEST_CASE("grip closure stops fingers on the surface") {
    const Scene& s = fixture_scene(ObjectKind::Box, TrajectoryKind::Lift, HandsUsed::Right);
    const auto& rig = dexsynth::testing::toy_rigs()[1];
    const TriMesh object = s.object.mesh;
    const Points v = forward_kinematics(rig, s.canonical_hands(s.frames() - 1).right()).vertices;
    for (const FingerChain& chain : finger_chains(rig)) {
      double closest = std::numeric_limits<double>::infinity();
      for (int i : chain.vertices) closest = std::min(closest, signed_distance(v.row(i).transpose(), object));
      CHECK(closest >= -1e-4);
      CHECK(closest <= SynthOptions{}.contact_band + 1e-4);
    }
    for (double a : s.aperture[1]) {
      CHECK(a > 0.0);
      CHECK(a <= 1.0);
    }
  }

  TEST_CASE("evaluation windows cover the sequence and end at the last frame") {
    for (int frames : {10, 48, 49, 120, 131}) {
      const auto ws = eval_windows(frames, 48, 24);
      CHECK(ws.back().start + ws.back().real == frames);
      std::vector<int> cover(frames, 0);
      for (const Window& w : ws) {
        CHECK(w.length == 48);
        for (int f = w.start; f < w.start + w.real; ++f) ++cover[f];
      }
      CHECK(*std::min_element(cover.begin(), cover.end()) >= 1);
      const auto owner = stitch_assignment(ws, frames);
      for (int f = 0; f < frames; ++f) {
        const Window& w = ws[owner[f]];
        const double d = std::abs(f - (w.start + 0.5 * (w.real - 1)));
        for (const Window& o : ws) {
          if (f >= o.start && f < o.start + o.real) CHECK(d <= std::abs(f - (o.start + 0.5 * (o.real - 1))));
        }
      }
    }
    const auto short_seq = eval_windows(10, 48, 24);
    REQUIRE(short_seq.size() == 1);
    CHECK(short_seq[0].real == 10);
    CHECK(std::count(short_seq[0].valid.begin(), short_seq[0].valid.end(), 1) == 10);
  }

  TEST_CASE("stitching ties go to the earlier window") {
    std::vector<Window> ws(2);
    ws[0].start = 0;
    ws[0].real = ws[0].length = 4;
    ws[1].start = 2;
    ws[1].real = ws[1].length = 4;
    // Frame 2 and 3: centres 1.5 and 3.5. Frame 2 is nearer 1.5; 2.5 would tie.
    CHECK(stitch_assignment(ws, 6) == std::vector<int>{0, 0, 0, 1, 1, 1});
  }

  TEST_CASE("train windows stay inside the sequence") {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 200; ++i) {
      const Window w = train_window(100, 48, rng);
      CHECK(w.start >= 0);
      CHECK(w.start + w.real <= 100);
      CHECK(w.real == 48);
    }
    CHECK(train_window(20, 48, rng).real == 20);
  }

  TEST_CASE("silent-frame clipping keeps a margin") {
    ContactSequence seq;
    for (int l = 0; l < 30; ++l) {
      ContactFrame f = ContactFrame::zeros(Points::Zero(2, 3), 1);
      if (l >= 10 && l < 20) f.contact(0, 1) = 0.5;
      seq.frames.push_back(f);
    }
    const FrameRange r = clip_silent(seq, 0.1, 5);
    CHECK(r.begin == 5);
    CHECK(r.end == 25);
    for (auto& f : seq.frames) f.clear_maps();
    CHECK_THROWS_AS(clip_silent(seq), Error);
  }

  TEST_CASE("spec validation and string round trips") {
    SceneSpec s;
    s.frames = 0;
    CHECK_THROWS_AS(s.validate(), Error);
    for (auto k : {ObjectKind::Sphere, ObjectKind::Box, ObjectKind::HingedBox}) CHECK(parse_object_kind(to_string(k)) == k);
    for (auto k : {TrajectoryKind::Lift, TrajectoryKind::Arc, TrajectoryKind::HingeOpen})
      CHECK(parse_trajectory_kind(to_string(k)) == k);
    CHECK_THROWS_AS(parse_hands_used("three"), Error);
    const SceneSpec r = random_scene_spec(17, 90);
    CHECK(SceneSpec::from_json(r.to_json()).to_json() == r.to_json());
  }

  TEST_CASE("scene JSON round trip") {
    const Scene& s = fixture_scene(ObjectKind::HingedBox, TrajectoryKind::HingeOpen, HandsUsed::Both);
    const nlohmann::json j = scene_to_json(s);
    const Scene back = scene_from_json(nlohmann::json::parse(j.dump()));
    CHECK(scene_to_json(back) == j);
    CHECK(back.object.moving == s.object.moving);
    CHECK(flatten_pose(back.hands[17]) == flatten_pose(s.hands[17]));
  }
}
