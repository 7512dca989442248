#pragma once

#include <array>
#include <random>

#include "dexsynth/bps.hpp"
#include "dexsynth/embedding.hpp"
#include "dexsynth/synthetic.hpp"
#include "dexsynth/toy_hand.hpp"

namespace dexsynth::testing {

const HandRig& toy_rig();
const std::array<HandRig, kHands>& toy_rigs();

/// Embedding of the toy hand fitted once per process (default options, seed 0).
const EmbeddingFit& toy_embedding_fit();
const EmbeddingTable& toy_embedding();

Mat3 random_rotation(std::mt19937_64& rng);
Vec3 random_vector(std::mt19937_64& rng, double scale);
HandPose random_pose(std::mt19937_64& rng, double joint_angle = 0.5);

/// 16-joint chain whose vertices are skinned to joints 0 and 1 only.
HandRig two_bone_rig();

/// Generated scene for a fixed spec (cached per argument set).
const Scene& fixture_scene(ObjectKind object, TrajectoryKind trajectory, HandsUsed hands, int frames = 60);

/// Ground-truth maps of a scene in the object frame, with the toy
/// embedding. `hand_vertices` receives the canonical posed vertices.
ContactSequence scene_gt_maps(const Scene& scene, const BasisPointSet& basis,
                              std::vector<std::array<Points, kHands>>* hand_vertices = nullptr);

/// Relative error |a - b| / max(|a|, |b|, floor).
double relative_error(double a, double b, double floor = 1e-8);

}  // namespace dexsynth::testing
