#pragma once

#include <vector>

#include "dexsynth/hand_model.hpp"
#include "dexsynth/mesh.hpp"

namespace dexsynth {

/// Procedural three-finger gripper with the 16-joint MANO topology
/// (root + 3 chains of 5). The palm is a box lattice whose contact face is
/// the z = 0 plane (normal -z); two fingers leave the +y edge and a thumb
/// leaves the -y edge. The surface is closed and connected.
struct ToyHandOptions {
  int target_vertices = 200;
  double palm_half_width = 0.035;   // x
  double palm_half_length = 0.035;  // y
  double palm_thickness = 0.02;     // z
  double segment_length = 0.016;    // per finger joint
};

HandRig make_toy_hand(const ToyHandOptions& options = {});

TriMesh rig_mesh(const HandRig& rig, const Points& vertices);

/// A finger: consecutive joints below one child of the root.
struct FingerChain {
  std::vector<int> joints;     // root-to-tip order
  std::vector<int> vertices;   // vertices with any skin weight on the chain
  Vec3 direction;              // rest-pose pointing direction
  Vec3 curl_axis;              // rotation axis that bends toward the palm side
};

std::vector<FingerChain> finger_chains(const HandRig& rig);

}  // namespace dexsynth
