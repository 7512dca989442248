#pragma once

#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "dexsynth/bps.hpp"
#include "dexsynth/embedding.hpp"
#include "dexsynth/synthetic.hpp"

namespace dexsynth {

nlohmann::json read_json(const std::filesystem::path& path);
/// Compact single-line JSON followed by a newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

nlohmann::json points_to_json(const Points& p);
Points points_from_json(const nlohmann::json& j);

nlohmann::json rig_to_json(const HandRig& rig);
HandRig rig_from_json(const nlohmann::json& j);

nlohmann::json basis_to_json(const BasisPointSet& basis);
BasisPointSet basis_from_json(const nlohmann::json& j);

nlohmann::json embedding_to_json(const EmbeddingTable& table);
EmbeddingTable embedding_from_json(const nlohmann::json& j);

nlohmann::json object_to_json(const ArticulatedObject& object);
ArticulatedObject object_from_json(const nlohmann::json& j);

/// Frames as {"R": 9 row-major, "D": 3, "a": angle}.
nlohmann::json trajectory_to_json(const ObjectSequenceWorld& seq);
ObjectSequenceWorld trajectory_from_json(const nlohmann::json& j);

/// Canonical motion with its anchor.
nlohmann::json canonical_motion_to_json(const ObjectMotionCanonical& motion);

/// {"present": [l, r], "frames": [[198 values], ...]}.
nlohmann::json hand_sequence_to_json(const std::vector<BimanualPose>& poses);
std::vector<BimanualPose> hand_sequence_from_json(const nlohmann::json& j);

nlohmann::json scene_to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);

}  // namespace dexsynth
