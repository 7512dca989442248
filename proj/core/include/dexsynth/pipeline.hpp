#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dexsynth/config.hpp"
#include "dexsynth/training.hpp"

namespace dexsynth {

namespace fs = std::filesystem;

/// Removes every file and directory it created unless commit() is called.
class OutputGuard {
 public:
  OutputGuard() = default;
  OutputGuard(const OutputGuard&) = delete;
  OutputGuard& operator=(const OutputGuard&) = delete;
  ~OutputGuard();

  /// Creates `dir` (and parents) when missing; returns it.
  const fs::path& dir(const fs::path& dir);
  /// Registers a file about to be written; returns it.
  const fs::path& file(const fs::path& file);
  void commit() { committed_ = true; }

 private:
  std::vector<fs::path> created_;
  bool committed_ = false;
};

// Dataset directory: dataset.json, rig.json and one scene_NNN.json per scene.
struct DatasetEntry {
  std::string name;
  std::string file;
  bool train = true;
};

struct Dataset {
  fs::path root;
  std::vector<DatasetEntry> entries;
  HandRig rig;

  static Dataset load(const fs::path& root);
  Scene scene(const DatasetEntry& e) const;
};

void synth_data(const Config& config, std::uint64_t seed, const fs::path& out);

EmbeddingFit embed_optimize(const Config& config, std::uint64_t seed, const fs::path& rig, const fs::path& out);

/// Writes bps.json, index.json and one <scene>.dxa of ground-truth maps per scene.
void build_maps(const Config& config, const fs::path& data, const fs::path& embedding, const fs::path& out);

struct TrainPaths {
  fs::path data;
  fs::path maps;
  fs::path embedding;
  fs::path out;  // checkpoint
  fs::path log;  // CSV
};

/// Returns the last logged row.
TrainLogRow train_stage1_command(const Config& config, std::uint64_t seed, const TrainPaths& paths, bool overfit_one);
TrainLogRow train_stage2_command(const Config& config, std::uint64_t seed, const TrainPaths& paths, bool overfit_one);

/// Object, world trajectory and optional hand presence read from a scene
/// document or a trajectory document.
struct GenerationInput {
  ArticulatedObject object;
  ObjectSequenceWorld trajectory;
  std::optional<std::array<bool, kHands>> present;

  static GenerationInput load(const fs::path& path);
};

struct Generated {
  ContactSequence maps;            // object frame
  std::vector<BimanualPose> hands; // world frame
  std::vector<Window> windows;
};

/// Stage 1 (skipped when `gt_maps` is given) then stage 2 over covering
/// windows, stitched by nearest window centre and mapped back to the world.
Generated generate_sequence(const Config& config, std::uint64_t seed, const GenerationInput& input,
                            const Stage1Model* stage1, const Stage2Model& stage2, const BasisPointSet& basis,
                            const std::array<HandRig, kHands>& rigs, const ContactSequence* gt_maps);

struct GeneratePaths {
  fs::path input;
  fs::path stage1;  // may be empty when gt_maps is set
  fs::path stage2;
  fs::path gt_maps;
  fs::path out;
};

void generate_command(const Config& config, std::uint64_t seed, const GeneratePaths& paths);

struct EvaluatePaths {
  std::vector<fs::path> scenes;  // ground truth
  std::vector<fs::path> hands;   // predicted world hands (hands or scene documents)
  std::vector<fs::path> maps;    // stage-1 maps for gating; empty: gate with GT maps
  fs::path rig;
  fs::path bps;
  fs::path embedding;
  fs::path out;
};

/// Per-sequence metrics and their aggregate; also written as metrics.json and metrics.csv.
nlohmann::json evaluate_command(const Config& config, const EvaluatePaths& paths);

struct ExportPaths {
  fs::path embedding;
  fs::path rig;
  fs::path maps;  // optional
  int frame = 0;
  fs::path out;
};

void export_viz_command(const Config& config, const ExportPaths& paths);

}  // namespace dexsynth
