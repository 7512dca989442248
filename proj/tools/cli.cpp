#include "cli.hpp"

#include <iostream>

#include <CLI11.hpp>

#include "dexsynth/pipeline.hpp"

namespace dexsynth {

namespace {

Config load_config(const std::string& path) { return path.empty() ? Config{} : Config::load(path); }

void print_row(const char* what, const TrainLogRow& row) {
  std::cout << what << ": step " << row.step << " total " << row.total;
  for (const auto& [name, v] : row.components) std::cout << ' ' << name << ' ' << v;
  std::cout << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Two-stage diffusion synthesis of hand-object interaction"};
  app.require_subcommand(1);
  std::string config_path;
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "JSON configuration file (defaults when omitted)")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "seed for every random draw");

  auto* synth = app.add_subcommand("synth-data", "generate toy ground-truth scenes");
  std::string synth_out;
  synth->add_option("--out", synth_out, "dataset directory")->required();

  auto* embed = app.add_subcommand("embed-optimize", "fit per-vertex correspondence embeddings");
  std::string embed_rig, embed_out;
  embed->add_option("--rig", embed_rig, "rig JSON (from synth-data)")->required();
  embed->add_option("--out", embed_out, "embedding JSON")->required();

  auto* maps = app.add_subcommand("build-maps", "ground-truth contact and correspondence maps");
  std::string maps_data, maps_emb, maps_out;
  maps->add_option("--data", maps_data, "dataset directory")->required();
  maps->add_option("--embedding", maps_emb, "embedding JSON")->required();
  maps->add_option("--out", maps_out, "maps directory")->required();

  TrainPaths tp;
  bool overfit = false;
  std::string tp_data, tp_maps, tp_emb, tp_out, tp_log;
  auto add_train = [&](const char* name, const char* help) {
    auto* sc = app.add_subcommand(name, help);
    sc->add_option("--data", tp_data, "dataset directory")->required();
    sc->add_option("--maps", tp_maps, "maps directory")->required();
    sc->add_option("--embedding", tp_emb, "embedding JSON")->required();
    sc->add_option("--out", tp_out, "checkpoint file")->required();
    sc->add_option("--log", tp_log, "training log CSV")->required();
    sc->add_flag("--overfit-one", overfit, "train on the first scene only, without clipping or masking");
    return sc;
  };
  auto* train1 = add_train("train-stage1", "train the contact map denoiser");
  auto* train2 = add_train("train-stage2", "train the residual-guided pose denoiser");

  auto* gen = app.add_subcommand("generate", "synthesise hands for an object trajectory");
  GeneratePaths gp;
  std::string gp_input, gp_s1, gp_s2, gp_maps, gp_out;
  gen->add_option("--input", gp_input, "scene or trajectory JSON")->required();
  gen->add_option("--stage1", gp_s1, "stage-1 checkpoint");
  gen->add_option("--stage2", gp_s2, "stage-2 checkpoint")->required();
  gen->add_option("--gt-maps", gp_maps, "use these maps instead of running stage 1");
  gen->add_option("--out", gp_out, "output directory")->required();

  auto* eval = app.add_subcommand("evaluate", "penetration, valid-contact ratio and V-MPVPE");
  EvaluatePaths ep;
  std::vector<std::string> ep_scenes, ep_hands, ep_maps;
  std::string ep_rig, ep_bps, ep_emb, ep_out;
  eval->add_option("--scene", ep_scenes, "ground-truth scene JSON (repeatable)")->required();
  eval->add_option("--hands", ep_hands, "predicted hands JSON, one per scene")->required();
  eval->add_option("--maps", ep_maps, "stage-1 maps used for gating, one per scene");
  eval->add_option("--rig", ep_rig, "rig JSON")->required();
  eval->add_option("--bps", ep_bps, "BPS JSON (from build-maps)")->required();
  eval->add_option("--embedding", ep_emb, "embedding JSON")->required();
  eval->add_option("--out", ep_out, "output directory")->required();

  auto* viz = app.add_subcommand("export-viz", "colour-coded OBJ exports of embeddings and maps");
  ExportPaths xp;
  std::string xp_emb, xp_rig, xp_maps, xp_out;
  viz->add_option("--embedding", xp_emb, "embedding JSON")->required();
  viz->add_option("--rig", xp_rig, "rig JSON")->required();
  viz->add_option("--maps", xp_maps, "maps file (.dxa)");
  viz->add_option("--frame", xp.frame, "map frame to export");
  viz->add_option("--out", xp_out, "output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const Config config = load_config(config_path);
    if (synth->parsed()) {
      synth_data(config, seed, synth_out);
    } else if (embed->parsed()) {
      const EmbeddingFit fit = embed_optimize(config, seed, embed_rig, embed_out);
      std::cout << "embedding loss " << fit.initial_loss << " -> " << fit.final_loss << '\n';
    } else if (maps->parsed()) {
      build_maps(config, maps_data, maps_emb, maps_out);
    } else if (train1->parsed() || train2->parsed()) {
      tp = {tp_data, tp_maps, tp_emb, tp_out, tp_log};
      if (train1->parsed()) print_row("stage 1", train_stage1_command(config, seed, tp, overfit));
      else print_row("stage 2", train_stage2_command(config, seed, tp, overfit));
    } else if (gen->parsed()) {
      gp = {gp_input, gp_s1, gp_s2, gp_maps, gp_out};
      generate_command(config, seed, gp);
    } else if (eval->parsed()) {
      ep.scenes.assign(ep_scenes.begin(), ep_scenes.end());
      ep.hands.assign(ep_hands.begin(), ep_hands.end());
      ep.maps.assign(ep_maps.begin(), ep_maps.end());
      ep.rig = ep_rig;
      ep.bps = ep_bps;
      ep.embedding = ep_emb;
      ep.out = ep_out;
      std::cout << evaluate_command(config, ep).at("aggregate").dump() << '\n';
    } else if (viz->parsed()) {
      xp.embedding = xp_emb;
      xp.rig = xp_rig;
      xp.maps = xp_maps;
      xp.out = xp_out;
      export_viz_command(config, xp);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace dexsynth
