#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "peanut/harness.hpp"
#include "peanut/io.hpp"
#include "peanut/parallel.hpp"
#include "peanut/predictor.hpp"
#include "peanut/snapshots.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace peanut;

namespace {

constexpr uint64_t kTrainSceneTag = 0x72477247ull;

struct GenDataArgs {
  int scenes = 200;
  int spawns = 20;
  uint64_t seed = 1;
  std::string out;
  std::string preset = "train";
  double label_noise = 0.01;
  int workers = 0;
  bool maps = true;
};

int cmd_gen_data(const GenDataArgs& args) {
  fs::create_directories(fs::path(args.out) / "scenes");
  if (args.maps) fs::create_directories(fs::path(args.out) / "maps");
  world::GenerationParams params = world::preset_params(args.preset);
  world::SensorParams sensor;
  sensor.label_noise = args.label_noise;

  int workers = args.workers > 0 ? args.workers : default_workers();
  std::vector<uint64_t> scene_seeds(args.scenes);
  for (int s = 0; s < args.scenes; ++s)
    scene_seeds[s] = Rng::derive(Rng::derive(args.seed, kTrainSceneTag), s);

  std::vector<std::vector<predictor::SnapshotItem>> results(
      static_cast<size_t>(args.scenes) * args.spawns);
  parallel_for(static_cast<int64_t>(scene_seeds.size()), workers, [&](int64_t s) {
    world::GroundTruthScene scene = world::generate_scene(scene_seeds[s], params);
    world::save_scene(scene, fs::path(args.out) / "scenes" /
                                 (std::to_string(scene.seed) + ".pnws"));
    if (!args.maps) return;
    Grid<uint8_t> navigable = scene.navigable_mask(world::kAgentRadiusM);
    std::vector<size_t> cells;
    for (size_t k = 0; k < navigable.size(); ++k)
      if (navigable[k]) cells.push_back(k);
    if (cells.empty()) throw std::runtime_error("scene has no navigable cells");
    for (int p = 0; p < args.spawns; ++p) {
      Rng rng(Rng::derive(scene.seed, 0xA0000000ull + p));
      Cell cell = navigable.cell(cells[rng.uniform_int(0, static_cast<int64_t>(cells.size()) - 1)]);
      Vec2 pos = cell_center(cell, scene.resolution);
      Pose spawn{pos.x, pos.y, 30.0 * rng.uniform_int(0, 11)};
      predictor::SnapshotRunConfig run;
      run.sensor = sensor;
      run.rng_seed = Rng::derive(scene.seed, 0xB0000000ull + p);
      results[s * args.spawns + p] =
          predictor::generate_snapshots(scene, spawn, p, run, fs::path(args.out) / "maps");
    }
  });

  if (args.maps) {
    std::vector<predictor::SnapshotItem> all;
    for (auto& r : results) all.insert(all.end(), r.begin(), r.end());
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
      return std::tie(a.scene_seed, a.spawn, a.step) < std::tie(b.scene_seed, b.spawn, b.step);
    });
    fs::remove(fs::path(args.out) / "maps" / "index.jsonl");
    predictor::append_dataset_index(fs::path(args.out) / "maps", all);
  }

  json meta{{"scenes", args.scenes},
            {"spawns", args.spawns},
            {"seed", args.seed},
            {"preset", args.preset},
            {"label_noise", args.label_noise}};
  write_text_file(fs::path(args.out) / "gen_meta.json", meta.dump(2) + "\n");
  std::printf("gen-data: %d scenes, %d trajectories -> %s\n", args.scenes,
              args.scenes * (args.maps ? args.spawns : 0), args.out.c_str());
  return 0;
}

int cmd_train(const std::string& data, const std::string& out, int iters, uint64_t seed,
              bool ego, int workers) {
  predictor::SnapshotDataset ds = predictor::load_dataset(fs::path(data) / "maps");
  predictor::TrainConfig cfg;
  cfg.iterations = iters;
  cfg.seed = seed;
  cfg.egocentric = ego;
  cfg.workers = workers;
  predictor::TrainResult result = predictor::train(ds, cfg);
  predictor::save_model(result.model, out);
  json summary{{"iterations", iters},
               {"seed", seed},
               {"egocentric", ego},
               {"best_val_bce", result.best_val_bce},
               {"final_val_bce", result.final_val_bce},
               {"baseline_val_bce", result.baseline_val_bce}};
  write_text_file(out + ".train.json", summary.dump(2) + "\n");
  std::printf("train: val BCE %.6f (constant baseline %.6f) -> %s\n", result.final_val_bce,
              result.baseline_val_bce, out.c_str());
  return 0;
}

int cmd_eval_pred(const std::string& model_path, const std::string& data,
                  const std::string& report, const std::string& split, int workers) {
  predictor::PredictorModel model = predictor::load_model(model_path);
  predictor::SnapshotDataset ds = predictor::load_dataset(fs::path(data) / "maps");
  auto [train_idx, val_idx] = ds.split_by_scene(0.2);
  std::vector<int> items;
  if (split == "val") items = val_idx;
  else if (split == "train") items = train_idx;
  else if (split == "all") {
    items = train_idx;
    items.insert(items.end(), val_idx.begin(), val_idx.end());
    std::sort(items.begin(), items.end());
  } else {
    throw std::runtime_error("unknown split: " + split);
  }
  auto rows = predictor::evaluate_prediction_quality(model, ds, items, workers);
  std::string csv = "item,category,dto_m,nll,mode\n";
  const char* mode = model.egocentric ? "egocrop" : "global";
  for (const auto& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%d,%s,%.6f,%.6f,%s\n", r.item_index,
                  world::category_names()[r.category].c_str(), r.dto_m, r.nll, mode);
    csv += buf;
  }
  write_text_file(report, csv);
  double dto = 0.0, nll = 0.0;
  for (const auto& r : rows) {
    dto += r.dto_m;
    nll += r.nll;
  }
  size_t n = std::max<size_t>(1, rows.size());
  std::printf("eval-pred (%s, %zu rows): mean DTO %.4f m, mean NLL %.4f nats -> %s\n", mode,
              rows.size(), dto / n, nll / n, report.c_str());
  return 0;
}

harness::RunConfig load_config(const std::string& path) {
  if (path.empty()) return harness::default_config();
  return harness::config_from_json_text(read_text_file(path));
}

int cmd_eval_nav(const std::string& config_path, const std::string& out,
                 const std::string& episodes_path, const std::string& model_override) {
  harness::RunConfig config = load_config(config_path);
  if (!model_override.empty()) config.predictor_checkpoint = model_override;
  std::optional<predictor::PredictorModel> model;
  if (config.flags.use_prediction) {
    if (config.predictor_checkpoint.empty())
      throw CLI::ValidationError("config", "use_prediction requires predictor_checkpoint");
    model = predictor::load_model(config.predictor_checkpoint);
  }
  harness::SceneCache cache(config.scene);
  std::vector<world::EpisodeSpec> episodes;
  if (!episodes_path.empty()) {
    episodes = harness::load_episodes_jsonl(episodes_path);
  } else {
    episodes = harness::sample_episodes(config, cache);
  }
  fs::create_directories(out);
  harness::save_episodes_jsonl(episodes, fs::path(out) / "episodes.jsonl");
  harness::BenchmarkReport report = harness::run_benchmark(
      config, "eval", episodes, model ? &*model : nullptr, cache);
  harness::emit_report(report, out);
  std::printf("eval-nav: %zu episodes, success %.4f, spl %.4f -> %s\n", report.rows.size(),
              report.success, report.spl, out.c_str());
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& out,
               const std::string& episodes_path, const std::string& model_override) {
  harness::RunConfig config = load_config(config_path);
  if (!model_override.empty()) config.predictor_checkpoint = model_override;
  if (config.predictor_checkpoint.empty())
    throw CLI::ValidationError("config", "ablate requires predictor_checkpoint");
  predictor::PredictorModel model = predictor::load_model(config.predictor_checkpoint);
  harness::SceneCache cache(config.scene);
  std::vector<world::EpisodeSpec> episodes;
  if (!episodes_path.empty()) {
    episodes = harness::load_episodes_jsonl(episodes_path);
  } else {
    episodes = harness::sample_episodes(config, cache);
  }
  fs::create_directories(out);
  harness::save_episodes_jsonl(episodes, fs::path(out) / "episodes.jsonl");
  auto reports = harness::run_ablation_grid(config, episodes, &model, cache);
  for (const auto& r : reports) harness::emit_report(r, out);
  harness::emit_comparison(reports, out);
  for (const auto& r : reports)
    std::printf("%-16s success %.4f  spl %.4f\n", r.label.c_str(), r.success, r.spl);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prediction-driven object-goal navigation on procedural 2D worlds"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* cmd_gen = app.add_subcommand("gen-data", "Generate scenes and training map snapshots");
  cmd_gen->add_option("--scenes", gen.scenes, "Number of scenes");
  cmd_gen->add_option("--spawns", gen.spawns, "Exploration trajectories per scene");
  cmd_gen->add_option("--seed", gen.seed, "Master seed");
  cmd_gen->add_option("--out", gen.out, "Output directory")->required();
  cmd_gen->add_option("--preset", gen.preset, "Scene preset: default|small|train");
  cmd_gen->add_option("--eps", gen.label_noise, "Segmentation noise epsilon");
  cmd_gen->add_option("--workers", gen.workers, "Worker threads (0 = auto)");
  cmd_gen->add_flag("!--no-maps", gen.maps, "Only write scene files");

  std::string data, out, model_path, report, split = "val";
  int iters = 5000, workers = 0;
  uint64_t seed = 1;
  bool ego = false;
  auto* cmd_tr = app.add_subcommand("train", "Train the target predictor");
  cmd_tr->add_option("--data", data, "Dataset directory (from gen-data)")->required();
  cmd_tr->add_option("--out", out, "Checkpoint output path")->required();
  cmd_tr->add_option("--iters", iters, "Adam iterations");
  cmd_tr->add_option("--seed", seed, "Training seed");
  cmd_tr->add_flag("--ego", ego, "Train the egocentric-crop variant");
  cmd_tr->add_option("--workers", workers, "Worker threads (0 = auto)");

  auto* cmd_ep = app.add_subcommand("eval-pred", "Prediction quality metrics (DTO / NLL)");
  cmd_ep->add_option("--model", model_path, "Checkpoint path")->required();
  cmd_ep->add_option("--data", data, "Dataset directory")->required();
  cmd_ep->add_option("--report", report, "Output CSV path")->required();
  cmd_ep->add_option("--split", split, "val|train|all");
  cmd_ep->add_option("--workers", workers, "Worker threads (0 = auto)");

  std::string config_path, episodes_path, nav_out;
  auto* cmd_nav = app.add_subcommand("eval-nav", "Run navigation episodes");
  cmd_nav->add_option("--config", config_path, "RunConfig JSON (print-config for defaults)");
  cmd_nav->add_option("--out", nav_out, "Output directory")->required();
  cmd_nav->add_option("--episodes", episodes_path, "episodes.jsonl to reuse");
  cmd_nav->add_option("--model", model_path, "Checkpoint override");

  auto* cmd_ab = app.add_subcommand("ablate", "Run the ablation grid on paired episodes");
  cmd_ab->add_option("--config", config_path, "RunConfig JSON");
  cmd_ab->add_option("--out", nav_out, "Output directory")->required();
  cmd_ab->add_option("--episodes", episodes_path, "episodes.jsonl to reuse");
  cmd_ab->add_option("--model", model_path, "Checkpoint override");

  auto* cmd_pc = app.add_subcommand("print-config", "Dump the default config JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (cmd_gen->parsed()) return cmd_gen_data(gen);
    if (cmd_tr->parsed()) return cmd_train(data, out, iters, seed, ego, workers);
    if (cmd_ep->parsed()) return cmd_eval_pred(model_path, data, report, split, workers);
    if (cmd_nav->parsed()) return cmd_eval_nav(config_path, nav_out, episodes_path, model_path);
    if (cmd_ab->parsed()) return cmd_ablate(config_path, nav_out, episodes_path, model_path);
    if (cmd_pc->parsed()) {
      std::cout << harness::config_to_json_text(harness::default_config()) << "\n";
      return 0;
    }
  } catch (const CLI::Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    if (msg.find("unknown config key") != std::string::npos ||
        msg.find("unknown scene config key") != std::string::npos ||
        msg.find("unknown sensor config key") != std::string::npos ||
        msg.find("requires") != std::string::npos) {
      std::cerr << "config error: " << msg << "\n";
      return 2;
    }
    std::cerr << "error: " << msg << "\n";
    return 3;
  }
  return 0;
}
