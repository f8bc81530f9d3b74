#include "peanut/snapshots.hpp"

#include <fstream>

#include <json.hpp>

#include "peanut/mapping.hpp"
#include "peanut/planning.hpp"
#include "peanut/rng.hpp"

namespace peanut::predictor {

using nlohmann::json;

std::vector<SnapshotItem> generate_snapshots(const world::GroundTruthScene& scene,
                                             const Pose& spawn, int spawn_index,
                                             const SnapshotRunConfig& config,
                                             const std::filesystem::path& out_dir) {
  mapping::SemanticMap map = mapping::SemanticMap::for_scene(scene, config.map_margin_m);
  planning::PlannerConfig planner_config;
  planning::LocalPlanner planner(planner_config, map.h(), map.w(), map.resolution());
  Rng rng(config.rng_seed);
  Pose pose = spawn;

  std::vector<SnapshotItem> items;
  auto file_name = [&](int step) {
    return std::to_string(scene.seed) + "_" + std::to_string(spawn_index) + "_" +
           std::to_string(step) + ".pnmp";
  };

  for (int t = 1; t <= config.total_steps; ++t) {
    world::Scan scan = world::sense(scene, pose, config.sensor, rng);
    mapping::update_map(map, scan, pose);

    if (t % config.snapshot_interval == 0 && t <= config.last_input_step) {
      SnapshotItem item;
      item.input_file = file_name(t);
      item.final_file = file_name(config.total_steps);
      item.step = t;
      item.scene_seed = scene.seed;
      item.spawn = spawn_index;
      item.pose = Pose{pose.x - map.origin_x(), pose.y - map.origin_y(), pose.theta};
      mapping::save_map(map, out_dir / item.input_file);
      items.push_back(std::move(item));
    }

    planner.begin_step(map, pose);
    if (planner.needs_replan()) {
      const auto& field = planner.selection_field(map, pose);
      std::optional<Cell> goal = planning::frontier_goal(map, field);
      if (!goal) {
        // Fully explored: keep moving toward the farthest reachable cell so
        // late snapshots still vary.
        float best = -1.0f;
        size_t best_idx = SIZE_MAX;
        for (size_t k = 0; k < field.d.size(); ++k) {
          float dv = field.d[k];
          if (std::isfinite(dv) && dv > best) {
            best = dv;
            best_idx = k;
          }
        }
        if (best_idx != SIZE_MAX) goal = field.d.cell(best_idx);
      }
      if (goal) planner.set_goal(planning::GoalSelection{*goal, 0.0, 0.0});
    }
    world::Action action =
        planner.plan_action(map, pose).value_or(world::Action::TurnLeft);
    world::StepResult result = world::step(scene, pose, action);
    planner.observe_step(pose, action, result, map);
    pose = result.pose;
  }
  mapping::save_map(map, out_dir / file_name(config.total_steps));

  size_t free_cells = 0, explored_free = 0;
  int margin_i = static_cast<int>(std::lround(-map.origin_y() / map.resolution()));
  int margin_j = static_cast<int>(std::lround(-map.origin_x() / map.resolution()));
  for (int i = 0; i < scene.height; ++i) {
    for (int j = 0; j < scene.width; ++j) {
      if (scene.occupancy.at(i, j)) continue;
      ++free_cells;
      if (map.at(mapping::kExploredChannel, i + margin_i, j + margin_j)) ++explored_free;
    }
  }
  double coverage = free_cells ? static_cast<double>(explored_free) / free_cells : 0.0;
  for (auto& item : items) item.coverage = coverage;
  return items;
}

void append_dataset_index(const std::filesystem::path& dir,
                          const std::vector<SnapshotItem>& items) {
  std::ofstream out(dir / "index.jsonl", std::ios::app);
  if (!out) throw std::runtime_error("cannot open dataset index for append");
  for (const auto& item : items) {
    json j{{"input", item.input_file},
           {"final", item.final_file},
           {"step", item.step},
           {"scene_seed", item.scene_seed},
           {"spawn", item.spawn},
           {"pose", {{"x", item.pose.x}, {"y", item.pose.y}, {"theta", item.pose.theta}}},
           {"coverage", item.coverage}};
    out << j.dump() << "\n";
  }
}

}  // namespace peanut::predictor
