#include "peanut/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "peanut/io.hpp"
#include "peanut/mapping.hpp"
#include "peanut/parallel.hpp"
#include "peanut/rng.hpp"

namespace peanut::harness {

using nlohmann::json;

namespace {

constexpr uint64_t kEvalSceneTag = 0xE7A15CE5ull;
constexpr uint64_t kEpisodeTag = 0xE915D0E5ull;
constexpr uint64_t kNoiseTag = 0x5E05E000ull;

json sensor_to_json(const world::SensorParams& s) {
  return json{{"fov_deg", s.fov_deg},
              {"num_rays", s.num_rays},
              {"max_range_m", s.max_range_m},
              {"label_noise", s.label_noise}};
}

void sensor_from_json(const json& j, world::SensorParams& s) {
  for (auto& [key, value] : j.items()) {
    if (key == "fov_deg") s.fov_deg = value.get<double>();
    else if (key == "num_rays") s.num_rays = value.get<int>();
    else if (key == "max_range_m") s.max_range_m = value.get<double>();
    else if (key == "label_noise") s.label_noise = value.get<double>();
    else if (key == "confusion") {
      if (value.get<std::string>() == "uniform") s.confusion = world::ConfusionTable::uniform();
      else if (value.get<std::string>() == "plausible")
        s.confusion = world::ConfusionTable::plausible();
      else throw std::runtime_error("unknown confusion table: " + value.get<std::string>());
    } else {
      throw std::runtime_error("unknown sensor config key: " + key);
    }
  }
}

json scene_to_json(const world::GenerationParams& p) {
  return json{{"extent_m", p.extent_m},
              {"resolution", p.resolution},
              {"door_width_m", p.door_width_m},
              {"max_room_side_m", p.max_room_side_m},
              {"room_merge_prob", p.room_merge_prob},
              {"extra_door_prob", p.extra_door_prob},
              {"object_density", p.object_density}};
}

void scene_from_json(const json& j, world::GenerationParams& p) {
  for (auto& [key, value] : j.items()) {
    if (key == "extent_m") p.extent_m = value.get<double>();
    else if (key == "resolution") p.resolution = value.get<double>();
    else if (key == "door_width_m") p.door_width_m = value.get<double>();
    else if (key == "max_room_side_m") p.max_room_side_m = value.get<double>();
    else if (key == "room_merge_prob") p.room_merge_prob = value.get<double>();
    else if (key == "extra_door_prob") p.extra_door_prob = value.get<double>();
    else if (key == "object_density") p.object_density = value.get<double>();
    else throw std::runtime_error("unknown scene config key: " + key);
  }
}

}  // namespace

RunConfig default_config() { return RunConfig{}; }

std::string config_to_json_text(const RunConfig& c) {
  json j{{"scene_preset", c.scene_preset},
         {"scene", scene_to_json(c.scene)},
         {"sensor", sensor_to_json(c.sensor)},
         {"predictor_checkpoint", c.predictor_checkpoint},
         {"lambda_m", c.lambda_m},
         {"use_prediction", c.flags.use_prediction},
         {"use_distance_weighting", c.flags.use_distance_weighting},
         {"gt_segmentation", c.flags.gt_segmentation},
         {"episodes", c.episodes},
         {"eval_scenes", c.eval_scenes},
         {"step_limit", c.step_limit},
         {"success_radius_m", c.success_radius_m},
         {"map_margin_m", c.map_margin_m},
         {"seed", c.seed},
         {"workers", c.workers},
         {"emit_traces", c.emit_traces}};
  return j.dump(2);
}

RunConfig config_from_json_text(const std::string& text) {
  json j = json::parse(text);
  RunConfig c;
  bool explicit_noise = false;
  for (auto& [key, value] : j.items()) {
    if (key == "scene_preset") {
      c.scene_preset = value.get<std::string>();
      c.scene = world::preset_params(c.scene_preset);
    } else if (key == "scene") {
      // applied after preset below
    } else if (key == "sensor") {
      // applied below
    } else if (key == "predictor_checkpoint") c.predictor_checkpoint = value.get<std::string>();
    else if (key == "lambda_m") c.lambda_m = value.get<double>();
    else if (key == "use_prediction") c.flags.use_prediction = value.get<bool>();
    else if (key == "use_distance_weighting") c.flags.use_distance_weighting = value.get<bool>();
    else if (key == "gt_segmentation") c.flags.gt_segmentation = value.get<bool>();
    else if (key == "episodes") c.episodes = value.get<int>();
    else if (key == "eval_scenes") c.eval_scenes = value.get<int>();
    else if (key == "step_limit") c.step_limit = value.get<int>();
    else if (key == "success_radius_m") c.success_radius_m = value.get<double>();
    else if (key == "map_margin_m") c.map_margin_m = value.get<double>();
    else if (key == "seed") c.seed = value.get<uint64_t>();
    else if (key == "workers") c.workers = value.get<int>();
    else if (key == "emit_traces") c.emit_traces = value.get<bool>();
    else throw std::runtime_error("unknown config key: " + key);
  }
  if (j.contains("scene")) scene_from_json(j.at("scene"), c.scene);
  if (j.contains("sensor")) {
    if (j.at("sensor").contains("label_noise")) explicit_noise = true;
    sensor_from_json(j.at("sensor"), c.sensor);
  }
  if (c.flags.gt_segmentation) {
    if (explicit_noise && c.sensor.label_noise != 0.0)
      throw std::runtime_error("gt_segmentation requires label_noise = 0");
    c.sensor.label_noise = 0.0;
  }
  return c;
}

uint64_t config_fingerprint(const RunConfig& config) {
  return fnv1a64(config_to_json_text(config));
}

const char* failure_reason_name(FailureReason r) {
  switch (r) {
    case FailureReason::None: return "none";
    case FailureReason::Timeout: return "timeout";
    case FailureReason::FalseStop: return "false_stop";
    case FailureReason::Stuck: return "stuck";
  }
  return "unknown";
}

std::shared_ptr<SceneCache::Bundle> SceneCache::get(uint64_t scene_seed) {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = cache_.find(scene_seed);
    if (it != cache_.end()) return it->second;
  }
  // Generate outside the cache lock; first finished insert wins.
  auto bundle = std::make_shared<Bundle>();
  bundle->scene = world::generate_scene(scene_seed, params_);
  bundle->navigable = bundle->scene.navigable_mask(world::kAgentRadiusM);
  std::lock_guard<std::mutex> lock(mutex_);
  auto [it, inserted] = cache_.try_emplace(scene_seed, bundle);
  return it->second;
}

const Grid<uint8_t>& SceneCache::success_mask(Bundle& bundle, int category,
                                              double success_radius_m) {
  std::lock_guard<std::mutex> lock(bundle.mutex);
  auto it = bundle.success_cells.find(category);
  if (it != bundle.success_cells.end()) return it->second;

  const auto& scene = bundle.scene;
  Grid<uint8_t> mask(scene.height, scene.width, 0);
  int rc = static_cast<int>(std::ceil(success_radius_m / scene.resolution)) + 1;
  Grid<uint8_t> candidate(scene.height, scene.width, 0);
  for (const auto& inst : scene.instances) {
    if (inst.category != category) continue;
    for (uint32_t c : inst.cells) {
      Cell cc = scene.occupancy.cell(c);
      for (int i = std::max(0, cc.i - rc); i <= std::min(scene.height - 1, cc.i + rc); ++i)
        for (int j = std::max(0, cc.j - rc); j <= std::min(scene.width - 1, cc.j + rc); ++j)
          candidate.at(i, j) = 1;
    }
  }
  for (int i = 0; i < scene.height; ++i) {
    for (int j = 0; j < scene.width; ++j) {
      if (!candidate.at(i, j) || !bundle.navigable.at(i, j)) continue;
      Vec2 center = cell_center({i, j}, scene.resolution);
      if (world::success_position(scene, category, success_radius_m, center.x, center.y))
        mask.at(i, j) = 1;
    }
  }
  auto [ins, ok] = bundle.success_cells.emplace(category, std::move(mask));
  return ins->second;
}

namespace {

/// Geodesic length in meters from spawn to the nearest judgeable position,
/// on the ground-truth navigable mask. Oracle lengths are clamped to one
/// cell so SPL stays defined for degenerate hand-built episodes.
double oracle_length(SceneCache& cache, SceneCache::Bundle& bundle,
                     const world::EpisodeSpec& spec) {
  const auto& scene = bundle.scene;
  const Grid<uint8_t>& success = cache.success_mask(bundle, spec.target_category,
                                                    spec.success_radius_m);
  Cell spawn = cell_of(spec.spawn.x, spec.spawn.y, scene.resolution);
  if (!bundle.navigable.in_bounds(spawn)) return -1.0;
  if (!bundle.navigable.at(spawn)) {
    bool snapped = false;
    for (int r = 1; r <= 3 && !snapped; ++r)
      for (int di = -r; di <= r && !snapped; ++di)
        for (int dj = -r; dj <= r && !snapped; ++dj) {
          Cell c{spawn.i + di, spawn.j + dj};
          if (bundle.navigable.in_bounds(c) && bundle.navigable.at(c)) {
            spawn = c;
            snapped = true;
          }
        }
    if (!snapped) return -1.0;
  }
  planning::DistanceField field =
      planning::fmm_distance(bundle.navigable, spawn, scene.resolution);
  float best = std::numeric_limits<float>::infinity();
  for (size_t k = 0; k < success.size(); ++k)
    if (success[k]) best = std::min(best, field.d[k]);
  if (!std::isfinite(best)) return -1.0;
  return std::max(static_cast<double>(best), scene.resolution);
}

}  // namespace

std::vector<world::EpisodeSpec> sample_episodes(const RunConfig& config, SceneCache& cache) {
  std::vector<world::EpisodeSpec> episodes;
  episodes.reserve(config.episodes);
  std::vector<uint64_t> scene_seeds;
  for (int s = 0; s < config.eval_scenes; ++s)
    scene_seeds.push_back(Rng::derive(Rng::derive(config.seed, kEvalSceneTag), s));

  for (int e = 0; e < config.episodes; ++e) {
    uint64_t scene_seed = scene_seeds[e % scene_seeds.size()];
    auto bundle = cache.get(scene_seed);
    const auto& scene = bundle->scene;
    Rng rng(Rng::derive(config.seed, kEpisodeTag + static_cast<uint64_t>(e)));

    std::vector<int> categories;
    for (int c = 1; c <= world::kNumTargetCategories; ++c) {
      if (!scene.category_present(c)) continue;
      const auto& mask = cache.success_mask(*bundle, c, config.success_radius_m);
      bool reachable = false;
      for (size_t k = 0; k < mask.size() && !reachable; ++k) reachable = mask[k] != 0;
      if (reachable) categories.push_back(c);
    }
    if (categories.empty())
      throw std::runtime_error("episode sampling: scene has no reachable targets");

    std::vector<size_t> navigable_cells;
    for (size_t k = 0; k < bundle->navigable.size(); ++k)
      if (bundle->navigable[k]) navigable_cells.push_back(k);

    bool placed = false;
    for (int attempt = 0; attempt < 500 && !placed; ++attempt) {
      int target = categories[rng.uniform_int(0, static_cast<int64_t>(categories.size()) - 1)];
      size_t cell_idx =
          navigable_cells[rng.uniform_int(0, static_cast<int64_t>(navigable_cells.size()) - 1)];
      Cell cell = bundle->navigable.cell(cell_idx);
      Vec2 pos = cell_center(cell, scene.resolution);

      double nearest = std::numeric_limits<double>::infinity();
      for (const auto& inst : scene.instances) {
        if (inst.category != target) continue;
        for (uint32_t c : inst.cells) {
          Vec2 p = cell_center(scene.occupancy.cell(c), scene.resolution);
          nearest = std::min(nearest, std::hypot(p.x - pos.x, p.y - pos.y));
        }
      }
      if (nearest <= config.success_radius_m) continue;

      world::EpisodeSpec spec;
      spec.scene_seed = scene_seed;
      spec.spawn = Pose{pos.x, pos.y, 30.0 * rng.uniform_int(0, 11)};
      spec.target_category = target;
      spec.step_limit = config.step_limit;
      spec.success_radius_m = config.success_radius_m;
      spec.episode_id = e;
      if (oracle_length(cache, *bundle, spec) <= 0.0) continue;
      episodes.push_back(spec);
      placed = true;
    }
    if (!placed) throw std::runtime_error("episode sampling failed; degenerate scene config");
  }
  return episodes;
}

void save_episodes_jsonl(const std::vector<world::EpisodeSpec>& episodes,
                         const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write episodes file: " + path.string());
  for (const auto& e : episodes) {
    json j{{"episode_id", e.episode_id},
           {"scene_seed", e.scene_seed},
           {"spawn", {{"x", e.spawn.x}, {"y", e.spawn.y}, {"theta", e.spawn.theta}}},
           {"target", world::category_names()[e.target_category]},
           {"step_limit", e.step_limit},
           {"success_radius_m", e.success_radius_m}};
    out << j.dump() << "\n";
  }
}

std::vector<world::EpisodeSpec> load_episodes_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read episodes file: " + path.string());
  std::vector<world::EpisodeSpec> episodes;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    world::EpisodeSpec e;
    e.episode_id = j.at("episode_id").get<int64_t>();
    e.scene_seed = j.at("scene_seed").get<uint64_t>();
    e.spawn.x = j.at("spawn").at("x").get<double>();
    e.spawn.y = j.at("spawn").at("y").get<double>();
    e.spawn.theta = j.at("spawn").at("theta").get<double>();
    e.target_category = world::category_id(j.at("target").get<std::string>());
    e.step_limit = j.at("step_limit").get<int>();
    e.success_radius_m = j.at("success_radius_m").get<double>();
    episodes.push_back(e);
  }
  return episodes;
}

EpisodeResult run_episode(const RunConfig& config, const world::EpisodeSpec& spec,
                          const predictor::PredictorModel* model, SceneCache& cache) {
  auto bundle = cache.get(spec.scene_seed);
  const auto& scene = bundle->scene;
  EpisodeResult result;
  result.spec = spec;

  world::SensorParams sensor = config.sensor;
  if (config.flags.gt_segmentation) sensor.label_noise = 0.0;
  Rng rng(Rng::derive(config.seed, kNoiseTag + static_cast<uint64_t>(spec.episode_id)));

  mapping::SemanticMap map = mapping::SemanticMap::for_scene(scene, config.map_margin_m);
  planning::PlannerConfig planner_config;
  planner_config.success_radius_m = spec.success_radius_m;
  planning::LocalPlanner planner(planner_config, map.h(), map.w(), map.resolution());

  Pose pose = spec.spawn;
  std::vector<Pose> recent;  // displacement window for stuck classification
  bool stopped = false;

  for (int t = 1; t <= spec.step_limit; ++t) {
    world::Scan scan = world::sense(scene, pose, sensor, rng);
    mapping::update_map(map, scan, pose);
    if (config.emit_traces) result.trace.push_back(pose);
    recent.push_back(pose);

    if (planner.should_stop(map, pose, spec.target_category)) {
      result.steps = t;
      stopped = true;
      break;
    }

    planner.begin_step(map, pose);
    if (planner.needs_replan()) {
      const auto& field = planner.selection_field(map, pose);
      std::optional<planning::GoalSelection> goal;
      if (config.flags.use_prediction && model) {
        predictor::ProbabilityMap z =
            predictor::infer(*model, map, spec.target_category, map.exploration_mask());
        ++result.predictor_calls;
        double lambda =
            config.flags.use_distance_weighting ? config.lambda_m : planning::kNoDistanceWeighting;
        goal = planning::select_goal(z.z, field, lambda);
      }
      if (!goal) {
        if (auto frontier = planning::frontier_goal(map, field))
          goal = planning::GoalSelection{*frontier, 0.0, config.lambda_m};
      }
      if (!goal) {
        // Exploration complete without a detected target: sweep the far field.
        float best = -1.0f;
        size_t best_idx = SIZE_MAX;
        for (size_t k = 0; k < field.d.size(); ++k) {
          float dv = field.d[k];
          if (std::isfinite(dv) && dv > best) {
            best = dv;
            best_idx = k;
          }
        }
        if (best_idx != SIZE_MAX)
          goal = planning::GoalSelection{field.d.cell(best_idx), 0.0, config.lambda_m};
      }
      if (goal) {
        planner.set_goal(*goal);
        if (config.emit_traces) result.goal_trace.push_back(goal->goal);
      }
    }

    world::Action action = planner.plan_action(map, pose).value_or(world::Action::TurnLeft);
    world::StepResult step_result = world::step(scene, pose, action);
    planner.observe_step(pose, action, step_result, map);
    result.agent_path_length +=
        std::hypot(step_result.pose.x - pose.x, step_result.pose.y - pose.y);
    pose = step_result.pose;
    result.steps = t;
  }

  if (stopped) {
    result.success = world::judge(scene, spec, pose);
    result.failure = result.success ? FailureReason::None : FailureReason::FalseStop;
  } else {
    result.success = false;
    size_t window = std::min<size_t>(recent.size(), 100);
    double moved = window > 1
                       ? std::hypot(pose.x - recent[recent.size() - window].x,
                                    pose.y - recent[recent.size() - window].y)
                       : 1e9;
    bool pinned = moved < 0.5 && (planner.state().stuck_counter > 0 ||
                                  planner.state().recovery_active);
    result.failure = pinned ? FailureReason::Stuck : FailureReason::Timeout;
  }
  result.oracle_path_length = oracle_length(cache, *bundle, spec);
  if (result.oracle_path_length <= 0.0) result.oracle_path_length = scene.resolution;
  return result;
}

double compute_spl(const std::vector<EpisodeResult>& results) {
  if (results.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : results) {
    if (!r.success) continue;
    double l = r.oracle_path_length;
    double p = r.agent_path_length;
    total += l / std::max(p, l);
  }
  return total / results.size();
}

BenchmarkReport run_benchmark(const RunConfig& config, const std::string& label,
                              const std::vector<world::EpisodeSpec>& episodes,
                              const predictor::PredictorModel* model, SceneCache& cache) {
  BenchmarkReport report;
  report.label = label;
  report.seed = config.seed;
  report.fingerprint = config_fingerprint(config);
  report.rows.resize(episodes.size());
  int workers = config.workers > 0 ? config.workers : default_workers();
  parallel_for(static_cast<int64_t>(episodes.size()), workers, [&](int64_t k) {
    report.rows[k] = run_episode(config, episodes[k], model, cache);
  });
  std::sort(report.rows.begin(), report.rows.end(),
            [](const EpisodeResult& a, const EpisodeResult& b) {
              return a.spec.episode_id < b.spec.episode_id;
            });
  int successes = 0;
  for (const auto& r : report.rows) {
    successes += r.success ? 1 : 0;
    report.predictor_calls += r.predictor_calls;
  }
  report.success = report.rows.empty() ? 0.0 : static_cast<double>(successes) / report.rows.size();
  report.spl = compute_spl(report.rows);
  return report;
}

std::vector<BenchmarkReport> run_ablation_grid(const RunConfig& config,
                                               const std::vector<world::EpisodeSpec>& episodes,
                                               const predictor::PredictorModel* model,
                                               SceneCache& cache) {
  struct Row {
    const char* label;
    AblationFlags flags;
  };
  const Row rows[] = {
      {"pred+dw", {true, true, false}},
      {"pred-only", {true, false, false}},
      {"frontier", {false, false, false}},
      {"pred+dw+gt-seg", {true, true, true}},
  };
  std::vector<BenchmarkReport> reports;
  for (const Row& row : rows) {
    RunConfig rc = config;
    rc.flags = row.flags;
    if (row.flags.gt_segmentation) rc.sensor.label_noise = 0.0;
    reports.push_back(run_benchmark(rc, row.label, episodes,
                                    row.flags.use_prediction ? model : nullptr, cache));
  }
  return reports;
}

}  // namespace peanut::harness
