#include "peanut/world.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace peanut::world {

ConfusionTable ConfusionTable::plausible() {
  ConfusionTable t;
  auto set = [&](int from, std::initializer_list<std::pair<int, double>> to) {
    for (auto [k, p] : to) t.rows[from][k] = p;
  };
  set(1, {{6, 0.6}, {2, 0.2}, {4, 0.2}});        // chair -> sofa/bed/toilet
  set(2, {{6, 0.5}, {9, 0.5}});                  // bed -> sofa/bathtub
  set(3, {{1, 0.4}, {7, 0.6}});                  // plant -> chair/fireplace
  set(4, {{9, 0.6}, {1, 0.4}});                  // toilet -> bathtub/chair
  set(5, {{8, 0.7}, {7, 0.3}});                  // tv -> mirror/fireplace
  set(6, {{1, 0.7}, {2, 0.3}});                  // sofa -> chair/bed
  set(7, {{5, 0.6}, {8, 0.4}});                  // fireplace -> tv/mirror
  set(8, {{5, 0.7}, {3, 0.3}});                  // mirror -> tv/plant
  set(9, {{2, 0.6}, {4, 0.4}});                  // bathtub -> bed/toilet
  return t;
}

ConfusionTable ConfusionTable::uniform() {
  ConfusionTable t;
  for (int from = 1; from <= kNumCategories; ++from)
    for (int to = 1; to <= kNumCategories; ++to)
      if (to != from) t.rows[from][to] = 1.0 / (kNumCategories - 1);
  return t;
}

ConfusionTable ConfusionTable::always(int from, int to) {
  ConfusionTable t;
  t.rows[from][to] = 1.0;
  return t;
}

int ConfusionTable::sample(int true_label, Rng& rng) const {
  if (true_label < 1 || true_label > kNumCategories) return true_label;
  const auto& row = rows[true_label];
  int pick = rng.categorical(std::span<const double>(row.data(), row.size()));
  return pick <= 0 ? true_label : pick;
}

Scan sense(const GroundTruthScene& scene, const Pose& pose, const SensorParams& params, Rng& rng) {
  Scan scan;
  scan.fov_deg = params.fov_deg;
  scan.max_range_m = params.max_range_m;
  scan.rays.reserve(params.num_rays);
  double spacing = params.fov_deg / params.num_rays;
  for (int k = 0; k < params.num_rays; ++k) {
    Ray ray;
    ray.bearing_deg = -params.fov_deg / 2.0 + (k + 0.5) * spacing;
    ray.hit_range_m = params.max_range_m;
    double dir = pose.theta + ray.bearing_deg;
    march_ray(pose.x, pose.y, dir, params.max_range_m, scene.resolution, scene.height, scene.width,
              [&](int i, int j, double t) {
                if (t > 0.0 && scene.occupancy.at(i, j)) {
                  ray.is_obstacle = true;
                  ray.hit_range_m = t;
                  ray.hit_label = scene.labels.at(i, j);
                  return false;
                }
                return true;
              });
    if (ray.is_obstacle && ray.hit_label > 0 && params.label_noise > 0.0 &&
        rng.bernoulli(params.label_noise)) {
      ray.hit_label = params.confusion.sample(ray.hit_label, rng);
    }
    scan.rays.push_back(ray);
  }
  return scan;
}

bool body_fits(const GroundTruthScene& scene, double x, double y, double radius_m) {
  double res = scene.resolution;
  int j0 = static_cast<int>(std::floor((x - radius_m) / res));
  int j1 = static_cast<int>(std::floor((x + radius_m) / res));
  int i0 = static_cast<int>(std::floor((y - radius_m) / res));
  int i1 = static_cast<int>(std::floor((y + radius_m) / res));
  for (int i = i0; i <= i1; ++i) {
    for (int j = j0; j <= j1; ++j) {
      if (!scene.occupancy.in_bounds(i, j)) return false;  // world edge counts as wall
      if (!scene.occupancy.at(i, j)) continue;
      double nx = std::clamp(x, j * res, (j + 1) * res);
      double ny = std::clamp(y, i * res, (i + 1) * res);
      if (std::hypot(nx - x, ny - y) < radius_m) return false;
    }
  }
  return true;
}

StepResult step(const GroundTruthScene& scene, const Pose& pose, Action action) {
  StepResult result{pose, false, false};
  switch (action) {
    case Action::Stop:
      result.terminated = true;
      return result;
    case Action::TurnLeft:
      result.pose.theta = wrap_degrees(pose.theta + kTurnAngleDeg);
      return result;
    case Action::TurnRight:
      result.pose.theta = wrap_degrees(pose.theta - kTurnAngleDeg);
      return result;
    case Action::MoveForward: {
      Vec2 dir = heading_vec(pose.theta);
      const int substeps = 10;
      for (int s = 1; s <= substeps; ++s) {
        double d = kStepDistanceM * s / substeps;
        if (!body_fits(scene, pose.x + dir.x * d, pose.y + dir.y * d)) {
          result.collided = true;
          return result;  // blocked: pose unchanged
        }
      }
      result.pose.x = pose.x + dir.x * kStepDistanceM;
      result.pose.y = pose.y + dir.y * kStepDistanceM;
      return result;
    }
  }
  throw std::runtime_error("unreachable action");
}

bool success_position(const GroundTruthScene& scene, int target_category, double success_radius_m,
                      double x, double y) {
  auto blocked = [&](int i, int j) { return scene.occupancy.at(i, j) != 0; };
  for (const auto& inst : scene.instances) {
    if (inst.category != target_category) continue;
    double best = std::numeric_limits<double>::infinity();
    for (uint32_t c : inst.cells) {
      Cell cc = scene.occupancy.cell(c);
      Vec2 p = cell_center(cc, scene.resolution);
      best = std::min(best, std::hypot(p.x - x, p.y - y));
    }
    if (best > success_radius_m) continue;
    for (uint32_t c : inst.cells) {
      Cell cc = scene.occupancy.cell(c);
      if (line_of_sight(x, y, cc, scene.resolution, scene.height, scene.width, blocked))
        return true;
    }
  }
  return false;
}

bool judge(const GroundTruthScene& scene, const EpisodeSpec& spec, const Pose& final_pose) {
  return success_position(scene, spec.target_category, spec.success_radius_m, final_pose.x,
                          final_pose.y);
}

}  // namespace peanut::world
