#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "peanut/geometry.hpp"
#include "peanut/rng.hpp"
#include "peanut/scene.hpp"

namespace peanut::world {

enum class Action { MoveForward, TurnLeft, TurnRight, Stop };

inline constexpr double kStepDistanceM = 0.25;
inline constexpr double kTurnAngleDeg = 30.0;
inline constexpr double kAgentRadiusM = 0.09;

/// Per-category label confusion applied when segmentation noise fires.
/// Row k holds the replacement distribution for true category k.
struct ConfusionTable {
  std::array<std::array<double, kNumCategories + 1>, kNumCategories + 1> rows{};

  static ConfusionTable plausible();  // misreads between look-alike categories
  static ConfusionTable uniform();    // all other categories equally likely
  static ConfusionTable always(int from, int to);
  int sample(int true_label, Rng& rng) const;
};

struct SensorParams {
  double fov_deg = 79.0;
  int num_rays = 158;
  double max_range_m = 5.0;
  double label_noise = 0.0;  // epsilon
  ConfusionTable confusion = ConfusionTable::plausible();
};

struct Ray {
  double bearing_deg = 0.0;  // relative to agent heading, symmetric about 0
  double hit_range_m = 0.0;  // max_range when nothing was hit
  int hit_label = 0;         // 0 = bare obstacle or no hit
  bool is_obstacle = false;
};

struct Scan {
  std::vector<Ray> rays;
  double fov_deg = 0.0;
  double max_range_m = 0.0;
};

/// Semantic range scan from `pose`. Deterministic given the rng stream state.
Scan sense(const GroundTruthScene& scene, const Pose& pose, const SensorParams& params, Rng& rng);

struct StepResult {
  Pose pose;
  bool terminated = false;
  bool collided = false;
};

/// Applies one discrete action. MOVE_FORWARD is rejected wholesale when the
/// swept circular body would touch occupancy.
StepResult step(const GroundTruthScene& scene, const Pose& pose, Action action);

/// True when the circular agent body at (x, y) overlaps no occupied cell.
bool body_fits(const GroundTruthScene& scene, double x, double y, double radius_m = kAgentRadiusM);

struct EpisodeSpec {
  uint64_t scene_seed = 0;
  Pose spawn;
  int target_category = 1;
  int step_limit = 500;
  double success_radius_m = 1.0;
  int64_t episode_id = 0;
};

/// Success rule: STOP within success_radius of some cell of a target-category
/// instance, with an unobstructed 360-degree line of sight to a cell of that
/// same instance.
bool judge(const GroundTruthScene& scene, const EpisodeSpec& spec, const Pose& final_pose);

/// The same rule evaluated at an arbitrary position (used for oracle paths).
bool success_position(const GroundTruthScene& scene, int target_category, double success_radius_m,
                      double x, double y);

}  // namespace peanut::world
