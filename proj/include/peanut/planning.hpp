#pragma once

#include <deque>
#include <optional>
#include <vector>

#include "peanut/grid.hpp"
#include "peanut/mapping.hpp"
#include "peanut/world.hpp"

namespace peanut::planning {

/// Geodesic distance field in meters; +inf marks cells unreachable through
/// the traversable mask.
struct DistanceField {
  Grid<float> d;
  Cell source;
  Grid<uint8_t> traversable;

  static constexpr float kUnreachable = std::numeric_limits<float>::infinity();
  bool reachable(int i, int j) const { return std::isfinite(d.at(i, j)); }
};

/// First-order upwind fast marching from `source` over `traversable`
/// (nonzero = passable), eikonal |grad d| = 1. Cells near the source with an
/// unobstructed straight line are seeded with exact distances, which keeps
/// the near-field error of the first-order scheme small.
/// Throws if the source cell is not traversable.
DistanceField fmm_distance(const Grid<uint8_t>& traversable, Cell source, double resolution);

/// In-place variant used on the planner's hot path; `d` is resized as needed.
void fmm_solve(const Grid<uint8_t>& traversable, Cell source, double resolution, Grid<float>& d);

struct GoalSelection {
  Cell goal;
  double score = 0.0;
  double lambda_m = 0.0;
};

/// Treat lambda at or above this as "no distance weighting" (weight = 1).
inline constexpr double kNoDistanceWeighting = 1e6;

/// argmax over cells of exp(-d/lambda) * z. Ties break toward smaller d,
/// then lower row-major index. Returns nullopt when every score is zero,
/// in which case the caller falls back to frontier exploration.
std::optional<GoalSelection> select_goal(const Grid<float>& z, const DistanceField& d,
                                         double lambda_m);

/// Nearest unexplored non-obstacle cell at geodesic distance >= min_distance;
/// if none qualifies, the farthest one below the clip. Returns nullopt when
/// no unexplored cell is reachable (exploration complete).
std::optional<Cell> frontier_goal(const mapping::SemanticMap& map, const DistanceField& d,
                                  double min_distance_m = 3.0);

struct PlannerConfig {
  double agent_radius_m = world::kAgentRadiusM;
  double step_distance_m = world::kStepDistanceM;
  double heading_tolerance_deg = world::kTurnAngleDeg / 2.0;
  double success_radius_m = 1.0;
  double plan_window_margin_m = 2.0;
  double goal_snap_radius_m = 0.6;
  int replan_interval_steps = 10;
  int stuck_window = 10;               // blocked MOVE_FORWARD attempts
  double stuck_displacement_m = 0.05;
};

struct PlannerState {
  std::optional<GoalSelection> current_goal;
  int steps_since_replan = 0;
  int stuck_counter = 0;
  bool recovery_active = false;
};

/// Per-episode local policy: maintains the dilated obstacle mask, plans an
/// FMM shortest path to the current goal every step, extracts a waypoint one
/// step-distance ahead, and emits turn/forward actions. Stuck episodes fall
/// back to obstacle inscription plus heading rotation.
class LocalPlanner {
 public:
  LocalPlanner(const PlannerConfig& config, int map_h, int map_w, double resolution);

  /// Ingest newly mapped obstacle cells (incremental dilation) and advance
  /// the replan cadence. Call once per timestep before planning.
  void begin_step(const mapping::SemanticMap& map, const Pose& pose);

  bool needs_replan() const;
  void set_goal(const GoalSelection& goal);
  void clear_goal();

  /// STOP rule on the agent's own map: a target-category cell within the
  /// success radius with map line-of-sight.
  bool should_stop(const mapping::SemanticMap& map, const Pose& pose, int target_category) const;

  /// Turn/forward action toward the current goal; nullopt when the goal is
  /// unreachable (caller reselects).
  std::optional<world::Action> plan_action(const mapping::SemanticMap& map, const Pose& pose);

  /// Report the executed action so stuck detection and recovery can react.
  void observe_step(const Pose& before, world::Action action, const world::StepResult& result,
                    mapping::SemanticMap& map);

  /// Geodesic field from the agent over the optimistic dilated mask, for
  /// goal selection. Uses internal buffers; the result stays valid until the
  /// next call.
  const DistanceField& selection_field(const mapping::SemanticMap& map, const Pose& pose);

  const PlannerState& state() const { return state_; }
  const Grid<uint8_t>& dilated_blocked() const { return blocked_; }

 private:
  void ensure_dilation(const mapping::SemanticMap& map);
  void stamp_obstacle(int i, int j);
  std::optional<Cell> snap_to_traversable(const Grid<uint8_t>& traversable, Cell c,
                                          int max_radius_cells) const;

  PlannerConfig config_;
  PlannerState state_;
  double resolution_;
  int dilate_cells_;
  Grid<uint8_t> blocked_;       // known obstacles dilated by agent radius
  Grid<uint8_t> seen_obstacle_; // map obstacle cells already dilated
  std::vector<std::pair<int, int>> dilation_offsets_;
  std::deque<Pose> forward_attempts_;
  bool plan_failed_ = false;
  DistanceField selection_field_;
  Grid<float> plan_d_;          // window-local distance buffer
  Grid<uint8_t> plan_mask_;
};

/// Debug dump of a distance field in the map snapshot container ("PNDF").
void save_distance_field(const DistanceField& field, double resolution,
                         const std::filesystem::path& path);

}  // namespace peanut::planning
