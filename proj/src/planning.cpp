#include "peanut/planning.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "peanut/io.hpp"

namespace peanut::planning {
namespace {

// Exact straight-line seeding radius around the source. The plain
// single-cell start of first-order FMM carries a ~20% overshoot on the
// first diagonal ring which never fully decays; seeding a small disk with
// exact distances keeps the whole field within a few percent of the true
// geodesic.
constexpr double kExactSeedRadiusCells = 3.0;

struct HeapEntry {
  float d;
  uint32_t idx;
};
struct HeapGreater {
  bool operator()(const HeapEntry& a, const HeapEntry& b) const {
    return a.d > b.d || (a.d == b.d && a.idx > b.idx);
  }
};

float upwind_solve(float a, float b, float h) {
  if (!std::isfinite(a)) return b + h;
  if (!std::isfinite(b)) return a + h;
  float diff = a - b;
  if (std::abs(diff) >= h) return std::min(a, b) + h;
  double s = 2.0 * static_cast<double>(h) * h - static_cast<double>(diff) * diff;
  return static_cast<float>((a + b + std::sqrt(s)) * 0.5);
}

}  // namespace

void fmm_solve(const Grid<uint8_t>& traversable, Cell source, double resolution, Grid<float>& d) {
  const int h = traversable.h();
  const int w = traversable.w();
  if (!traversable.in_bounds(source) || !traversable.at(source))
    throw std::runtime_error("fmm source not traversable");
  if (d.h() != h || d.w() != w) d = Grid<float>(h, w);
  d.fill(std::numeric_limits<float>::infinity());

  std::vector<uint8_t> accepted(static_cast<size_t>(h) * w, 0);
  std::vector<HeapEntry> heap;
  heap.reserve(1024);
  auto push = [&](uint32_t idx, float value) {
    heap.push_back({value, idx});
    std::push_heap(heap.begin(), heap.end(), HeapGreater{});
  };

  const float res = static_cast<float>(resolution);
  auto blocked = [&](int i, int j) { return traversable.at(i, j) == 0; };
  int seed_r = static_cast<int>(kExactSeedRadiusCells);
  for (int di = -seed_r; di <= seed_r; ++di) {
    for (int dj = -seed_r; dj <= seed_r; ++dj) {
      double rr = std::hypot(static_cast<double>(di), static_cast<double>(dj));
      if (rr > kExactSeedRadiusCells) continue;
      Cell c{source.i + di, source.j + dj};
      if (!traversable.in_bounds(c) || !traversable.at(c)) continue;
      if (rr > 0.0 &&
          !line_of_sight(source.j + 0.5, source.i + 0.5, c, 1.0, h, w, blocked))
        continue;
      float value = static_cast<float>(rr) * res;
      size_t k = traversable.idx(c);
      if (value < d[k]) {
        d[k] = value;
        push(static_cast<uint32_t>(k), value);
      }
    }
  }

  const float diag = res * 1.4142135623730951f;
  const int di4[4] = {1, -1, 0, 0};
  const int dj4[4] = {0, 0, 1, -1};
  while (!heap.empty()) {
    std::pop_heap(heap.begin(), heap.end(), HeapGreater{});
    HeapEntry top = heap.back();
    heap.pop_back();
    if (accepted[top.idx]) continue;
    accepted[top.idx] = 1;
    int ci = static_cast<int>(top.idx) / w;
    int cj = static_cast<int>(top.idx) % w;
    for (int k = 0; k < 4; ++k) {
      int ni = ci + di4[k];
      int nj = cj + dj4[k];
      if (ni < 0 || ni >= h || nj < 0 || nj >= w) continue;
      size_t nidx = static_cast<size_t>(ni) * w + nj;
      if (accepted[nidx] || !traversable[nidx]) continue;
      // Upwind values from accepted neighbors only.
      float a = std::numeric_limits<float>::infinity();
      float b = a;
      if (nj > 0 && accepted[nidx - 1]) a = d[nidx - 1];
      if (nj + 1 < w && accepted[nidx + 1]) a = std::min(a, d[nidx + 1]);
      if (ni > 0 && accepted[nidx - w]) b = d[nidx - w];
      if (ni + 1 < h && accepted[nidx + w]) b = std::min(b, d[nidx + w]);
      float value = upwind_solve(a, b, res);
      // One-sided diagonal candidates (no corner cutting). The planar
      // two-neighbor solve re-accumulates its near-field overshoot behind
      // every narrow aperture; the diagonal relaxation caps the result at
      // the 8-connected path length, so the field stays between the true
      // geodesic and the Dijkstra-8 distance.
      for (int dd = 0; dd < 4; ++dd) {
        int qi = ni + (dd < 2 ? 1 : -1);
        int qj = nj + (dd % 2 ? 1 : -1);
        if (qi < 0 || qi >= h || qj < 0 || qj >= w) continue;
        size_t qidx = static_cast<size_t>(qi) * w + qj;
        if (!accepted[qidx]) continue;
        if (!traversable[static_cast<size_t>(ni) * w + qj] ||
            !traversable[static_cast<size_t>(qi) * w + nj])
          continue;
        value = std::min(value, d[qidx] + diag);
      }
      if (value < d[nidx]) {
        d[nidx] = value;
        push(static_cast<uint32_t>(nidx), value);
      }
    }
  }

  // Cells never accepted are unreachable.
  for (size_t k = 0; k < d.size(); ++k)
    if (!accepted[k]) d[k] = std::numeric_limits<float>::infinity();
  d[traversable.idx(source)] = 0.0f;
}

DistanceField fmm_distance(const Grid<uint8_t>& traversable, Cell source, double resolution) {
  DistanceField field;
  field.source = source;
  field.traversable = traversable;
  fmm_solve(traversable, source, resolution, field.d);
  return field;
}

std::optional<GoalSelection> select_goal(const Grid<float>& z, const DistanceField& df,
                                         double lambda_m) {
  bool weighted = lambda_m < kNoDistanceWeighting;
  double best_score = 0.0;
  float best_d = std::numeric_limits<float>::infinity();
  size_t best_idx = SIZE_MAX;
  for (size_t k = 0; k < z.size(); ++k) {
    float zv = z[k];
    if (zv <= 0.0f) continue;
    float dv = df.d[k];
    if (!std::isfinite(dv)) continue;
    double score = weighted ? std::exp(-static_cast<double>(dv) / lambda_m) * zv
                            : static_cast<double>(zv);
    if (score > best_score ||
        (score == best_score && (dv < best_d || (dv == best_d && k < best_idx)))) {
      best_score = score;
      best_d = dv;
      best_idx = k;
    }
  }
  if (best_idx == SIZE_MAX) return std::nullopt;
  return GoalSelection{z.cell(best_idx), best_score, lambda_m};
}

std::optional<Cell> frontier_goal(const mapping::SemanticMap& map, const DistanceField& df,
                                  double min_distance_m) {
  const uint8_t* explored = map.channel(mapping::kExploredChannel);
  const uint8_t* obstacle = map.channel(mapping::kObstacleChannel);
  float best_far = std::numeric_limits<float>::infinity();
  float best_near = -1.0f;
  size_t far_idx = SIZE_MAX, near_idx = SIZE_MAX;
  for (size_t k = 0; k < df.d.size(); ++k) {
    if (explored[k] || obstacle[k]) continue;
    float dv = df.d[k];
    if (!std::isfinite(dv)) continue;
    if (dv >= min_distance_m) {
      if (dv < best_far || (dv == best_far && k < far_idx)) {
        best_far = dv;
        far_idx = k;
      }
    } else if (dv > best_near || (dv == best_near && k < near_idx)) {
      best_near = dv;
      near_idx = k;
    }
  }
  if (far_idx != SIZE_MAX) return df.d.cell(far_idx);
  if (near_idx != SIZE_MAX) return df.d.cell(near_idx);
  return std::nullopt;
}

LocalPlanner::LocalPlanner(const PlannerConfig& config, int map_h, int map_w, double resolution)
    : config_(config),
      resolution_(resolution),
      blocked_(map_h, map_w, 0),
      seen_obstacle_(map_h, map_w, 0) {
  double radius_cells = (config.agent_radius_m + 0.5 * resolution) / resolution;
  dilate_cells_ = static_cast<int>(std::ceil(radius_cells));
  for (int di = -dilate_cells_; di <= dilate_cells_; ++di)
    for (int dj = -dilate_cells_; dj <= dilate_cells_; ++dj)
      if (std::hypot(static_cast<double>(di), static_cast<double>(dj)) <= radius_cells)
        dilation_offsets_.emplace_back(di, dj);
}

void LocalPlanner::stamp_obstacle(int i, int j) {
  for (auto [di, dj] : dilation_offsets_) {
    int ii = i + di, jj = j + dj;
    if (ii >= 0 && ii < blocked_.h() && jj >= 0 && jj < blocked_.w()) blocked_.at(ii, jj) = 1;
  }
}

void LocalPlanner::ensure_dilation(const mapping::SemanticMap& map) {
  const uint8_t* obstacle = map.channel(mapping::kObstacleChannel);
  for (size_t k = 0; k < seen_obstacle_.size(); ++k) {
    if (obstacle[k] && !seen_obstacle_[k]) {
      seen_obstacle_[k] = 1;
      Cell c = seen_obstacle_.cell(k);
      stamp_obstacle(c.i, c.j);
    }
  }
}

void LocalPlanner::begin_step(const mapping::SemanticMap& map, const Pose& pose) {
  ensure_dilation(map);
  ++state_.steps_since_replan;
  if (state_.current_goal) {
    Vec2 gc = map.center_of(state_.current_goal->goal);
    if (std::hypot(gc.x - pose.x, gc.y - pose.y) <= config_.step_distance_m) clear_goal();
  }
}

bool LocalPlanner::needs_replan() const {
  return !state_.current_goal || plan_failed_ ||
         state_.steps_since_replan >= config_.replan_interval_steps;
}

void LocalPlanner::set_goal(const GoalSelection& goal) {
  state_.current_goal = goal;
  state_.steps_since_replan = 0;
  plan_failed_ = false;
}

void LocalPlanner::clear_goal() {
  state_.current_goal.reset();
  state_.steps_since_replan = 0;
}

bool LocalPlanner::should_stop(const mapping::SemanticMap& map, const Pose& pose,
                               int target_category) const {
  const uint8_t* target = map.channel(mapping::category_channel(target_category));
  double lx = pose.x - map.origin_x();
  double ly = pose.y - map.origin_y();
  Cell agent = map.cell_of(pose.x, pose.y);
  int rc = static_cast<int>(std::ceil(config_.success_radius_m / resolution_)) + 1;
  auto blocked = [&](int i, int j) { return map.at(mapping::kObstacleChannel, i, j) != 0; };
  for (int i = std::max(0, agent.i - rc); i <= std::min(map.h() - 1, agent.i + rc); ++i) {
    for (int j = std::max(0, agent.j - rc); j <= std::min(map.w() - 1, agent.j + rc); ++j) {
      if (!target[static_cast<size_t>(i) * map.w() + j]) continue;
      Vec2 c = map.center_of({i, j});
      if (std::hypot(c.x - pose.x, c.y - pose.y) > config_.success_radius_m) continue;
      if (line_of_sight(lx, ly, {i, j}, resolution_, map.h(), map.w(), blocked)) return true;
    }
  }
  return false;
}

std::optional<Cell> LocalPlanner::snap_to_traversable(const Grid<uint8_t>& traversable, Cell c,
                                                      int max_radius_cells) const {
  if (traversable.in_bounds(c) && traversable.at(c)) return c;
  for (int r = 1; r <= max_radius_cells; ++r) {
    for (int di = -r; di <= r; ++di) {
      for (int dj = -r; dj <= r; ++dj) {
        if (std::max(std::abs(di), std::abs(dj)) != r) continue;
        Cell n{c.i + di, c.j + dj};
        if (traversable.in_bounds(n) && traversable.at(n)) return n;
      }
    }
  }
  return std::nullopt;
}

std::optional<world::Action> LocalPlanner::plan_action(const mapping::SemanticMap& map,
                                                       const Pose& pose) {
  if (!state_.current_goal) return std::nullopt;
  Cell agent = map.cell_of(pose.x, pose.y);
  Cell goal = state_.current_goal->goal;
  int margin = static_cast<int>(std::lround(config_.plan_window_margin_m / resolution_));

  auto attempt = [&](int i0, int j0, int i1, int j1) -> std::optional<world::Action> {
    int wh = i1 - i0, ww = j1 - j0;
    if (plan_mask_.h() != wh || plan_mask_.w() != ww) plan_mask_ = Grid<uint8_t>(wh, ww);
    for (int i = 0; i < wh; ++i)
      for (int j = 0; j < ww; ++j)
        plan_mask_.at(i, j) = blocked_.at(i0 + i, j0 + j) ? 0 : 1;
    // The agent must remain a valid source even when dilation covers its
    // cell; carve out body-sized clearance except over real mapped walls.
    for (auto [di, dj] : dilation_offsets_) {
      int ii = agent.i + di, jj = agent.j + dj;
      if (ii < i0 || ii >= i1 || jj < j0 || jj >= j1) continue;
      if (!map.at(mapping::kObstacleChannel, ii, jj))
        plan_mask_.at(ii - i0, jj - j0) = 1;
    }
    Cell goal_local{goal.i - i0, goal.j - j0};
    auto snapped = snap_to_traversable(
        plan_mask_, goal_local,
        static_cast<int>(std::lround(config_.goal_snap_radius_m / resolution_)));
    if (!snapped) return std::nullopt;
    Cell agent_local{agent.i - i0, agent.j - j0};
    fmm_solve(plan_mask_, *snapped, resolution_, plan_d_);
    if (!std::isfinite(plan_d_.at(agent_local))) return std::nullopt;

    // Walk downhill one step-distance to get the waypoint.
    const int di8[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
    const int dj8[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
    Cell cur = agent_local;
    double traveled = 0.0;
    while (traveled < config_.step_distance_m && plan_d_.at(cur) > 0.0f) {
      Cell best = cur;
      float best_d = plan_d_.at(cur);
      bool best_diag = false;
      for (int k = 0; k < 8; ++k) {
        Cell n{cur.i + di8[k], cur.j + dj8[k]};
        if (!plan_d_.in_bounds(n) || !plan_mask_.at(n)) continue;
        bool diag = di8[k] != 0 && dj8[k] != 0;
        if (diag && (!plan_mask_.at(cur.i, n.j) || !plan_mask_.at(n.i, cur.j))) continue;
        float nd = plan_d_.at(n);
        if (nd < best_d) {
          best_d = nd;
          best = n;
          best_diag = diag;
        }
      }
      if (best == cur) break;
      traveled += best_diag ? resolution_ * 1.4142135623730951 : resolution_;
      cur = best;
    }
    if (cur == agent_local) return std::nullopt;

    Vec2 wp = map.center_of({cur.i + i0, cur.j + j0});
    double bearing = rad_to_deg(std::atan2(wp.y - pose.y, wp.x - pose.x));
    if (state_.recovery_active) bearing += 90.0 * (state_.stuck_counter % 4);
    double err = wrap_signed_degrees(bearing - pose.theta);
    if (std::abs(err) <= config_.heading_tolerance_deg) return world::Action::MoveForward;
    return err > 0 ? world::Action::TurnLeft : world::Action::TurnRight;
  };

  int i0 = std::max(0, std::min(agent.i, goal.i) - margin);
  int j0 = std::max(0, std::min(agent.j, goal.j) - margin);
  int i1 = std::min(map.h(), std::max(agent.i, goal.i) + margin + 1);
  int j1 = std::min(map.w(), std::max(agent.j, goal.j) + margin + 1);
  if (auto action = attempt(i0, j0, i1, j1)) return action;
  if (i0 > 0 || j0 > 0 || i1 < map.h() || j1 < map.w()) {
    if (auto action = attempt(0, 0, map.h(), map.w())) return action;
  }
  plan_failed_ = true;
  return std::nullopt;
}

void LocalPlanner::observe_step(const Pose& before, world::Action action,
                                const world::StepResult& result, mapping::SemanticMap& map) {
  if (action != world::Action::MoveForward) return;
  double moved = std::hypot(result.pose.x - before.x, result.pose.y - before.y);
  if (!result.collided && moved >= config_.stuck_displacement_m) {
    state_.recovery_active = false;
    state_.stuck_counter = 0;
    forward_attempts_.clear();
    return;
  }
  forward_attempts_.push_back(before);
  if (static_cast<int>(forward_attempts_.size()) < config_.stuck_window) return;
  const Pose& oldest = forward_attempts_.front();
  if (std::hypot(result.pose.x - oldest.x, result.pose.y - oldest.y) <
      config_.stuck_displacement_m) {
    Vec2 dir = heading_vec(before.theta);
    double ahead = config_.agent_radius_m + resolution_;
    Cell blocked_cell = map.cell_of(before.x + dir.x * ahead, before.y + dir.y * ahead);
    mapping::inscribe_obstacle(map, blocked_cell);
    if (blocked_.in_bounds(blocked_cell)) {
      seen_obstacle_.at(blocked_cell) = 1;
      stamp_obstacle(blocked_cell.i, blocked_cell.j);
    }
    ++state_.stuck_counter;
    state_.recovery_active = true;
    plan_failed_ = true;  // force replanning
    forward_attempts_.clear();
    return;
  }
  forward_attempts_.pop_front();
}

const DistanceField& LocalPlanner::selection_field(const mapping::SemanticMap& map,
                                                   const Pose& pose) {
  Cell agent = map.cell_of(pose.x, pose.y);
  if (selection_field_.traversable.h() != blocked_.h() ||
      selection_field_.traversable.w() != blocked_.w())
    selection_field_.traversable = Grid<uint8_t>(blocked_.h(), blocked_.w());
  for (size_t k = 0; k < blocked_.size(); ++k)
    selection_field_.traversable[k] = blocked_[k] ? 0 : 1;
  for (auto [di, dj] : dilation_offsets_) {
    int ii = agent.i + di, jj = agent.j + dj;
    if (!blocked_.in_bounds(ii, jj)) continue;
    if (!map.at(mapping::kObstacleChannel, ii, jj))
      selection_field_.traversable.at(ii, jj) = 1;
  }
  selection_field_.source = agent;
  fmm_solve(selection_field_.traversable, agent, resolution_, selection_field_.d);
  return selection_field_;
}

void save_distance_field(const DistanceField& field, double resolution,
                         const std::filesystem::path& path) {
  BinaryWriter out(path);
  out.magic("PNDF");
  out.u16(1);
  out.u16(2);
  out.u32(static_cast<uint32_t>(field.d.h()));
  out.u32(static_cast<uint32_t>(field.d.w()));
  out.f32(static_cast<float>(resolution));
  out.bytes(field.d.data(), field.d.size() * sizeof(float));
  out.bytes(field.traversable.data(), field.traversable.size());
  out.close();
}

}  // namespace peanut::planning
