#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>

#include "oracles.hpp"
#include "peanut/planning.hpp"
#include "peanut/rng.hpp"

using namespace peanut;
using namespace peanut::planning;

namespace {

/// Random rectangles over a free grid; the source neighborhood is kept clear
/// (the planner's sources always have body clearance).
Grid<uint8_t> random_obstacle_map(uint64_t seed, int size, Cell source, int clear_radius = 3) {
  Rng rng(seed);
  Grid<uint8_t> traversable(size, size, 1);
  int n_rects = static_cast<int>(rng.uniform_int(6, 14));
  for (int r = 0; r < n_rects; ++r) {
    int h = static_cast<int>(rng.uniform_int(2, size / 3));
    int w = static_cast<int>(rng.uniform_int(2, size / 3));
    int i0 = static_cast<int>(rng.uniform_int(0, size - h));
    int j0 = static_cast<int>(rng.uniform_int(0, size - w));
    for (int i = i0; i < i0 + h; ++i)
      for (int j = j0; j < j0 + w; ++j) traversable.at(i, j) = 0;
  }
  for (int di = -clear_radius; di <= clear_radius; ++di)
    for (int dj = -clear_radius; dj <= clear_radius; ++dj) {
      int i = source.i + di, j = source.j + dj;
      if (i >= 0 && i < size && j >= 0 && j < size) traversable.at(i, j) = 1;
    }
  return traversable;
}

mapping::SemanticMap map_with(const Grid<uint8_t>& explored, const Grid<uint8_t>& obstacle) {
  mapping::SemanticMap m(explored.h(), explored.w(), 0.05, 0.0, 0.0);
  for (size_t k = 0; k < explored.size(); ++k) {
    m.channel(mapping::kExploredChannel)[k] = explored[k];
    m.channel(mapping::kObstacleChannel)[k] = obstacle[k];
  }
  return m;
}

}  // namespace

TEST_CASE("fmm: empty grid matches Euclidean distances within 2 percent") {
  Grid<uint8_t> traversable(64, 64, 1);
  Cell source{30, 30};
  DistanceField field = fmm_distance(traversable, source, 0.05);
  CHECK(field.d.at(source) == 0.0f);
  CHECK(field.d.at(33, 34) == doctest::Approx(0.25).epsilon(0.02));
  for (int i = 0; i < 64; ++i) {
    for (int j = 0; j < 64; ++j) {
      double exact = std::hypot(i - 30.0, j - 30.0) * 0.05;
      if (exact == 0.0) continue;
      CHECK(field.d.at(i, j) >= exact * 0.999f);
      CHECK(field.d.at(i, j) <= exact * 1.05 + 1e-6);
    }
  }
}

TEST_CASE("fmm: walled-off cells are unreachable, detours respect the oracle") {
  Grid<uint8_t> traversable(60, 60, 1);
  for (int i = 10; i < 50; ++i) traversable.at(i, 30) = 0;  // vertical wall
  // sealed pocket
  for (int i = 2; i < 7; ++i)
    for (int j = 2; j < 7; ++j) traversable.at(i, j) = 0;
  for (int i = 3; i < 6; ++i)
    for (int j = 3; j < 6; ++j) traversable.at(i, j) = 1;

  Cell source{30, 10};
  DistanceField field = fmm_distance(traversable, source, 0.05);
  Grid<double> oracle = oracles::dijkstra8(traversable, source, 0.05);

  CHECK(!field.reachable(4, 4));
  CHECK(!std::isfinite(oracle.at(4, 4)));
  // around-the-wall distance: at least Dijkstra times (1 - 0.08)
  Cell behind{30, 45};
  CHECK(field.reachable(behind.i, behind.j));
  CHECK(field.d.at(behind) >= oracle.at(behind) * (1.0 - 0.08));
}

TEST_CASE("fmm vs dijkstra oracle on 50 random maps") {
  const double overestimate = oracles::dijkstra8_overestimate_factor();  // ~1.0824
  double worst_rel = 0.0;
  for (uint64_t seed = 0; seed < 50; ++seed) {
    Cell source{48, 48};
    Grid<uint8_t> traversable = random_obstacle_map(1000 + seed, 96, source);
    DistanceField field = fmm_distance(traversable, source, 0.05);
    Grid<double> oracle = oracles::dijkstra8(traversable, source, 0.05);
    for (int i = 0; i < 96; ++i) {
      for (int j = 0; j < 96; ++j) {
        bool fmm_reaches = field.reachable(i, j);
        bool oracle_reaches = std::isfinite(oracle.at(i, j));
        REQUIRE(fmm_reaches == oracle_reaches);
        if (!fmm_reaches || (i == source.i && j == source.j)) continue;
        double f = field.d.at(i, j);
        double d8 = oracle.at(i, j);
        // chamfer lower bound: the true geodesic is at least d8 / 1.0824
        REQUIRE(f >= d8 / overestimate * (1.0 - 1e-6));
        double rel = std::abs(f - d8) / d8;
        worst_rel = std::max(worst_rel, rel);
        REQUIRE(rel <= 0.08);
      }
    }
  }
  MESSAGE("worst |fmm - dijkstra| / dijkstra = ", worst_rel);
}

TEST_CASE("fmm: eikonal consistency (every finite cell has a smaller finite neighbor)") {
  Cell source{40, 40};
  Grid<uint8_t> traversable = random_obstacle_map(77, 80, source);
  DistanceField field = fmm_distance(traversable, source, 0.05);
  for (int i = 0; i < 80; ++i) {
    for (int j = 0; j < 80; ++j) {
      if (!field.reachable(i, j) || (i == source.i && j == source.j)) continue;
      float best = std::numeric_limits<float>::infinity();
      const int di[8] = {1, -1, 0, 0, 1, 1, -1, -1};
      const int dj[8] = {0, 0, 1, -1, 1, -1, 1, -1};
      for (int k = 0; k < 8; ++k) {
        int ni = i + di[k], nj = j + dj[k];
        if (ni < 0 || ni >= 80 || nj < 0 || nj >= 80) continue;
        if (field.reachable(ni, nj)) best = std::min(best, field.d.at(ni, nj));
      }
      REQUIRE(best < field.d.at(i, j));
    }
  }
}

TEST_CASE("fmm: source not traversable is an error") {
  Grid<uint8_t> traversable(20, 20, 1);
  traversable.at(5, 5) = 0;
  CHECK_THROWS(fmm_distance(traversable, {5, 5}, 0.05));
}

TEST_CASE("fmm: 240x240 field solves in under 50 ms") {
  Cell source{120, 120};
  Grid<uint8_t> traversable = random_obstacle_map(5, 240, source);
  fmm_distance(traversable, source, 0.05);  // warm-up
  auto t0 = std::chrono::steady_clock::now();
  DistanceField field = fmm_distance(traversable, source, 0.05);
  auto t1 = std::chrono::steady_clock::now();
  double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  MESSAGE("240x240 fmm: ", ms, " ms");
  CHECK(ms < 50.0);
  CHECK(field.d.at(source) == 0.0f);
}

TEST_CASE("select_goal: worked distance-weighting example") {
  // cell A: z=0.9 at 10 m, cell B: z=0.5 at 1 m, lambda=5 -> B wins
  Grid<float> z(4, 4, 0.0f);
  DistanceField field;
  field.d = Grid<float>(4, 4, std::numeric_limits<float>::infinity());
  z.at(0, 0) = 0.9f;
  field.d.at(0, 0) = 10.0f;
  z.at(2, 2) = 0.5f;
  field.d.at(2, 2) = 1.0f;
  field.d.at(3, 3) = 0.5f;  // reachable but z = 0

  auto sel = select_goal(z, field, 5.0);
  REQUIRE(sel.has_value());
  CHECK(sel->goal == Cell{2, 2});
  // direct evaluation: 0.9 e^-2 = 0.1218 < 0.5 e^-0.2 = 0.4094
  CHECK(sel->score == doctest::Approx(0.5 * std::exp(-0.2)).epsilon(1e-6));

  SUBCASE("huge lambda reduces to argmax of z") {
    auto pure = select_goal(z, field, kNoDistanceWeighting);
    REQUIRE(pure.has_value());
    CHECK(pure->goal == Cell{0, 0});
  }
  SUBCASE("all-zero z signals no candidate") {
    Grid<float> zero(4, 4, 0.0f);
    CHECK(!select_goal(zero, field, 5.0).has_value());
  }
}

TEST_CASE("select_goal properties on random instances") {
  Rng rng(123);
  for (int trial = 0; trial < 1000; ++trial) {
    int n = 12;
    Grid<float> z(n, n, 0.0f);
    DistanceField field;
    field.d = Grid<float>(n, n, std::numeric_limits<float>::infinity());
    for (int k = 0; k < 40; ++k) {
      int i = static_cast<int>(rng.uniform_int(0, n - 1));
      int j = static_cast<int>(rng.uniform_int(0, n - 1));
      z.at(i, j) = static_cast<float>(rng.uniform(0.001, 1.0));
      field.d.at(i, j) = static_cast<float>(rng.uniform(0.0, 30.0));
    }
    auto base = select_goal(z, field, 5.0);
    REQUIRE(base.has_value());

    // scale invariance of the argmax under z -> k z
    float scale = static_cast<float>(rng.uniform(0.01, 50.0));
    Grid<float> scaled = z;
    for (auto& v : scaled) v *= scale;
    auto scaled_sel = select_goal(scaled, field, 5.0);
    REQUIRE(scaled_sel.has_value());
    CHECK(scaled_sel->goal == base->goal);

    // halving lambda never increases the selected distance
    auto tighter = select_goal(z, field, 2.5);
    REQUIRE(tighter.has_value());
    CHECK(field.d.at(tighter->goal) <= field.d.at(base->goal) + 1e-6);

    // huge lambda equals pure argmax of z
    auto pure = select_goal(z, field, kNoDistanceWeighting);
    float zmax = -1.0f;
    Cell argmax{-1, -1};
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (std::isfinite(field.d.at(i, j)) && z.at(i, j) > zmax) {
          zmax = z.at(i, j);
          argmax = {i, j};
        }
    REQUIRE(pure.has_value());
    CHECK(pure->goal == argmax);
  }
}

TEST_CASE("frontier_goal: clip rule and fallbacks") {
  Grid<uint8_t> explored(200, 200, 1);
  Grid<uint8_t> obstacle(200, 200, 0);
  // two unexplored cells: 4 m east and 2 m west of the source
  explored.at(100, 180) = 0;
  explored.at(100, 60) = 0;
  mapping::SemanticMap m = map_with(explored, obstacle);

  Grid<uint8_t> traversable(200, 200, 1);
  DistanceField field = fmm_distance(traversable, {100, 100}, 0.05);

  SUBCASE("clip excludes the near frontier") {
    auto goal = frontier_goal(m, field, 3.0);
    REQUIRE(goal.has_value());
    CHECK(*goal == Cell{100, 180});
  }
  SUBCASE("single frontier below the clip is still taken") {
    explored.at(100, 180) = 1;
    mapping::SemanticMap m2 = map_with(explored, obstacle);
    auto goal = frontier_goal(m2, field, 3.0);
    REQUIRE(goal.has_value());
    CHECK(*goal == Cell{100, 60});
  }
  SUBCASE("no unexplored cells signals exploration complete") {
    Grid<uint8_t> all(200, 200, 1);
    mapping::SemanticMap m3 = map_with(all, obstacle);
    CHECK(!frontier_goal(m3, field, 3.0).has_value());
  }
}

TEST_CASE("planner: goal ahead yields forward, goal behind yields a turn") {
  Grid<uint8_t> explored(100, 100, 1);
  Grid<uint8_t> obstacle(100, 100, 0);
  mapping::SemanticMap m = map_with(explored, obstacle);
  PlannerConfig config;
  LocalPlanner planner(config, 100, 100, 0.05);
  Pose pose{2.5, 2.5, 0.0};
  planner.begin_step(m, pose);
  planner.set_goal(GoalSelection{Cell{50, 70}, 1.0, 5.0});  // 1 m straight ahead (+x)
  auto action = planner.plan_action(m, pose);
  REQUIRE(action.has_value());
  CHECK(*action == world::Action::MoveForward);

  planner.set_goal(GoalSelection{Cell{50, 30}, 1.0, 5.0});  // behind
  action = planner.plan_action(m, pose);
  REQUIRE(action.has_value());
  CHECK((*action == world::Action::TurnLeft || *action == world::Action::TurnRight));
}

TEST_CASE("planner: dilation keeps body clearance along the path") {
  Grid<uint8_t> explored(120, 120, 1);
  Grid<uint8_t> obstacle(120, 120, 0);
  for (int i = 20; i < 100; ++i) obstacle.at(i, 60) = 1;  // wall with gaps at the ends
  mapping::SemanticMap m = map_with(explored, obstacle);
  PlannerConfig config;
  LocalPlanner planner(config, 120, 120, 0.05);
  Pose pose{1.5, 3.0, 0.0};
  planner.begin_step(m, pose);
  planner.set_goal(GoalSelection{Cell{60, 100}, 1.0, 5.0});  // across the wall
  auto action = planner.plan_action(m, pose);
  REQUIRE(action.has_value());
  const Grid<uint8_t>& blocked = planner.dilated_blocked();
  CHECK(blocked.at(60, 60) == 1);
  CHECK(blocked.at(60, 58) == 1);  // within agent radius of the wall
  CHECK(blocked.at(60, 50) == 0);
}

TEST_CASE("planner stop rule: detected target within radius and map line of sight") {
  Grid<uint8_t> explored(100, 100, 1);
  Grid<uint8_t> obstacle(100, 100, 0);
  mapping::SemanticMap m = map_with(explored, obstacle);
  PlannerConfig config;
  LocalPlanner planner(config, 100, 100, 0.05);
  Pose pose{2.5, 2.5, 0.0};

  CHECK(!planner.should_stop(m, pose, 4));
  m.at(mapping::category_channel(4), 50, 60) = 1;  // 0.5 m east
  CHECK(planner.should_stop(m, pose, 4));

  SUBCASE("a wall in between defeats the stop") {
    for (int i = 40; i < 60; ++i) m.at(mapping::kObstacleChannel, i, 55) = 1;
    CHECK(!planner.should_stop(m, pose, 4));
  }
  SUBCASE("too far defeats the stop") {
    m.at(mapping::category_channel(4), 50, 60) = 0;
    m.at(mapping::category_channel(4), 50, 85) = 1;  // 1.75 m
    CHECK(!planner.should_stop(m, pose, 4));
  }
}

TEST_CASE("recovery: blocked forwards inscribe an obstacle and rotate the heading") {
  Grid<uint8_t> explored(100, 100, 1);
  Grid<uint8_t> obstacle(100, 100, 0);
  mapping::SemanticMap m = map_with(explored, obstacle);
  PlannerConfig config;
  LocalPlanner planner(config, 100, 100, 0.05);
  Pose pose{2.5, 2.5, 0.0};

  world::StepResult blocked{pose, false, true};
  for (int k = 0; k < config.stuck_window - 1; ++k) {
    planner.observe_step(pose, world::Action::MoveForward, blocked, m);
    CHECK(!planner.state().recovery_active);
  }
  planner.observe_step(pose, world::Action::MoveForward, blocked, m);
  CHECK(planner.state().recovery_active);
  CHECK(planner.state().stuck_counter == 1);
  // the cell directly ahead is now a mapped obstacle
  Cell ahead = m.cell_of(pose.x + config.agent_radius_m + 0.05, pose.y);
  CHECK(m.at(mapping::kObstacleChannel, ahead.i, ahead.j) == 1);
  CHECK(m.at(mapping::kExploredChannel, ahead.i, ahead.j) == 1);

  // a successful forward clears recovery
  world::StepResult moved{Pose{2.75, 2.5, 0.0}, false, false};
  planner.observe_step(pose, world::Action::MoveForward, moved, m);
  CHECK(!planner.state().recovery_active);
  CHECK(planner.state().stuck_counter == 0);
}

TEST_CASE("recovery: four consecutive stuck events cycle the cardinal offsets") {
  Grid<uint8_t> explored(100, 100, 1);
  Grid<uint8_t> obstacle(100, 100, 0);
  mapping::SemanticMap m = map_with(explored, obstacle);
  PlannerConfig config;
  LocalPlanner planner(config, 100, 100, 0.05);
  Pose pose{2.5, 2.5, 0.0};
  world::StepResult blocked{pose, false, true};
  for (int event = 1; event <= 4; ++event) {
    for (int k = 0; k < config.stuck_window; ++k)
      planner.observe_step(pose, world::Action::MoveForward, blocked, m);
    CHECK(planner.state().stuck_counter == event);
  }
  CHECK(planner.state().stuck_counter % 4 == 0);  // heading offset back to 0
}
