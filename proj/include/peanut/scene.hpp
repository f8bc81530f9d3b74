#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "peanut/geometry.hpp"
#include "peanut/grid.hpp"

namespace peanut::world {

/// Object categories. Ids 1..kNumTargetCategories are navigation targets,
/// the rest provide context only.
inline constexpr int kNumCategories = 9;       // N
inline constexpr int kNumTargetCategories = 6; // C

const std::array<std::string, kNumCategories + 1>& category_names();
int category_id(const std::string& name);  // throws on unknown name

struct ObjectInstance {
  uint8_t category = 0;            // in [1, N]
  std::vector<uint32_t> cells;     // row-major indices into the scene grid
};

struct GenerationParams {
  double extent_m = 24.0;
  double resolution = 0.05;
  double wall_thickness_m = 0.10;
  double door_width_m = 0.90;
  double min_room_side_m = 2.4;
  double max_room_side_m = 5.2;
  double room_merge_prob = 0.22;
  double extra_door_prob = 0.35;
  double object_density = 1.0;   // scales per-archetype placement probabilities
  double agent_radius_m = 0.09;
  int min_rooms = 2;
  int max_scene_attempts = 10;
  int max_object_attempts = 30;

  bool operator==(const GenerationParams&) const = default;
};

GenerationParams preset_params(const std::string& name);  // "default" | "small" | "train"

/// Complete static world: walls plus object footprints are occupied cells.
struct GroundTruthScene {
  double resolution = 0.05;
  int height = 0;
  int width = 0;
  uint64_t seed = 0;
  Grid<uint8_t> occupancy;     // 1 = wall or object, 0 = free
  Grid<uint8_t> labels;        // category at occupied cell, 0 = bare wall/free
  Grid<int32_t> instance_ids;  // index into instances, -1 = none
  std::vector<ObjectInstance> instances;

  bool occupied(int i, int j) const { return occupancy.at(i, j) != 0; }
  bool occupied(Cell c) const { return occupied(c.i, c.j); }
  double extent_x() const { return width * resolution; }
  double extent_y() const { return height * resolution; }

  /// C x H x W boolean target map: union of instance footprints per category.
  Grid<uint8_t> target_map(int category) const;
  bool category_present(int category) const;

  /// Free cells with at least `clearance_m` of space around them; these are
  /// the poses an agent body can occupy.
  Grid<uint8_t> navigable_mask(double clearance_m) const;
};

/// Deterministic procedural floorplan: an irregular room lattice with merged
/// rooms, spanning-tree doors, and archetype-driven furniture placement.
/// Throws std::runtime_error after bounded retries on degenerate params.
GroundTruthScene generate_scene(uint64_t seed, const GenerationParams& params);

void save_scene(const GroundTruthScene& scene, const std::filesystem::path& path);
GroundTruthScene load_scene(const std::filesystem::path& path);

/// Flood fill over predicate-free cells from a start, 4-connected.
Grid<uint8_t> flood_fill(const Grid<uint8_t>& blocked, Cell start);

}  // namespace peanut::world
