#pragma once

#include <filesystem>
#include <vector>

#include "peanut/predictor.hpp"
#include "peanut/scene.hpp"
#include "peanut/world.hpp"

namespace peanut::predictor {

struct SnapshotRunConfig {
  world::SensorParams sensor;
  int total_steps = 500;
  int snapshot_interval = 25;
  int last_input_step = 250;
  double map_margin_m = 1.0;
  uint64_t rng_seed = 0;  // per-trajectory sensor noise stream
};

/// Runs a frontier explorer for total_steps from `spawn`, writing incomplete
/// maps every snapshot_interval steps (up to last_input_step) plus the final
/// map, all in the snapshot file format. Returns the dataset items; poses are
/// recorded in map-local coordinates. The per-trajectory explored fraction of
/// the scene's free space is stored as the coverage statistic.
std::vector<SnapshotItem> generate_snapshots(const world::GroundTruthScene& scene,
                                             const Pose& spawn, int spawn_index,
                                             const SnapshotRunConfig& config,
                                             const std::filesystem::path& out_dir);

void append_dataset_index(const std::filesystem::path& dir,
                          const std::vector<SnapshotItem>& items);

}  // namespace peanut::predictor
