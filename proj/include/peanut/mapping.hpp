#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "peanut/geometry.hpp"
#include "peanut/grid.hpp"
#include "peanut/world.hpp"

namespace peanut::mapping {

/// Channel layout of the (N+4)-channel allocentric semantic map.
inline constexpr int kObstacleChannel = 0;
inline constexpr int kExploredChannel = 1;
inline constexpr int kCurrentLocationChannel = 2;
inline constexpr int kPastLocationsChannel = 3;
inline constexpr int kNumChannels = world::kNumCategories + 4;

inline constexpr int category_channel(int category) { return 3 + category; }

/// Incomplete allocentric semantic map, binary evidence per channel.
class SemanticMap {
 public:
  SemanticMap() = default;
  SemanticMap(int h, int w, double resolution, double origin_x, double origin_y);

  /// Map sized to a scene's bounding box plus a fixed margin.
  static SemanticMap for_scene(const world::GroundTruthScene& scene, double margin_m = 1.0);

  int h() const { return h_; }
  int w() const { return w_; }
  double resolution() const { return resolution_; }
  double origin_x() const { return origin_x_; }
  double origin_y() const { return origin_y_; }
  int channels() const { return kNumChannels; }

  uint8_t* channel(int c) { return data_.data() + static_cast<size_t>(c) * h_ * w_; }
  const uint8_t* channel(int c) const { return data_.data() + static_cast<size_t>(c) * h_ * w_; }
  uint8_t& at(int c, int i, int j) { return channel(c)[static_cast<size_t>(i) * w_ + j]; }
  uint8_t at(int c, int i, int j) const { return channel(c)[static_cast<size_t>(i) * w_ + j]; }
  size_t plane_size() const { return static_cast<size_t>(h_) * w_; }

  Cell cell_of(double x, double y) const {
    return Cell{static_cast<int>(std::floor((y - origin_y_) / resolution_)),
                static_cast<int>(std::floor((x - origin_x_) / resolution_))};
  }
  Vec2 center_of(Cell c) const {
    return Vec2{origin_x_ + (c.j + 0.5) * resolution_, origin_y_ + (c.i + 0.5) * resolution_};
  }
  bool in_bounds(Cell c) const { return c.i >= 0 && c.i < h_ && c.j >= 0 && c.j < w_; }

  bool explored(int i, int j) const { return at(kExploredChannel, i, j) != 0; }
  bool obstacle(int i, int j) const { return at(kObstacleChannel, i, j) != 0; }

  /// H x W boolean exploration mask e_t (explored channel thresholded).
  Grid<uint8_t> exploration_mask() const;

  bool operator==(const SemanticMap&) const = default;

 private:
  int h_ = 0, w_ = 0;
  double resolution_ = 0.05;
  double origin_x_ = 0.0, origin_y_ = 0.0;
  std::vector<uint8_t> data_;
};

/// Fuses one scan into the map: ray-traced cells become explored, endpoints
/// mark obstacle and semantic channels, agent location channels refresh.
/// Aggregation is cell-wise max. Throws if the pose is outside the map.
void update_map(SemanticMap& map, const world::Scan& scan, const Pose& pose);

/// Marks a single cell as a known obstacle (recovery inscription).
void inscribe_obstacle(SemanticMap& map, Cell c);

/// Egocentric side x side crop centered at pose, rotated agent-up
/// (nearest-neighbor sampling, zero padding). With `frustum`, channels are
/// zeroed outside the agent's field-of-view wedge.
struct FrustumSpec {
  double fov_deg = 79.0;
  double max_range_m = 5.0;
};
SemanticMap crop_egocentric(const SemanticMap& map, const Pose& pose, double side_m,
                            std::optional<FrustumSpec> frustum = std::nullopt);

void save_map(const SemanticMap& map, const std::filesystem::path& path);
SemanticMap load_map(const std::filesystem::path& path);

}  // namespace peanut::mapping
