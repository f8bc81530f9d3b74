#include "peanut/mapping.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "peanut/io.hpp"

namespace peanut::mapping {

SemanticMap::SemanticMap(int h, int w, double resolution, double origin_x, double origin_y)
    : h_(h),
      w_(w),
      resolution_(resolution),
      origin_x_(origin_x),
      origin_y_(origin_y),
      data_(static_cast<size_t>(kNumChannels) * h * w, 0) {}

SemanticMap SemanticMap::for_scene(const world::GroundTruthScene& scene, double margin_m) {
  int margin = static_cast<int>(std::lround(margin_m / scene.resolution));
  return SemanticMap(scene.height + 2 * margin, scene.width + 2 * margin, scene.resolution,
                     -margin * scene.resolution, -margin * scene.resolution);
}

Grid<uint8_t> SemanticMap::exploration_mask() const {
  Grid<uint8_t> e(h_, w_, 0);
  std::memcpy(e.data(), channel(kExploredChannel), plane_size());
  return e;
}

void update_map(SemanticMap& map, const world::Scan& scan, const Pose& pose) {
  Cell agent = map.cell_of(pose.x, pose.y);
  if (!map.in_bounds(agent)) throw std::runtime_error("pose outside map bounds");

  double res = map.resolution();
  // Rays are marched in map-local coordinates so scene and map frames may
  // differ by the origin offset.
  double lx = pose.x - map.origin_x();
  double ly = pose.y - map.origin_y();
  const double eps = res * 1e-6;
  for (const auto& ray : scan.rays) {
    double dir = pose.theta + ray.bearing_deg;
    march_ray(lx, ly, dir, ray.hit_range_m + res, res, map.h(), map.w(),
              [&](int i, int j, double t) {
                if (t < ray.hit_range_m - eps) {
                  map.at(kExploredChannel, i, j) = 1;
                  return true;
                }
                if (ray.is_obstacle) {
                  map.at(kExploredChannel, i, j) = 1;
                  map.at(kObstacleChannel, i, j) = 1;
                  if (ray.hit_label > 0) map.at(category_channel(ray.hit_label), i, j) = 1;
                }
                return false;
              });
  }

  std::memset(map.channel(kCurrentLocationChannel), 0, map.plane_size());
  map.at(kCurrentLocationChannel, agent.i, agent.j) = 1;
  map.at(kPastLocationsChannel, agent.i, agent.j) = 1;
  map.at(kExploredChannel, agent.i, agent.j) = 1;
}

void inscribe_obstacle(SemanticMap& map, Cell c) {
  if (!map.in_bounds(c)) return;
  map.at(kObstacleChannel, c.i, c.j) = 1;
  map.at(kExploredChannel, c.i, c.j) = 1;
}

SemanticMap crop_egocentric(const SemanticMap& map, const Pose& pose, double side_m,
                            std::optional<FrustumSpec> frustum) {
  if (side_m <= 0.0) throw std::runtime_error("crop side must be positive");
  double res = map.resolution();
  int side = std::max(1, static_cast<int>(std::lround(side_m / res)));
  SemanticMap crop(side, side, res, -0.5 * side * res, -0.5 * side * res);

  // Crop frame: agent at the center, facing "up" (decreasing row index).
  double th = deg_to_rad(pose.theta);
  double fx = std::cos(th), fy = std::sin(th);    // forward
  double rx = -std::sin(th), ry = std::cos(th);   // to the agent's left in map frame
  double half = 0.5 * side * res;
  double half_fov = frustum ? frustum->fov_deg / 2.0 : 0.0;

  for (int ci = 0; ci < side; ++ci) {
    for (int cj = 0; cj < side; ++cj) {
      double ahead = half - (ci + 0.5) * res;
      double lateral = (cj + 0.5) * res - half;  // along the agent's left axis
      if (frustum) {
        double range = std::hypot(ahead, lateral);
        double bearing = rad_to_deg(std::atan2(lateral, ahead));
        if (range > frustum->max_range_m || std::abs(bearing) > half_fov) continue;
      }
      double sx = pose.x + fx * ahead + rx * lateral;
      double sy = pose.y + fy * ahead + ry * lateral;
      Cell src = map.cell_of(sx, sy);
      if (!map.in_bounds(src)) continue;
      for (int c = 0; c < kNumChannels; ++c) crop.at(c, ci, cj) = map.at(c, src.i, src.j);
    }
  }
  return crop;
}

void save_map(const SemanticMap& map, const std::filesystem::path& path) {
  BinaryWriter out(path);
  out.magic("PNMP");
  out.u16(1);
  out.u16(static_cast<uint16_t>(kNumChannels));
  out.u32(static_cast<uint32_t>(map.h()));
  out.u32(static_cast<uint32_t>(map.w()));
  out.f32(static_cast<float>(map.resolution()));
  std::vector<uint8_t> buf(map.plane_size());
  for (int c = 0; c < kNumChannels; ++c) {
    const uint8_t* src = map.channel(c);
    for (size_t k = 0; k < buf.size(); ++k) buf[k] = src[k] ? 255 : 0;
    out.bytes(buf.data(), buf.size());
  }
  out.close();
}

SemanticMap load_map(const std::filesystem::path& path) {
  BinaryReader in(path);
  in.expect_magic("PNMP");
  uint16_t version = in.u16();
  if (version != 1) throw std::runtime_error("unsupported map file version");
  uint16_t channels = in.u16();
  if (channels != kNumChannels) throw std::runtime_error("unexpected channel count in map file");
  uint32_t h = in.u32();
  uint32_t w = in.u32();
  float res = in.f32();
  SemanticMap map(static_cast<int>(h), static_cast<int>(w), res, 0.0, 0.0);
  std::vector<uint8_t> buf(map.plane_size());
  for (int c = 0; c < kNumChannels; ++c) {
    in.bytes(buf.data(), buf.size());
    uint8_t* dst = map.channel(c);
    for (size_t k = 0; k < buf.size(); ++k) dst[k] = buf[k] >= 128 ? 1 : 0;
  }
  return map;
}

}  // namespace peanut::mapping
