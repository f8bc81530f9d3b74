#include "peanut/scene.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <stdexcept>

#include "peanut/io.hpp"
#include "peanut/rng.hpp"

namespace peanut::world {
namespace {

struct Span {
  int begin = 0;
  int end = 0;  // half-open
  int len() const { return end - begin; }
};

struct Rect {
  int i0 = 0, j0 = 0, i1 = 0, j1 = 0;  // half-open
  int area() const { return (i1 - i0) * (j1 - j0); }
};

enum class Archetype { Bathroom, Bedroom, Living, Generic };

struct FootprintSpec {
  int category;
  double along_m;  // extent parallel to the wall it leans on
  double depth_m;  // extent away from the wall
  bool against_wall;
};

FootprintSpec footprint_spec(int category) {
  switch (category) {
    case 1: return {1, 0.55, 0.55, false};  // chair
    case 2: return {2, 1.50, 2.10, true};   // bed
    case 3: return {3, 0.40, 0.40, false};  // plant
    case 4: return {4, 0.45, 0.70, true};   // toilet
    case 5: return {5, 1.30, 0.25, true};   // tv_monitor
    case 6: return {6, 1.90, 0.85, true};   // sofa
    case 7: return {7, 1.30, 0.35, true};   // fireplace
    case 8: return {8, 0.90, 0.12, true};   // mirror
    case 9: return {9, 1.60, 0.75, true};   // bathtub
    default: throw std::runtime_error("unknown category id");
  }
}

/// Working state while assembling one scene.
struct Builder {
  const GenerationParams& p;
  Rng& rng;
  int cells;   // grid side
  int tw;      // wall thickness in cells
  int door_w;  // door width in cells
  GroundTruthScene scene;
  Grid<int32_t> room_of_cell;  // room id of interior cells, -1 wall, -2 doorway
  Grid<uint8_t> navigable;
  double clearance_m;
  int clearance_k;

  std::vector<Span> xcuts, ycuts;  // wall strips including both borders
  std::vector<int> piece_room;     // flattened piece lattice -> room id
  std::vector<std::vector<Rect>> room_pieces;
  std::vector<Archetype> room_type;

  Builder(const GenerationParams& params, Rng& r) : p(params), rng(r) {
    cells = static_cast<int>(std::lround(p.extent_m / p.resolution));
    tw = std::max(1, static_cast<int>(std::lround(p.wall_thickness_m / p.resolution)));
    door_w = std::max(2, static_cast<int>(std::lround(p.door_width_m / p.resolution)));
    clearance_m = p.agent_radius_m + 0.5 * p.resolution;
    clearance_k = static_cast<int>(std::ceil(clearance_m / p.resolution + 0.5));
  }

  bool build(uint64_t seed);

  std::vector<Span> make_cuts() {
    std::vector<Span> cuts;
    cuts.push_back({0, tw});
    int min_s = static_cast<int>(std::lround(p.min_room_side_m / p.resolution));
    int max_s = static_cast<int>(std::lround(p.max_room_side_m / p.resolution));
    int pos = tw;
    while (true) {
      int remaining = cells - tw - pos;  // free run up to the far border wall
      if (remaining <= max_s) break;
      int hi = std::min(max_s, remaining - min_s - tw);
      if (hi < min_s) break;
      int len = static_cast<int>(rng.uniform_int(min_s, hi));
      cuts.push_back({pos + len, pos + len + tw});
      pos += len + tw;
    }
    cuts.push_back({cells - tw, cells});
    return cuts;
  }

  Rect piece_rect(int ix, int iy) const {
    return Rect{ycuts[iy].end, xcuts[ix].end, ycuts[iy + 1].begin, xcuts[ix + 1].begin};
  }

  void fill_rect(Grid<uint8_t>& g, const Rect& r, uint8_t v) {
    for (int i = r.i0; i < r.i1; ++i)
      for (int j = r.j0; j < r.j1; ++j) g.at(i, j) = v;
  }

  void recompute_navigable_window(int i0, int j0, int i1, int j1) {
    i0 = std::max(0, i0);
    j0 = std::max(0, j0);
    i1 = std::min(cells, i1);
    j1 = std::min(cells, j1);
    double res = p.resolution;
    for (int i = i0; i < i1; ++i) {
      for (int j = j0; j < j1; ++j) {
        if (scene.occupancy.at(i, j)) {
          navigable.at(i, j) = 0;
          continue;
        }
        double cx = (j + 0.5) * res, cy = (i + 0.5) * res;
        bool ok = true;
        for (int di = -clearance_k; di <= clearance_k && ok; ++di) {
          for (int dj = -clearance_k; dj <= clearance_k && ok; ++dj) {
            int ii = i + di, jj = j + dj;
            if (!scene.occupancy.in_bounds(ii, jj) || !scene.occupancy.at(ii, jj)) continue;
            double nx = std::clamp(cx, jj * res, (jj + 1) * res);
            double ny = std::clamp(cy, ii * res, (ii + 1) * res);
            if (std::hypot(nx - cx, ny - cy) < clearance_m) ok = false;
          }
        }
        navigable.at(i, j) = ok ? 1 : 0;
      }
    }
  }

  bool navigable_connected_and_rooms_reachable() {
    Cell start{-1, -1};
    for (int i = 0; i < cells && start.i < 0; ++i)
      for (int j = 0; j < cells; ++j)
        if (navigable.at(i, j)) {
          start = {i, j};
          break;
        }
    if (start.i < 0) return false;
    Grid<uint8_t> seen(cells, cells, 0);
    std::deque<Cell> queue{start};
    seen.at(start) = 1;
    size_t reached = 0;
    std::vector<uint8_t> room_hit(room_pieces.size(), 0);
    while (!queue.empty()) {
      Cell c = queue.front();
      queue.pop_front();
      ++reached;
      int r = room_of_cell.at(c);
      if (r >= 0) room_hit[r] = 1;
      const int di[4] = {1, -1, 0, 0};
      const int dj[4] = {0, 0, 1, -1};
      for (int k = 0; k < 4; ++k) {
        int ii = c.i + di[k], jj = c.j + dj[k];
        if (ii < 0 || ii >= cells || jj < 0 || jj >= cells) continue;
        if (!navigable.at(ii, jj) || seen.at(ii, jj)) continue;
        seen.at(ii, jj) = 1;
        queue.push_back({ii, jj});
      }
    }
    size_t total = 0;
    for (size_t k = 0; k < navigable.size(); ++k) total += navigable[k] ? 1 : 0;
    if (reached != total) return false;
    for (uint8_t hit : room_hit)
      if (!hit) return false;
    return true;
  }

  bool try_place(int room, int category, std::optional<Rect> forced = std::nullopt);
  bool place_facing_pair(int room);
  void furnish_room(int room);
};

struct DisjointSet {
  std::vector<int> parent;
  explicit DisjointSet(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int a) { return parent[a] == a ? a : parent[a] = find(parent[a]); }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[b] = a;
    return true;
  }
};

bool Builder::try_place(int room, int category, std::optional<Rect> forced) {
  FootprintSpec spec = footprint_spec(category);
  double res = p.resolution;
  int along = std::max(1, static_cast<int>(std::lround(spec.along_m / res)));
  int depth = std::max(1, static_cast<int>(std::lround(spec.depth_m / res)));

  for (int attempt = 0; attempt < p.max_object_attempts; ++attempt) {
    Rect fp;
    if (forced) {
      fp = *forced;
      attempt = p.max_object_attempts;  // single shot
    } else {
      const auto& pieces = room_pieces[room];
      std::vector<double> weights;
      for (const auto& r : pieces) weights.push_back(r.area());
      int pi = rng.categorical(weights);
      if (pi < 0) return false;
      Rect r = pieces[pi];
      if (spec.against_wall) {
        int side = static_cast<int>(rng.uniform_int(0, 3));  // 0=N 1=S 2=W 3=E
        bool horizontal = side < 2;           // leaning on a horizontal wall
        int a = horizontal ? along : depth;   // extent in j
        int b = horizontal ? depth : along;   // extent in i
        if (r.j1 - r.j0 < a + 4 || r.i1 - r.i0 < b + 4) continue;
        int i0, j0;
        if (horizontal) {
          j0 = static_cast<int>(rng.uniform_int(r.j0 + 1, r.j1 - a - 1));
          i0 = side == 0 ? r.i0 : r.i1 - b;
        } else {
          i0 = static_cast<int>(rng.uniform_int(r.i0 + 1, r.i1 - b - 1));
          j0 = side == 2 ? r.j0 : r.j1 - a;
        }
        fp = Rect{i0, j0, i0 + b, j0 + a};
      } else {
        bool rot = rng.bernoulli(0.5);
        int a = rot ? depth : along;
        int b = rot ? along : depth;
        int margin = static_cast<int>(std::lround(0.4 / res));
        if (r.j1 - r.j0 < a + 2 * margin || r.i1 - r.i0 < b + 2 * margin) continue;
        int j0 = static_cast<int>(rng.uniform_int(r.j0 + margin, r.j1 - margin - a));
        int i0 = static_cast<int>(rng.uniform_int(r.i0 + margin, r.i1 - margin - b));
        fp = Rect{i0, j0, i0 + b, j0 + a};
      }
    }

    bool valid = fp.i0 >= 0 && fp.j0 >= 0 && fp.i1 <= cells && fp.j1 <= cells;
    for (int i = fp.i0; i < fp.i1 && valid; ++i)
      for (int j = fp.j0; j < fp.j1 && valid; ++j)
        if (scene.occupancy.at(i, j) || room_of_cell.at(i, j) != room) valid = false;
    if (!valid) continue;

    // Tentatively occupy, then make sure the agent can still reach every room.
    for (int i = fp.i0; i < fp.i1; ++i)
      for (int j = fp.j0; j < fp.j1; ++j) scene.occupancy.at(i, j) = 1;
    recompute_navigable_window(fp.i0 - clearance_k, fp.j0 - clearance_k, fp.i1 + clearance_k,
                               fp.j1 + clearance_k);
    if (!navigable_connected_and_rooms_reachable()) {
      for (int i = fp.i0; i < fp.i1; ++i)
        for (int j = fp.j0; j < fp.j1; ++j) scene.occupancy.at(i, j) = 0;
      recompute_navigable_window(fp.i0 - clearance_k, fp.j0 - clearance_k, fp.i1 + clearance_k,
                                 fp.j1 + clearance_k);
      continue;
    }

    ObjectInstance inst;
    inst.category = static_cast<uint8_t>(category);
    for (int i = fp.i0; i < fp.i1; ++i)
      for (int j = fp.j0; j < fp.j1; ++j) {
        scene.labels.at(i, j) = static_cast<uint8_t>(category);
        scene.instance_ids.at(i, j) = static_cast<int32_t>(scene.instances.size());
        inst.cells.push_back(static_cast<uint32_t>(scene.occupancy.idx(i, j)));
      }
    scene.instances.push_back(std::move(inst));
    return true;
  }
  return false;
}

/// TV against a wall plus a sofa facing it across the room.
bool Builder::place_facing_pair(int room) {
  if (!try_place(room, 5)) return false;
  const auto& tv = scene.instances.back();
  Cell lo = scene.occupancy.cell(tv.cells.front());
  Cell hi = scene.occupancy.cell(tv.cells.back());
  double res = p.resolution;
  double cx = (lo.j + hi.j + 1) * 0.5 * res;
  double cy = (lo.i + hi.i + 1) * 0.5 * res;
  bool horizontal = (hi.j - lo.j) >= (hi.i - lo.i);  // tv long side along j
  // Outward normal: away from the nearest wall behind the tv.
  int ni = 0, nj = 0;
  if (horizontal) {
    ni = (lo.i < cells / 2) ? 1 : -1;
  } else {
    nj = (lo.j < cells / 2) ? 1 : -1;
  }

  FootprintSpec sofa = footprint_spec(6);
  int along = static_cast<int>(std::lround(sofa.along_m / res));
  int depth = static_cast<int>(std::lround(sofa.depth_m / res));
  for (int attempt = 0; attempt < 8; ++attempt) {
    double gap = rng.uniform(1.4, 3.0);
    double sx = cx + nj * gap;
    double sy = cy + ni * gap;
    int a = horizontal ? along : depth;
    int b = horizontal ? depth : along;
    Rect fp;
    fp.j0 = static_cast<int>(std::lround(sx / res - a * 0.5));
    fp.i0 = static_cast<int>(std::lround(sy / res - b * 0.5));
    fp.i1 = fp.i0 + b;
    fp.j1 = fp.j0 + a;
    if (try_place(room, 6, fp)) return true;
  }
  return try_place(room, 6);  // fall back to any wall
}

void Builder::furnish_room(int room) {
  double d = p.object_density;
  auto maybe = [&](double prob, int category) {
    if (rng.bernoulli(std::min(1.0, prob * d))) try_place(room, category);
  };
  switch (room_type[room]) {
    case Archetype::Bathroom:
      maybe(0.92, 4);  // toilet
      maybe(0.75, 9);  // bathtub
      maybe(0.50, 8);  // mirror
      break;
    case Archetype::Bedroom:
      maybe(0.92, 2);  // bed
      maybe(0.45, 1);  // chair
      maybe(0.30, 8);  // mirror
      maybe(0.25, 3);  // plant
      break;
    case Archetype::Living: {
      bool tv = rng.bernoulli(std::min(1.0, 0.70 * d));
      if (tv) {
        if (rng.bernoulli(0.92)) {
          place_facing_pair(room);
        } else {
          try_place(room, 5);
        }
      } else {
        maybe(0.45, 6);  // sofa without tv
      }
      maybe(0.65, 1);
      maybe(0.30, 1);
      maybe(0.45, 3);
      maybe(0.30, 7);  // fireplace
      break;
    }
    case Archetype::Generic:
      maybe(0.55, 1);
      maybe(0.40, 3);
      if (rng.bernoulli(std::min(1.0, 0.10 * d))) {
        place_facing_pair(room);
      } else {
        maybe(0.12, 6);
      }
      maybe(0.12, 8);
      break;
  }
}

bool Builder::build(uint64_t seed) {
  scene = GroundTruthScene{};
  scene.resolution = p.resolution;
  scene.height = cells;
  scene.width = cells;
  scene.seed = seed;
  scene.occupancy = Grid<uint8_t>(cells, cells, 0);
  scene.labels = Grid<uint8_t>(cells, cells, 0);
  scene.instance_ids = Grid<int32_t>(cells, cells, -1);
  room_of_cell = Grid<int32_t>(cells, cells, -1);

  xcuts = make_cuts();
  ycuts = make_cuts();
  int nx = static_cast<int>(xcuts.size()) - 1;
  int ny = static_cast<int>(ycuts.size()) - 1;
  if (nx < 1 || ny < 1) return false;

  // Draw every wall strip, then open up merged pieces and doors.
  for (const auto& s : xcuts) fill_rect(scene.occupancy, Rect{0, s.begin, cells, s.end}, 1);
  for (const auto& s : ycuts) fill_rect(scene.occupancy, Rect{s.begin, 0, s.end, cells}, 1);

  auto piece_id = [&](int ix, int iy) { return iy * nx + ix; };
  DisjointSet merge_set(nx * ny);

  struct Wall {
    int pa, pb;
    Rect strip;  // erasable interior of the shared wall
    bool vertical;
  };
  std::vector<Wall> walls;
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      Rect r = piece_rect(ix, iy);
      if (ix + 1 < nx)
        walls.push_back({piece_id(ix, iy), piece_id(ix + 1, iy),
                         Rect{r.i0, xcuts[ix + 1].begin, r.i1, xcuts[ix + 1].end}, true});
      if (iy + 1 < ny)
        walls.push_back({piece_id(ix, iy), piece_id(ix, iy + 1),
                         Rect{ycuts[iy + 1].begin, r.j0, ycuts[iy + 1].end, r.j1}, false});
    }
  }
  for (auto& wall : walls) {
    if (rng.bernoulli(p.room_merge_prob)) {
      merge_set.unite(wall.pa, wall.pb);
      fill_rect(scene.occupancy, wall.strip, 0);
    }
  }

  // Rooms = merged piece groups.
  std::vector<int> root_to_room(nx * ny, -1);
  piece_room.assign(nx * ny, -1);
  room_pieces.clear();
  for (int pc = 0; pc < nx * ny; ++pc) {
    int root = merge_set.find(pc);
    if (root_to_room[root] < 0) {
      root_to_room[root] = static_cast<int>(room_pieces.size());
      room_pieces.emplace_back();
    }
    piece_room[pc] = root_to_room[root];
    Rect r = piece_rect(pc % nx, pc / nx);
    room_pieces[piece_room[pc]].push_back(r);
    for (int i = r.i0; i < r.i1; ++i)
      for (int j = r.j0; j < r.j1; ++j) room_of_cell.at(i, j) = piece_room[pc];
  }
  int n_rooms = static_cast<int>(room_pieces.size());
  if (n_rooms < p.min_rooms) return false;

  // Doors: a random spanning tree over rooms guarantees connectivity,
  // plus extra openings for loops.
  auto carve_door = [&](const Wall& wall) -> bool {
    int margin = tw + 2;
    int lo = (wall.vertical ? wall.strip.i0 : wall.strip.j0) + margin;
    int hi = (wall.vertical ? wall.strip.i1 : wall.strip.j1) - margin - door_w;
    if (hi < lo) return false;
    int start = static_cast<int>(rng.uniform_int(lo, hi));
    Rect opening = wall.vertical ? Rect{start, wall.strip.j0, start + door_w, wall.strip.j1}
                                 : Rect{wall.strip.i0, start, wall.strip.i1, start + door_w};
    fill_rect(scene.occupancy, opening, 0);
    for (int i = opening.i0; i < opening.i1; ++i)
      for (int j = opening.j0; j < opening.j1; ++j) room_of_cell.at(i, j) = -2;
    return true;
  };

  std::vector<int> order(walls.size());
  std::iota(order.begin(), order.end(), 0);
  for (size_t k = order.size(); k > 1; --k)
    std::swap(order[k - 1], order[rng.uniform_int(0, static_cast<int64_t>(k) - 1)]);

  DisjointSet door_set(n_rooms);
  int components = n_rooms;
  for (int idx : order) {
    const Wall& wall = walls[idx];
    int ra = piece_room[wall.pa], rb = piece_room[wall.pb];
    if (ra == rb) continue;
    if (door_set.find(ra) == door_set.find(rb)) {
      if (rng.bernoulli(p.extra_door_prob)) carve_door(wall);
      continue;
    }
    if (carve_door(wall)) {
      door_set.unite(ra, rb);
      --components;
    }
  }
  if (components != 1) return false;

  navigable = Grid<uint8_t>(cells, cells, 0);
  recompute_navigable_window(0, 0, cells, cells);
  if (!navigable_connected_and_rooms_reachable()) return false;

  // Archetypes: smallest room is a bathroom, the largest a living room.
  std::vector<int> by_area(n_rooms);
  std::iota(by_area.begin(), by_area.end(), 0);
  auto area_of = [&](int r) {
    int a = 0;
    for (const auto& piece : room_pieces[r]) a += piece.area();
    return a;
  };
  std::sort(by_area.begin(), by_area.end(), [&](int a, int b) { return area_of(a) < area_of(b); });
  room_type.assign(n_rooms, Archetype::Generic);
  room_type[by_area.front()] = Archetype::Bathroom;
  room_type[by_area.back()] = n_rooms > 1 ? Archetype::Living : Archetype::Generic;
  double cell_area = p.resolution * p.resolution;
  for (int r : by_area) {
    if (room_type[r] != Archetype::Generic) continue;
    double area_m2 = area_of(r) * cell_area;
    if (area_m2 < 8.0 && rng.bernoulli(0.35)) {
      room_type[r] = Archetype::Bathroom;
    } else if (area_m2 > 18.0 && rng.bernoulli(0.40)) {
      room_type[r] = Archetype::Living;
    } else if (rng.bernoulli(0.45)) {
      room_type[r] = Archetype::Bedroom;
    }
  }

  for (int r = 0; r < n_rooms; ++r) furnish_room(r);

  int distinct_targets = 0;
  for (int c = 1; c <= kNumTargetCategories; ++c)
    if (scene.category_present(c)) ++distinct_targets;
  return distinct_targets >= 2;
}

}  // namespace

const std::array<std::string, kNumCategories + 1>& category_names() {
  static const std::array<std::string, kNumCategories + 1> names = {
      "none",   "chair",     "bed",    "plant",   "toilet",
      "tv_monitor", "sofa",  "fireplace", "mirror", "bathtub"};
  return names;
}

int category_id(const std::string& name) {
  const auto& names = category_names();
  for (int k = 1; k <= kNumCategories; ++k)
    if (names[k] == name) return k;
  throw std::runtime_error("unknown category: " + name);
}

GenerationParams preset_params(const std::string& name) {
  GenerationParams p;
  if (name == "default") {
    p.extent_m = 24.0;
  } else if (name == "small") {
    p.extent_m = 12.0;
  } else if (name == "train") {
    p.extent_m = 8.0;
  } else {
    throw std::runtime_error("unknown scene preset: " + name);
  }
  return p;
}

Grid<uint8_t> GroundTruthScene::target_map(int category) const {
  Grid<uint8_t> m(height, width, 0);
  for (const auto& inst : instances)
    if (inst.category == category)
      for (uint32_t c : inst.cells) m[c] = 1;
  return m;
}

bool GroundTruthScene::category_present(int category) const {
  for (const auto& inst : instances)
    if (inst.category == category) return true;
  return false;
}

Grid<uint8_t> GroundTruthScene::navigable_mask(double clearance_m) const {
  Grid<uint8_t> nav(height, width, 0);
  int k = static_cast<int>(std::ceil(clearance_m / resolution + 0.5));
  for (int i = 0; i < height; ++i) {
    for (int j = 0; j < width; ++j) {
      if (occupancy.at(i, j)) continue;
      double cx = (j + 0.5) * resolution, cy = (i + 0.5) * resolution;
      bool ok = true;
      for (int di = -k; di <= k && ok; ++di) {
        for (int dj = -k; dj <= k && ok; ++dj) {
          int ii = i + di, jj = j + dj;
          if (!occupancy.in_bounds(ii, jj) || !occupancy.at(ii, jj)) continue;
          double nx = std::clamp(cx, jj * resolution, (jj + 1) * resolution);
          double ny = std::clamp(cy, ii * resolution, (ii + 1) * resolution);
          if (std::hypot(nx - cx, ny - cy) < clearance_m) ok = false;
        }
      }
      if (ok) nav.at(i, j) = 1;
    }
  }
  return nav;
}

GroundTruthScene generate_scene(uint64_t seed, const GenerationParams& params) {
  for (int attempt = 0; attempt < params.max_scene_attempts; ++attempt) {
    Rng rng(Rng::derive(seed, static_cast<uint64_t>(attempt)));
    Builder builder(params, rng);
    if (builder.build(seed)) return std::move(builder.scene);
  }
  throw std::runtime_error("scene generation failed after bounded retries");
}

void save_scene(const GroundTruthScene& scene, const std::filesystem::path& path) {
  BinaryWriter out(path);
  out.magic("PNWS");
  out.u16(1);
  out.u32(static_cast<uint32_t>(scene.height));
  out.u32(static_cast<uint32_t>(scene.width));
  out.f32(static_cast<float>(scene.resolution));
  out.u64(scene.seed);
  size_t nbits = scene.occupancy.size();
  std::vector<uint8_t> packed((nbits + 7) / 8, 0);
  for (size_t k = 0; k < nbits; ++k)
    if (scene.occupancy[k]) packed[k >> 3] |= static_cast<uint8_t>(1u << (k & 7));
  out.bytes(packed.data(), packed.size());
  out.u32(static_cast<uint32_t>(scene.instances.size()));
  for (const auto& inst : scene.instances) {
    out.u8(inst.category);
    out.u32(static_cast<uint32_t>(inst.cells.size()));
    out.bytes(inst.cells.data(), inst.cells.size() * sizeof(uint32_t));
  }
  out.close();
}

GroundTruthScene load_scene(const std::filesystem::path& path) {
  BinaryReader in(path);
  in.expect_magic("PNWS");
  uint16_t version = in.u16();
  if (version != 1) throw std::runtime_error("unsupported scene file version");
  GroundTruthScene scene;
  scene.height = static_cast<int>(in.u32());
  scene.width = static_cast<int>(in.u32());
  scene.resolution = in.f32();
  scene.seed = in.u64();
  scene.occupancy = Grid<uint8_t>(scene.height, scene.width, 0);
  size_t nbits = scene.occupancy.size();
  std::vector<uint8_t> packed((nbits + 7) / 8);
  in.bytes(packed.data(), packed.size());
  for (size_t k = 0; k < nbits; ++k)
    scene.occupancy[k] = (packed[k >> 3] >> (k & 7)) & 1u;
  scene.labels = Grid<uint8_t>(scene.height, scene.width, 0);
  scene.instance_ids = Grid<int32_t>(scene.height, scene.width, -1);
  uint32_t n_instances = in.u32();
  scene.instances.resize(n_instances);
  for (uint32_t k = 0; k < n_instances; ++k) {
    auto& inst = scene.instances[k];
    inst.category = in.u8();
    uint32_t n_cells = in.u32();
    inst.cells.resize(n_cells);
    in.bytes(inst.cells.data(), n_cells * sizeof(uint32_t));
    for (uint32_t c : inst.cells) {
      scene.labels[c] = inst.category;
      scene.instance_ids[c] = static_cast<int32_t>(k);
    }
  }
  return scene;
}

Grid<uint8_t> flood_fill(const Grid<uint8_t>& blocked, Cell start) {
  Grid<uint8_t> seen(blocked.h(), blocked.w(), 0);
  if (!blocked.in_bounds(start) || blocked.at(start)) return seen;
  std::deque<Cell> queue{start};
  seen.at(start) = 1;
  while (!queue.empty()) {
    Cell c = queue.front();
    queue.pop_front();
    const int di[4] = {1, -1, 0, 0};
    const int dj[4] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      Cell n{c.i + di[k], c.j + dj[k]};
      if (!blocked.in_bounds(n) || blocked.at(n) || seen.at(n)) continue;
      seen.at(n) = 1;
      queue.push_back(n);
    }
  }
  return seen;
}

}  // namespace peanut::world
