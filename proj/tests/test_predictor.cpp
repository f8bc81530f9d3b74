#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "peanut/predictor.hpp"
#include "peanut/rng.hpp"
#include "peanut/snapshots.hpp"

using namespace peanut;
using namespace peanut::predictor;

namespace {

mapping::SemanticMap random_map(Rng& rng, int n, double fill = 0.3) {
  mapping::SemanticMap m(n, n, 0.05, 0.0, 0.0);
  for (int c = 0; c < m.channels(); ++c) {
    uint8_t* plane = m.channel(c);
    for (size_t k = 0; k < m.plane_size(); ++k) plane[k] = rng.bernoulli(fill) ? 1 : 0;
  }
  return m;
}

TrainingTarget random_target(Rng& rng, int categories, int n, double rate = 0.1) {
  TrainingTarget t;
  t.categories = categories;
  t.h = n;
  t.w = n;
  t.y.resize(static_cast<size_t>(categories) * n * n);
  for (auto& v : t.y) v = rng.bernoulli(rate) ? 1 : 0;
  return t;
}

PredictorModel small_model(Rng& rng, int categories = 2, double scale = 0.5) {
  FeatureSpec spec;
  spec.radii = {1, 2};
  PredictorModel model = PredictorModel::zeros(spec, categories);
  for (auto& v : model.theta) v = rng.normal(0.0, scale);
  return model;
}

Grid<float> rot90(const Grid<float>& g) {
  // (i, j) -> (j, H-1-i) as a grid map; matches the augmentation transform.
  Grid<float> out(g.w(), g.h());
  for (int i = 0; i < g.h(); ++i)
    for (int j = 0; j < g.w(); ++j) out.at(j, g.h() - 1 - i) = g.at(i, j);
  return out;
}

mapping::SemanticMap rot90_map(const mapping::SemanticMap& m) {
  mapping::SemanticMap out(m.w(), m.h(), m.resolution(), m.origin_x(), m.origin_y());
  for (int c = 0; c < m.channels(); ++c)
    for (int i = 0; i < m.h(); ++i)
      for (int j = 0; j < m.w(); ++j) out.at(c, j, m.h() - 1 - i) = m.at(c, i, j);
  return out;
}

}  // namespace

TEST_CASE("make_target implements y = (1 - e) * M") {
  mapping::SemanticMap final_map(6, 6, 0.05, 0.0, 0.0);
  final_map.at(mapping::category_channel(2), 2, 3) = 1;
  final_map.at(mapping::category_channel(2), 4, 4) = 1;
  final_map.at(mapping::category_channel(5), 1, 1) = 1;

  SUBCASE("fully explored gives all-zero targets") {
    Grid<uint8_t> e(6, 6, 1);
    TrainingTarget t = make_target(final_map, e);
    for (auto v : t.y) CHECK(v == 0);
  }
  SUBCASE("nothing explored reproduces the target channels") {
    Grid<uint8_t> e(6, 6, 0);
    TrainingTarget t = make_target(final_map, e);
    CHECK(t.at(1, 2, 3) == 1);
    CHECK(t.at(1, 4, 4) == 1);
    CHECK(t.at(4, 1, 1) == 1);
    size_t total = 0;
    for (auto v : t.y) total += v;
    CHECK(total == 3);
  }
  SUBCASE("an explored target cell is zeroed") {
    Grid<uint8_t> e(6, 6, 0);
    e.at(2, 3) = 1;
    TrainingTarget t = make_target(final_map, e);
    CHECK(t.at(1, 2, 3) == 0);
    CHECK(t.at(1, 4, 4) == 1);
  }
  SUBCASE("shape mismatch is an error") {
    Grid<uint8_t> e(5, 6, 0);
    CHECK_THROWS(make_target(final_map, e));
  }
}

TEST_CASE("apply: zero parameters give 0.5 everywhere, saturated bias nearly 1") {
  Rng rng(1);
  mapping::SemanticMap m = random_map(rng, 12);
  FeatureSpec spec;
  spec.radii = {1, 2};
  PredictorModel zero = PredictorModel::zeros(spec, 3);
  auto z = apply(zero, m);
  REQUIRE(z.size() == 3);
  for (const auto& plane : z)
    for (float v : plane) CHECK(v == doctest::Approx(0.5));

  PredictorModel biased = zero;
  for (int c = 0; c < 3; ++c)
    biased.theta[static_cast<size_t>(c) * biased.params_per_category() +
                 spec.features_per_cell()] = 10.0;
  for (const auto& plane : apply(biased, m))
    for (float v : plane) CHECK(v > 0.9999f);
}

TEST_CASE("apply: translation equivariance away from borders") {
  Rng rng(2);
  int n = 24, di = 3, dj = 5;
  mapping::SemanticMap m(n, n, 0.05, 0.0, 0.0);
  for (int c = 0; c < m.channels(); ++c)
    for (int i = 8; i < 14; ++i)
      for (int j = 8; j < 14; ++j) m.at(c, i, j) = rng.bernoulli(0.4) ? 1 : 0;
  mapping::SemanticMap shifted(n, n, 0.05, 0.0, 0.0);
  for (int c = 0; c < m.channels(); ++c)
    for (int i = 0; i < n - di; ++i)
      for (int j = 0; j < n - dj; ++j) shifted.at(c, i + di, j + dj) = m.at(c, i, j);

  PredictorModel model = small_model(rng, 2);
  int margin = 2;  // largest pooling radius
  auto za = apply(model, m);
  auto zb = apply(model, shifted);
  for (int i = margin; i < n - margin - di; ++i)
    for (int j = margin; j < n - margin - dj; ++j)
      CHECK(za[0].at(i, j) == zb[0].at(i + di, j + dj));
}

TEST_CASE("apply: exact equivariance under 90-degree rotation") {
  Rng rng(3);
  mapping::SemanticMap m = random_map(rng, 16);
  PredictorModel model = small_model(rng, 2);
  auto z = apply(model, m);
  auto zr = apply(model, rot90_map(m));
  Grid<float> expected = rot90(z[0]);
  for (size_t k = 0; k < expected.size(); ++k) CHECK(zr[0][k] == expected[k]);
}

TEST_CASE("loss: 0.5 predictions give ln 2, perfect predictions give ~0") {
  Rng rng(4);
  int n = 8;
  mapping::SemanticMap m = random_map(rng, n);
  FeatureSpec spec;
  spec.radii = {1, 2};
  PredictorModel zero = PredictorModel::zeros(spec, 2);
  TrainingTarget y = random_target(rng, 2, n);
  CHECK(loss_value(zero, m, y) == doctest::Approx(std::log(2.0)).epsilon(1e-9));

  // saturate toward y == 0 with a huge negative bias; the clamp keeps the
  // loss finite and tiny
  TrainingTarget zeros_y = y;
  std::fill(zeros_y.y.begin(), zeros_y.y.end(), 0);
  PredictorModel saturated = zero;
  for (int c = 0; c < 2; ++c)
    saturated.theta[static_cast<size_t>(c) * saturated.params_per_category() +
                    spec.features_per_cell()] = -40.0;
  CHECK(loss_value(saturated, m, zeros_y) <= 1e-6);
}

TEST_CASE("gradient matches central finite differences on 100 random instances") {
  Rng rng(5);
  const double h = 1e-4;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    mapping::SemanticMap m = random_map(rng, 8);
    PredictorModel model = small_model(rng, 2, 0.8);
    TrainingTarget y = random_target(rng, 2, 8, 0.2);
    auto [loss, grad] = loss_and_grad(model, m, y);
    CHECK(loss >= 0.0);
    for (size_t k = 0; k < model.theta.size(); ++k) {
      PredictorModel up = model, down = model;
      up.theta[k] += h;
      down.theta[k] -= h;
      double fd = (loss_value(up, m, y) - loss_value(down, m, y)) / (2.0 * h);
      double rel = std::abs(fd - grad[k]) / std::max({std::abs(fd), std::abs(grad[k]), 1e-6});
      worst = std::max(worst, rel);
      REQUIRE(rel <= 1e-4);
    }
  }
  MESSAGE("worst finite-difference relative error: ", worst);
}

TEST_CASE("loss is invariant under joint rotation of map and target") {
  Rng rng(6);
  mapping::SemanticMap m = random_map(rng, 12);
  PredictorModel model = small_model(rng, 2);
  TrainingTarget y = random_target(rng, 2, 12);

  mapping::SemanticMap mr = rot90_map(m);
  TrainingTarget yr = y;
  for (int c = 0; c < y.categories; ++c) {
    Grid<float> tmp(12, 12);
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 12; ++j) tmp.at(i, j) = y.at(c, i, j);
    Grid<float> r = rot90(tmp);
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 12; ++j) yr.y[(static_cast<size_t>(c) * 12 + i) * 12 + j] =
          static_cast<uint8_t>(r.at(i, j));
  }
  CHECK(loss_value(model, m, y) == doctest::Approx(loss_value(model, mr, yr)).epsilon(1e-12));
}

TEST_CASE("infer masks explored cells and stays in range") {
  Rng rng(7);
  mapping::SemanticMap m = random_map(rng, 10);
  PredictorModel model = small_model(rng, 2);
  Grid<uint8_t> explored(10, 10, 0);
  for (size_t k = 0; k < explored.size(); ++k) explored[k] = rng.bernoulli(0.5) ? 1 : 0;

  ProbabilityMap z = infer(model, m, 1, explored);
  CHECK(z.masked);
  for (size_t k = 0; k < z.z.size(); ++k) {
    if (explored[k]) {
      CHECK(z.z[k] == 0.0f);
    } else {
      CHECK(z.z[k] > 0.0f);
      CHECK(z.z[k] < 1.0f);
    }
  }

  SUBCASE("fully explored map gives identically zero") {
    Grid<uint8_t> all(10, 10, 1);
    ProbabilityMap z2 = infer(model, m, 1, all);
    for (float v : z2.z) CHECK(v == 0.0f);
  }
  SUBCASE("zero parameters and nothing explored give 0.5") {
    FeatureSpec spec;
    spec.radii = {1, 2};
    PredictorModel zero = PredictorModel::zeros(spec, 2);
    Grid<uint8_t> none(10, 10, 0);
    ProbabilityMap z3 = infer(zero, m, 1, none);
    for (float v : z3.z) CHECK(v == doctest::Approx(0.5));
  }
}

TEST_CASE("eval_dto: grid geometry and tie-breaking") {
  Grid<uint8_t> target(8, 8, 0);
  target.at(4, 4) = 1;
  ProbabilityMap z;
  z.z = Grid<float>(8, 8, 0.1f);

  SUBCASE("argmax on a target cell gives zero distance") {
    z.z.at(4, 4) = 0.9f;
    CHECK(*eval_dto(z, target, 0.05) == doctest::Approx(0.0));
  }
  SUBCASE("argmax one cell away gives one resolution") {
    z.z.at(4, 5) = 0.9f;
    CHECK(*eval_dto(z, target, 0.05) == doctest::Approx(0.05));
  }
  SUBCASE("ties break to the lowest row-major index") {
    z.z.at(2, 2) = 0.9f;
    z.z.at(6, 6) = 0.9f;  // same value, higher index
    double expected = std::hypot(2.0, 2.0) * 0.05;
    CHECK(*eval_dto(z, target, 0.05) == doctest::Approx(expected));
  }
  SUBCASE("no target cells excludes the item") {
    Grid<uint8_t> none(8, 8, 0);
    CHECK(!eval_dto(z, none, 0.05).has_value());
  }
}

TEST_CASE("eval_nll: uniform mass gives log K, concentrated mass gives ~0") {
  int n = 10;
  Grid<uint8_t> target(n, n, 0);
  target.at(3, 3) = 1;

  SUBCASE("uniform over K cells containing the target") {
    ProbabilityMap z;
    z.z = Grid<float>(n, n, 0.0f);
    int K = 25;
    for (int k = 0; k < K; ++k) z.z[k * 4] = 0.2f;  // support includes index 0
    Grid<uint8_t> t2(n, n, 0);
    t2.at(0, 0) = 1;
    double nll = *eval_nll(z, t2);
    CHECK(nll == doctest::Approx(std::log(static_cast<double>(K))).epsilon(1e-6));
  }
  SUBCASE("all mass on the single target cell") {
    ProbabilityMap z;
    z.z = Grid<float>(n, n, 0.0f);
    z.z.at(3, 3) = 0.7f;
    CHECK(*eval_nll(z, target) == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("zero total mass is a degenerate prediction") {
    ProbabilityMap z;
    z.z = Grid<float>(n, n, 0.0f);
    CHECK_THROWS_WITH(static_cast<void>(eval_nll(z, target)),
                      doctest::Contains("degenerate"));
  }
}

TEST_CASE("checkpoint files round-trip") {
  Rng rng(8);
  PredictorModel model = small_model(rng, 4);
  model.egocentric = true;
  model.crop_side_m = 6.0;
  auto path = std::filesystem::temp_directory_path() / "peanut_test_model.pnck";
  save_model(model, path);
  PredictorModel loaded = load_model(path);
  CHECK(loaded.feature_spec == model.feature_spec);
  CHECK(loaded.categories == model.categories);
  CHECK(loaded.egocentric == model.egocentric);
  CHECK(loaded.theta == model.theta);
  std::filesystem::remove(path);
}

namespace {

/// Small on-disk dataset shared by the training tests.
const SnapshotDataset& shared_dataset() {
  static SnapshotDataset ds = [] {
    auto dir = std::filesystem::temp_directory_path() / "peanut_test_dataset";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    world::GenerationParams params = world::preset_params("train");
    std::vector<SnapshotItem> all;
    for (uint64_t scene_seed : {101u, 102u, 103u, 104u, 105u}) {
      world::GroundTruthScene scene = world::generate_scene(scene_seed, params);
      Grid<uint8_t> nav = scene.navigable_mask(world::kAgentRadiusM);
      Rng rng(scene_seed);
      for (int spawn = 0; spawn < 2; ++spawn) {
        std::vector<size_t> cells;
        for (size_t k = 0; k < nav.size(); ++k)
          if (nav[k]) cells.push_back(k);
        Cell cell = nav.cell(cells[rng.uniform_int(0, static_cast<int64_t>(cells.size()) - 1)]);
        Vec2 pos = cell_center(cell, scene.resolution);
        SnapshotRunConfig run;
        run.rng_seed = Rng::derive(scene_seed, spawn);
        auto items = generate_snapshots(scene, Pose{pos.x, pos.y, 0.0}, spawn, run, dir);
        all.insert(all.end(), items.begin(), items.end());
      }
    }
    append_dataset_index(dir, all);
    return load_dataset(dir);
  }();
  return ds;
}

}  // namespace

TEST_CASE("snapshot pipeline: ten inputs plus a final map per trajectory") {
  const SnapshotDataset& ds = shared_dataset();
  CHECK(ds.items.size() == 5 * 2 * 10);
  for (const auto& item : ds.items) {
    CHECK(item.step >= 25);
    CHECK(item.step <= 250);
    CHECK(item.step % 25 == 0);
    CHECK(std::filesystem::exists(ds.root / item.input_file));
    CHECK(std::filesystem::exists(ds.root / item.final_file));
    CHECK(item.coverage > 0.0);
  }
  // exploration is monotone along each trajectory
  auto explored_count = [&](const std::string& file) {
    mapping::SemanticMap m = mapping::load_map(ds.root / file);
    size_t n = 0;
    const uint8_t* e = m.channel(mapping::kExploredChannel);
    for (size_t k = 0; k < m.plane_size(); ++k) n += e[k];
    return n;
  };
  CHECK(explored_count(ds.items[0].input_file) <= explored_count(ds.items[9].input_file));
}

TEST_CASE("dataset split is by scene") {
  const SnapshotDataset& ds = shared_dataset();
  auto [train_idx, val_idx] = ds.split_by_scene(0.2);
  CHECK(!train_idx.empty());
  CHECK(!val_idx.empty());
  std::set<uint64_t> train_scenes, val_scenes;
  for (int k : train_idx) train_scenes.insert(ds.items[k].scene_seed);
  for (int k : val_idx) val_scenes.insert(ds.items[k].scene_seed);
  for (uint64_t s : val_scenes) CHECK(!train_scenes.count(s));
}

TEST_CASE("training: fixed seed reproduces theta bit-identically") {
  const SnapshotDataset& ds = shared_dataset();
  TrainConfig cfg;
  cfg.iterations = 30;
  cfg.batch_size = 4;
  cfg.seed = 11;
  cfg.val_interval = 15;
  TrainResult a = train(ds, cfg);
  TrainResult b = train(ds, cfg);
  CHECK(a.model.theta == b.model.theta);
  CHECK(a.train_loss == b.train_loss);

  // and across worker counts
  cfg.workers = 1;
  TrainResult c = train(ds, cfg);
  cfg.workers = 2;
  TrainResult d = train(ds, cfg);
  CHECK(c.model.theta == d.model.theta);
}

TEST_CASE("training: smoothed loss is non-increasing over early iterations") {
  const SnapshotDataset& full = shared_dataset();
  SnapshotDataset ds;  // 50 items
  ds.root = full.root;
  ds.items.assign(full.items.begin(), full.items.begin() + 50);
  TrainConfig cfg;
  cfg.iterations = 200;
  cfg.seed = 12;
  cfg.val_interval = 1000;  // no checkpoint interruptions
  TrainResult result = train(ds, cfg);
  REQUIRE(result.train_loss.size() == 200);
  const int window = 20;
  std::vector<double> smoothed;
  for (size_t k = 0; k + window <= result.train_loss.size(); ++k) {
    double mean = 0.0;
    for (int q = 0; q < window; ++q) mean += result.train_loss[k + q];
    smoothed.push_back(mean / window);
  }
  // Window means of stochastic batch losses wiggle ~2% once near the
  // plateau; 3% headroom still rejects divergence or oscillation, and the
  // sequence must descend overall.
  for (size_t k = 1; k < smoothed.size(); ++k)
    CHECK(smoothed[k] <= smoothed[k - 1] * 1.03);
  CHECK(smoothed.back() <= smoothed.front());
}

TEST_CASE("training: a single item is memorized below its constant baseline") {
  const SnapshotDataset& ds = shared_dataset();
  // pick an item whose target has a healthy number of positive cells
  int pick = -1;
  mapping::SemanticMap m, fin;
  TrainingTarget y;
  for (size_t k = 0; k < ds.items.size(); ++k) {
    mapping::SemanticMap mi = mapping::load_map(ds.root / ds.items[k].input_file);
    mapping::SemanticMap fi = mapping::load_map(ds.root / ds.items[k].final_file);
    TrainingTarget yi = make_target(fi, mi.exploration_mask());
    size_t positives = 0;
    for (auto v : yi.y) positives += v;
    if (positives >= 50) {
      pick = static_cast<int>(k);
      m = std::move(mi);
      fin = std::move(fi);
      y = std::move(yi);
      break;
    }
  }
  REQUIRE(pick >= 0);
  SnapshotDataset single;
  single.root = ds.root;
  single.items.push_back(ds.items[pick]);

  // best per-category constant predictor on this item
  size_t plane = static_cast<size_t>(y.h) * y.w;
  double baseline = 0.0;
  for (int c = 0; c < y.categories; ++c) {
    double positives = 0.0;
    const uint8_t* p = y.plane(c);
    for (size_t k = 0; k < plane; ++k) positives += p[k];
    double rate = positives / plane;
    if (rate > 0.0 && rate < 1.0)
      baseline += -(rate * std::log(rate) + (1.0 - rate) * std::log(1.0 - rate));
  }
  baseline /= y.categories;
  REQUIRE(baseline > 0.0);

  TrainConfig cfg;
  cfg.iterations = 2000;
  cfg.batch_size = 2;
  cfg.seed = 13;
  cfg.augment = false;
  cfg.val_fraction = 0.0;
  cfg.val_interval = 100000;
  TrainResult result = train(single, cfg);
  double final_loss = loss_value(result.model, m, y);
  MESSAGE("memorization: loss ", final_loss, " vs baseline ", baseline);
  CHECK(final_loss < baseline);
}

TEST_CASE("training aborts on divergence with a diagnostic") {
  const SnapshotDataset& ds = shared_dataset();
  TrainConfig cfg;
  cfg.iterations = 50;
  cfg.alpha = std::numeric_limits<double>::infinity();  // force numerical blow-up
  cfg.seed = 14;
  CHECK_THROWS_WITH(static_cast<void>(train(ds, cfg)), doctest::Contains("diverged"));
}
