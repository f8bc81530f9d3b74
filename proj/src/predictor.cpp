#include "peanut/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "peanut/io.hpp"
#include "peanut/parallel.hpp"
#include "peanut/rng.hpp"

namespace peanut::predictor {
namespace {

using nlohmann::json;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Box-mean planes for every (channel, radius) pair via summed-area tables.
/// Windows are clipped at the grid edge but divided by the full window area,
/// which matches zero padding and commutes with axis flips and 90-degree
/// rotations.
template <typename T>
std::vector<std::vector<T>> featurize(const mapping::SemanticMap& map, const FeatureSpec& spec) {
  const int h = map.h(), w = map.w();
  const size_t plane = static_cast<size_t>(h) * w;
  std::vector<std::vector<T>> planes(spec.features_per_cell(), std::vector<T>(plane));
  std::vector<uint32_t> sat(static_cast<size_t>(h + 1) * (w + 1), 0);

  int f = 0;
  for (int ch = 0; ch < spec.channels; ++ch) {
    const uint8_t* src = map.channel(ch);
    for (int i = 0; i < h; ++i) {
      const uint8_t* row = src + static_cast<size_t>(i) * w;
      uint32_t* sat_row = sat.data() + static_cast<size_t>(i + 1) * (w + 1);
      const uint32_t* sat_prev = sat.data() + static_cast<size_t>(i) * (w + 1);
      uint32_t run = 0;
      for (int j = 0; j < w; ++j) {
        run += row[j] ? 1u : 0u;
        sat_row[j + 1] = sat_prev[j + 1] + run;
      }
    }
    for (int r : spec.radii) {
      T inv_area = T(1) / (T(2 * r + 1) * T(2 * r + 1));
      T* dst = planes[f].data();
      for (int i = 0; i < h; ++i) {
        int i0 = std::max(0, i - r);
        int i1 = std::min(h - 1, i + r);
        const uint32_t* top = sat.data() + static_cast<size_t>(i0) * (w + 1);
        const uint32_t* bot = sat.data() + static_cast<size_t>(i1 + 1) * (w + 1);
        for (int j = 0; j < w; ++j) {
          int j0 = std::max(0, j - r);
          int j1 = std::min(w - 1, j + r);
          uint32_t sum = bot[j1 + 1] - bot[j0] - top[j1 + 1] + top[j0];
          dst[static_cast<size_t>(i) * w + j] = static_cast<T>(sum) * inv_area;
        }
      }
      ++f;
    }
  }
  return planes;
}

}  // namespace

PredictorModel PredictorModel::zeros(FeatureSpec spec, int categories) {
  PredictorModel m;
  m.feature_spec = std::move(spec);
  m.categories = categories;
  m.theta.assign(m.param_count(), 0.0);
  return m;
}

TrainingTarget make_target(const mapping::SemanticMap& final_map, const Grid<uint8_t>& explored) {
  if (final_map.h() != explored.h() || final_map.w() != explored.w())
    throw std::runtime_error("make_target: shape mismatch");
  TrainingTarget t;
  t.categories = world::kNumTargetCategories;
  t.h = final_map.h();
  t.w = final_map.w();
  t.y.resize(static_cast<size_t>(t.categories) * t.h * t.w);
  for (int c = 0; c < t.categories; ++c) {
    const uint8_t* m = final_map.channel(mapping::category_channel(c + 1));
    uint8_t* dst = t.plane(c);
    for (size_t k = 0; k < static_cast<size_t>(t.h) * t.w; ++k)
      dst[k] = (m[k] && !explored[k]) ? 1 : 0;
  }
  return t;
}

std::vector<Grid<float>> apply(const PredictorModel& model, const mapping::SemanticMap& map) {
  std::vector<Grid<float>> out;
  out.reserve(model.categories);
  auto planes = featurize<float>(map, model.feature_spec);
  const size_t plane = static_cast<size_t>(map.h()) * map.w();
  std::vector<float> logit(plane);
  const int nf = model.feature_spec.features_per_cell();
  for (int c = 0; c < model.categories; ++c) {
    std::fill(logit.begin(), logit.end(), static_cast<float>(model.bias(c)));
    for (int f = 0; f < nf; ++f) {
      float wf = static_cast<float>(model.weight(c, f));
      if (wf == 0.0f) continue;
      const float* src = planes[f].data();
      for (size_t k = 0; k < plane; ++k) logit[k] += wf * src[k];
    }
    Grid<float> z(map.h(), map.w());
    for (size_t k = 0; k < plane; ++k) {
      double p = sigmoid(logit[k]);
      z[k] = static_cast<float>(std::clamp(p, 1e-7, 1.0 - 1e-6));
    }
    out.push_back(std::move(z));
  }
  return out;
}

Grid<float> apply_category(const PredictorModel& model, const mapping::SemanticMap& map,
                           int category) {
  if (category < 1 || category > model.categories)
    throw std::runtime_error("apply_category: category out of range");
  auto planes = featurize<float>(map, model.feature_spec);
  const size_t plane = static_cast<size_t>(map.h()) * map.w();
  const int c = category - 1;
  std::vector<float> logit(plane, static_cast<float>(model.bias(c)));
  const int nf = model.feature_spec.features_per_cell();
  for (int f = 0; f < nf; ++f) {
    float wf = static_cast<float>(model.weight(c, f));
    if (wf == 0.0f) continue;
    const float* src = planes[f].data();
    for (size_t k = 0; k < plane; ++k) logit[k] += wf * src[k];
  }
  Grid<float> z(map.h(), map.w());
  for (size_t k = 0; k < plane; ++k) {
    double p = sigmoid(logit[k]);
    z[k] = static_cast<float>(std::clamp(p, 1e-7, 1.0 - 1e-6));
  }
  return z;
}

ProbabilityMap infer(const PredictorModel& model, const mapping::SemanticMap& map,
                     int target_category, const Grid<uint8_t>& explored) {
  ProbabilityMap out;
  out.target_category = target_category;
  out.z = apply_category(model, map, target_category);
  for (size_t k = 0; k < out.z.size(); ++k)
    if (explored[k]) out.z[k] = 0.0f;
  out.masked = true;
  return out;
}

namespace {

struct LossAccum {
  double loss = 0.0;
  std::vector<double> grad;  // empty when gradients are not requested
};

LossAccum loss_core(const PredictorModel& model, const mapping::SemanticMap& map,
                    const TrainingTarget& target, bool want_grad) {
  if (map.h() != target.h || map.w() != target.w || model.categories != target.categories)
    throw std::runtime_error("loss: shape mismatch");
  auto planes = featurize<double>(map, model.feature_spec);
  const size_t plane = static_cast<size_t>(map.h()) * map.w();
  const int nf = model.feature_spec.features_per_cell();
  const int ppc = model.params_per_category();
  const double norm = 1.0 / (static_cast<double>(model.categories) * plane);

  LossAccum acc;
  if (want_grad) acc.grad.assign(model.theta.size(), 0.0);
  std::vector<double> logit(plane);
  std::vector<double> delta(plane);
  for (int c = 0; c < model.categories; ++c) {
    std::fill(logit.begin(), logit.end(), model.bias(c));
    for (int f = 0; f < nf; ++f) {
      double wf = model.weight(c, f);
      if (wf == 0.0) continue;
      const double* src = planes[f].data();
      for (size_t k = 0; k < plane; ++k) logit[k] += wf * src[k];
    }
    const uint8_t* y = target.plane(c);
    double cat_loss = 0.0;
    for (size_t k = 0; k < plane; ++k) {
      double p = sigmoid(logit[k]);
      double pc = std::clamp(p, kLogClampEps, 1.0 - kLogClampEps);
      cat_loss -= y[k] ? std::log(pc) : std::log(1.0 - pc);
      if (want_grad) delta[k] = (p - static_cast<double>(y[k])) * norm;
    }
    acc.loss += cat_loss * norm;
    if (want_grad) {
      double* gw = acc.grad.data() + static_cast<size_t>(c) * ppc;
      for (int f = 0; f < nf; ++f) {
        const double* src = planes[f].data();
        double dot = 0.0;
        for (size_t k = 0; k < plane; ++k) dot += delta[k] * src[k];
        gw[f] = dot;
      }
      double bsum = 0.0;
      for (size_t k = 0; k < plane; ++k) bsum += delta[k];
      gw[nf] = bsum;
    }
  }
  return acc;
}

}  // namespace

std::pair<double, std::vector<double>> loss_and_grad(const PredictorModel& model,
                                                     const mapping::SemanticMap& map,
                                                     const TrainingTarget& target) {
  LossAccum acc = loss_core(model, map, target, true);
  return {acc.loss, std::move(acc.grad)};
}

double loss_value(const PredictorModel& model, const mapping::SemanticMap& map,
                  const TrainingTarget& target) {
  return loss_core(model, map, target, false).loss;
}

std::optional<double> eval_dto(const ProbabilityMap& z, const Grid<uint8_t>& target_mask,
                               double resolution) {
  bool any_target = false;
  for (size_t k = 0; k < target_mask.size(); ++k)
    if (target_mask[k]) {
      any_target = true;
      break;
    }
  if (!any_target) return std::nullopt;

  size_t best = 0;
  float best_z = z.z[0];
  for (size_t k = 1; k < z.z.size(); ++k)
    if (z.z[k] > best_z) {  // strict: ties keep the lowest row-major index
      best_z = z.z[k];
      best = k;
    }
  Cell a = z.z.cell(best);
  double best_dist = std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < target_mask.size(); ++k) {
    if (!target_mask[k]) continue;
    Cell t = target_mask.cell(k);
    double dist = std::hypot(static_cast<double>(t.i - a.i), static_cast<double>(t.j - a.j));
    best_dist = std::min(best_dist, dist);
  }
  return best_dist * resolution;
}

std::optional<double> eval_nll(const ProbabilityMap& z, const Grid<uint8_t>& target_mask) {
  double sum = 0.0;
  for (size_t k = 0; k < z.z.size(); ++k) sum += z.z[k];
  int count = 0;
  double nll = 0.0;
  for (size_t k = 0; k < target_mask.size(); ++k) {
    if (!target_mask[k]) continue;
    ++count;
    nll -= std::log(static_cast<double>(z.z[k]) / (sum > 0.0 ? sum : 1.0));
  }
  if (count == 0) return std::nullopt;
  if (sum <= 0.0) throw std::runtime_error("degenerate prediction: probability mass is zero");
  return nll / count;
}

std::pair<std::vector<int>, std::vector<int>> SnapshotDataset::split_by_scene(
    double val_fraction) const {
  std::vector<uint64_t> seeds;
  for (const auto& item : items) seeds.push_back(item.scene_seed);
  std::sort(seeds.begin(), seeds.end());
  seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());
  size_t n_val = static_cast<size_t>(std::lround(seeds.size() * val_fraction));
  n_val = std::min(n_val, seeds.size() > 1 ? seeds.size() - 1 : size_t{0});
  std::vector<uint64_t> val_seeds(seeds.end() - n_val, seeds.end());
  std::vector<int> train, val;
  for (size_t k = 0; k < items.size(); ++k) {
    bool is_val = std::binary_search(val_seeds.begin(), val_seeds.end(), items[k].scene_seed);
    (is_val ? val : train).push_back(static_cast<int>(k));
  }
  return {train, val};
}

SnapshotDataset load_dataset(const std::filesystem::path& dir) {
  SnapshotDataset ds;
  ds.root = dir;
  std::ifstream in(dir / "index.jsonl");
  if (!in) throw std::runtime_error("missing dataset index: " + (dir / "index.jsonl").string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    SnapshotItem item;
    item.input_file = j.at("input").get<std::string>();
    item.final_file = j.at("final").get<std::string>();
    item.step = j.at("step").get<int>();
    item.scene_seed = j.at("scene_seed").get<uint64_t>();
    item.spawn = j.at("spawn").get<int>();
    item.pose.x = j.at("pose").at("x").get<double>();
    item.pose.y = j.at("pose").at("y").get<double>();
    item.pose.theta = j.at("pose").at("theta").get<double>();
    item.coverage = j.value("coverage", 0.0);
    if (item.step < 25 || item.step > 250)
      throw std::runtime_error("dataset index contains snapshot outside steps [25, 250]");
    ds.items.push_back(std::move(item));
  }
  return ds;
}

namespace {

struct Augmentation {
  int rot = 0;        // quarter turns
  bool flip = false;  // horizontal flip after rotation
  bool crop = false;
  int ci0 = 0, cj0 = 0, ch = 0, cw = 0;  // source window
  int di0 = 0, dj0 = 0;                  // destination offset
};

Augmentation sample_augmentation(Rng& rng, int h, int w, bool ego) {
  Augmentation a;
  a.rot = static_cast<int>(rng.uniform_int(0, 3));
  a.flip = rng.bernoulli(0.5);
  if (!ego && rng.bernoulli(0.5)) {
    a.crop = true;
    a.ch = static_cast<int>(std::lround(h * rng.uniform(0.75, 1.0)));
    a.cw = static_cast<int>(std::lround(w * rng.uniform(0.75, 1.0)));
    a.ch = std::clamp(a.ch, 1, h);
    a.cw = std::clamp(a.cw, 1, w);
    a.ci0 = static_cast<int>(rng.uniform_int(0, h - a.ch));
    a.cj0 = static_cast<int>(rng.uniform_int(0, w - a.cw));
    a.di0 = static_cast<int>(rng.uniform_int(0, h - a.ch));
    a.dj0 = static_cast<int>(rng.uniform_int(0, w - a.cw));
  }
  return a;
}

/// dst must be a zeroed plane of the same (square) shape.
void transform_plane(const uint8_t* src, uint8_t* dst, int h, int w, const Augmentation& a) {
  auto rotated = [&](int i, int j) -> std::pair<int, int> {
    switch (a.rot) {
      case 1: return {j, h - 1 - i};          // 90 deg ccw source lookup
      case 2: return {h - 1 - i, w - 1 - j};
      case 3: return {w - 1 - j, i};
      default: return {i, j};
    }
  };
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      auto [si, sj] = rotated(i, a.flip ? w - 1 - j : j);
      uint8_t v = src[static_cast<size_t>(si) * w + sj];
      if (!a.crop) {
        dst[static_cast<size_t>(i) * w + j] = v;
      } else if (i >= a.ci0 && i < a.ci0 + a.ch && j >= a.cj0 && j < a.cj0 + a.cw) {
        dst[static_cast<size_t>(i - a.ci0 + a.di0) * w + (j - a.cj0 + a.dj0)] = v;
      }
    }
  }
}

void augment_item(mapping::SemanticMap& map, TrainingTarget& target, const Augmentation& a) {
  if (map.h() != map.w()) return;  // rotations are defined on square maps only
  const int h = map.h(), w = map.w();
  std::vector<uint8_t> buf(static_cast<size_t>(h) * w);
  for (int c = 0; c < map.channels(); ++c) {
    std::fill(buf.begin(), buf.end(), 0);
    transform_plane(map.channel(c), buf.data(), h, w, a);
    std::copy(buf.begin(), buf.end(), map.channel(c));
  }
  for (int c = 0; c < target.categories; ++c) {
    std::fill(buf.begin(), buf.end(), 0);
    transform_plane(target.plane(c), buf.data(), h, w, a);
    std::copy(buf.begin(), buf.end(), target.plane(c));
  }
}

struct AssembledItem {
  mapping::SemanticMap map;
  TrainingTarget target;
};

AssembledItem assemble_item(const SnapshotDataset& ds, const SnapshotItem& item,
                            const TrainConfig& cfg) {
  mapping::SemanticMap m = mapping::load_map(ds.root / item.input_file);
  mapping::SemanticMap fin = mapping::load_map(ds.root / item.final_file);
  if (cfg.egocentric) {
    mapping::FrustumSpec frustum{cfg.frustum_fov_deg, cfg.frustum_range_m};
    m = mapping::crop_egocentric(m, item.pose, cfg.crop_side_m, frustum);
    fin = mapping::crop_egocentric(fin, item.pose, cfg.crop_side_m);
  }
  AssembledItem out{std::move(m), {}};
  out.target = make_target(fin, out.map.exploration_mask());
  return out;
}

}  // namespace

TrainResult train(const SnapshotDataset& dataset, const TrainConfig& config) {
  auto [train_idx, val_idx] = dataset.split_by_scene(config.val_fraction);
  if (train_idx.empty()) throw std::runtime_error("training split is empty");
  int workers = config.workers > 0 ? config.workers : default_workers();

  PredictorModel model = PredictorModel::zeros(config.feature_spec);
  model.egocentric = config.egocentric;
  model.crop_side_m = config.crop_side_m;
  model.frustum_fov_deg = config.frustum_fov_deg;
  model.frustum_range_m = config.frustum_range_m;

  Rng rng(Rng::derive(config.seed, 0x7261696e));

  // Bias init at the per-category base rate so rare positives do not need
  // thousands of iterations just to move the bias into range.
  {
    int sample_n = std::min<int>(128, static_cast<int>(train_idx.size()));
    std::vector<double> positives(model.categories, 0.0);
    double cells = 0.0;
    for (int s = 0; s < sample_n; ++s) {
      int pick = train_idx[rng.uniform_int(0, static_cast<int64_t>(train_idx.size()) - 1)];
      AssembledItem item = assemble_item(dataset, dataset.items[pick], config);
      size_t plane = static_cast<size_t>(item.target.h) * item.target.w;
      cells += static_cast<double>(plane);
      for (int c = 0; c < model.categories; ++c) {
        const uint8_t* y = item.target.plane(c);
        for (size_t k = 0; k < plane; ++k) positives[c] += y[k];
      }
    }
    for (int c = 0; c < model.categories; ++c) {
      double rate = std::clamp(cells > 0 ? positives[c] / cells : 0.01, 1e-6, 0.5);
      model.theta[static_cast<size_t>(c) * model.params_per_category() +
                  model.feature_spec.features_per_cell()] = std::log(rate / (1.0 - rate));
    }
  }

  // Fixed validation subsample for checkpoint selection.
  std::vector<int> val_probe = val_idx;
  for (size_t k = val_probe.size(); k > 1; --k)
    std::swap(val_probe[k - 1], val_probe[rng.uniform_int(0, static_cast<int64_t>(k) - 1)]);
  if (static_cast<int>(val_probe.size()) > config.val_subsample)
    val_probe.resize(config.val_subsample);

  auto eval_items = [&](const std::vector<int>& idx) {
    std::vector<double> losses(idx.size());
    parallel_for(static_cast<int64_t>(idx.size()), workers, [&](int64_t k) {
      AssembledItem item = assemble_item(dataset, dataset.items[idx[k]], config);
      losses[k] = loss_value(model, item.map, item.target);
    });
    double total = 0.0;
    for (double l : losses) total += l;
    return idx.empty() ? 0.0 : total / idx.size();
  };

  const size_t n_params = model.theta.size();
  std::vector<double> m1(n_params, 0.0), m2(n_params, 0.0);
  TrainResult result;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<double> best_theta = model.theta;
  bool have_best = false;

  std::vector<double> slot_loss(config.batch_size);
  std::vector<std::vector<double>> slot_grad(config.batch_size);
  std::vector<int> batch(config.batch_size);
  for (int iter = 0; iter < config.iterations; ++iter) {
    for (int s = 0; s < config.batch_size; ++s)
      batch[s] = train_idx[rng.uniform_int(0, static_cast<int64_t>(train_idx.size()) - 1)];
    uint64_t iter_seed = Rng::derive(config.seed, 0x61750000ull + iter);

    parallel_for(config.batch_size, workers, [&](int64_t s) {
      AssembledItem item = assemble_item(dataset, dataset.items[batch[s]], config);
      if (config.augment) {
        Rng slot_rng(Rng::derive(iter_seed, static_cast<uint64_t>(s)));
        Augmentation aug =
            sample_augmentation(slot_rng, item.map.h(), item.map.w(), config.egocentric);
        augment_item(item.map, item.target, aug);
      }
      auto [loss, grad] = loss_and_grad(model, item.map, item.target);
      slot_loss[s] = loss;
      slot_grad[s] = std::move(grad);
    });

    double batch_loss = 0.0;
    for (int s = 0; s < config.batch_size; ++s) batch_loss += slot_loss[s];
    batch_loss /= config.batch_size;
    if (!std::isfinite(batch_loss))
      throw std::runtime_error(
          "training diverged: non-finite loss (check learning rate and data)");
    result.train_loss.push_back(batch_loss);

    double progress = static_cast<double>(iter) / config.iterations;
    double lr = config.alpha * std::pow(1.0 - progress, config.poly_power);
    double t = iter + 1;
    double bc1 = 1.0 - std::pow(config.beta1, t);
    double bc2 = 1.0 - std::pow(config.beta2, t);
    for (size_t k = 0; k < n_params; ++k) {
      double g = 0.0;
      for (int s = 0; s < config.batch_size; ++s) g += slot_grad[s][k];
      g /= config.batch_size;
      m1[k] = config.beta1 * m1[k] + (1.0 - config.beta1) * g;
      m2[k] = config.beta2 * m2[k] + (1.0 - config.beta2) * g * g;
      model.theta[k] -= lr * (m1[k] / bc1) / (std::sqrt(m2[k] / bc2) + 1e-8);
    }

    if (!val_probe.empty() &&
        ((iter + 1) % config.val_interval == 0 || iter + 1 == config.iterations)) {
      double val_loss = eval_items(val_probe);
      if (val_loss < best_val) {
        best_val = val_loss;
        best_theta = model.theta;
        have_best = true;
      }
    }
  }
  if (have_best) model.theta = best_theta;
  result.best_val_bce = have_best ? best_val : 0.0;

  // Full validation pass: model BCE plus the best constant-prediction
  // baseline from per-category base rates.
  if (!val_idx.empty()) {
    std::vector<double> losses(val_idx.size());
    std::vector<std::vector<double>> pos(val_idx.size());
    std::vector<double> cells(val_idx.size());
    parallel_for(static_cast<int64_t>(val_idx.size()), workers, [&](int64_t k) {
      AssembledItem item = assemble_item(dataset, dataset.items[val_idx[k]], config);
      losses[k] = loss_value(model, item.map, item.target);
      size_t plane = static_cast<size_t>(item.target.h) * item.target.w;
      cells[k] = static_cast<double>(plane);
      pos[k].assign(model.categories, 0.0);
      for (int c = 0; c < model.categories; ++c) {
        const uint8_t* y = item.target.plane(c);
        for (size_t q = 0; q < plane; ++q) pos[k][c] += y[q];
      }
    });
    double total_loss = 0.0, total_cells = 0.0;
    std::vector<double> total_pos(model.categories, 0.0);
    for (size_t k = 0; k < val_idx.size(); ++k) {
      total_loss += losses[k];
      total_cells += cells[k];
      for (int c = 0; c < model.categories; ++c) total_pos[c] += pos[k][c];
    }
    result.final_val_bce = total_loss / val_idx.size();
    double baseline = 0.0;
    for (int c = 0; c < model.categories; ++c) {
      double p = std::clamp(total_pos[c] / total_cells, 1e-12, 1.0 - 1e-12);
      baseline += -(p * std::log(p) + (1.0 - p) * std::log(1.0 - p));
    }
    result.baseline_val_bce = baseline / model.categories;
  }

  result.model = std::move(model);
  return result;
}

namespace {

/// Nearest-neighbor agent-up crop of a float plane; the same transform as
/// mapping::crop_egocentric.
Grid<float> crop_plane(const Grid<float>& plane, const Pose& pose, double side_m,
                       double resolution) {
  int side = std::max(1, static_cast<int>(std::lround(side_m / resolution)));
  Grid<float> out(side, side, 0.0f);
  double th = pose.theta * 3.14159265358979323846 / 180.0;
  double fx = std::cos(th), fy = std::sin(th);
  double rx = -std::sin(th), ry = std::cos(th);
  double half = 0.5 * side * resolution;
  for (int ci = 0; ci < side; ++ci) {
    for (int cj = 0; cj < side; ++cj) {
      double ahead = half - (ci + 0.5) * resolution;
      double lateral = (cj + 0.5) * resolution - half;
      double sx = pose.x + fx * ahead + rx * lateral;
      double sy = pose.y + fy * ahead + ry * lateral;
      int si = static_cast<int>(std::floor(sy / resolution));
      int sj = static_cast<int>(std::floor(sx / resolution));
      if (si >= 0 && si < plane.h() && sj >= 0 && sj < plane.w())
        out.at(ci, cj) = plane.at(si, sj);
    }
  }
  return out;
}

}  // namespace

std::vector<PredEvalRow> evaluate_prediction_quality(const PredictorModel& model,
                                                     const SnapshotDataset& dataset,
                                                     const std::vector<int>& items,
                                                     int workers) {
  if (workers <= 0) workers = default_workers();
  std::vector<std::vector<PredEvalRow>> per_item(items.size());
  parallel_for(static_cast<int64_t>(items.size()), workers, [&](int64_t k) {
    const SnapshotItem& item = dataset.items[items[k]];
    mapping::SemanticMap m = mapping::load_map(dataset.root / item.input_file);
    mapping::SemanticMap fin = mapping::load_map(dataset.root / item.final_file);
    double res = m.resolution();
    double side = model.crop_side_m;

    mapping::SemanticMap window = mapping::crop_egocentric(m, item.pose, side);
    mapping::SemanticMap fin_window = mapping::crop_egocentric(fin, item.pose, side);
    Grid<uint8_t> explored_window = window.exploration_mask();

    std::vector<Grid<float>> z_windows;
    if (model.egocentric) {
      mapping::FrustumSpec frustum{model.frustum_fov_deg, model.frustum_range_m};
      mapping::SemanticMap ego = mapping::crop_egocentric(m, item.pose, side, frustum);
      z_windows = apply(model, ego);
    } else {
      std::vector<Grid<float>> z_full = apply(model, m);
      for (auto& z : z_full) z_windows.push_back(crop_plane(z, item.pose, side, res));
    }
    for (auto& z : z_windows)
      for (size_t q = 0; q < z.size(); ++q)
        if (explored_window[q]) z[q] = 0.0f;

    for (int c = 1; c <= model.categories; ++c) {
      const uint8_t* target = fin_window.channel(mapping::category_channel(c));
      Grid<uint8_t> g(fin_window.h(), fin_window.w(), 0);
      bool any = false;
      for (size_t q = 0; q < g.size(); ++q) {
        g[q] = (target[q] && !explored_window[q]) ? 1 : 0;
        any = any || g[q];
      }
      if (!any) continue;
      ProbabilityMap z{std::move(z_windows[c - 1]), c, true};
      auto dto = eval_dto(z, g, res);
      auto nll = eval_nll(z, g);
      z_windows[c - 1] = std::move(z.z);
      if (dto && nll) per_item[k].push_back({items[k], c, *dto, *nll});
    }
  });
  std::vector<PredEvalRow> rows;
  for (auto& r : per_item) rows.insert(rows.end(), r.begin(), r.end());
  return rows;
}

void save_model(const PredictorModel& model, const std::filesystem::path& path) {
  BinaryWriter out(path);
  out.magic("PNCK");
  out.u16(1);
  out.u16(static_cast<uint16_t>(model.feature_spec.radii.size()));
  for (int r : model.feature_spec.radii) out.u16(static_cast<uint16_t>(r));
  out.u16(static_cast<uint16_t>(model.categories));
  out.u16(static_cast<uint16_t>(model.feature_spec.channels));
  out.u8(model.egocentric ? 1 : 0);
  out.f32(static_cast<float>(model.crop_side_m));
  out.f32(static_cast<float>(model.frustum_fov_deg));
  out.f32(static_cast<float>(model.frustum_range_m));
  out.u32(static_cast<uint32_t>(model.theta.size()));
  for (double v : model.theta) out.f64(v);
  out.close();
}

PredictorModel load_model(const std::filesystem::path& path) {
  BinaryReader in(path);
  in.expect_magic("PNCK");
  uint16_t version = in.u16();
  if (version != 1) throw std::runtime_error("unsupported checkpoint version");
  PredictorModel model;
  uint16_t n_radii = in.u16();
  model.feature_spec.radii.resize(n_radii);
  for (int k = 0; k < n_radii; ++k) model.feature_spec.radii[k] = in.u16();
  model.categories = in.u16();
  model.feature_spec.channels = in.u16();
  model.egocentric = in.u8() != 0;
  model.crop_side_m = in.f32();
  model.frustum_fov_deg = in.f32();
  model.frustum_range_m = in.f32();
  uint32_t n = in.u32();
  if (n != static_cast<uint32_t>(model.param_count()))
    throw std::runtime_error("checkpoint parameter count mismatch");
  model.theta.resize(n);
  for (uint32_t k = 0; k < n; ++k) model.theta[k] = in.f64();
  return model;
}

}  // namespace peanut::predictor
