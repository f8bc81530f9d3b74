#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "peanut/grid.hpp"
#include "peanut/mapping.hpp"

namespace peanut::predictor {

inline constexpr double kLogClampEps = 1e-7;

/// Multi-scale box pooling applied to every input channel; radii in cells.
struct FeatureSpec {
  std::vector<int> radii = {1, 4, 16, 48};
  int channels = mapping::kNumChannels;

  int features_per_cell() const { return channels * static_cast<int>(radii.size()); }
  bool operator==(const FeatureSpec&) const = default;
};

/// Per-cell logistic model over pooled features: one weight vector plus bias
/// per target category. theta layout: category-major, features then bias.
struct PredictorModel {
  FeatureSpec feature_spec;
  int categories = world::kNumTargetCategories;
  std::vector<double> theta;
  // Metadata describing how inputs are presented to the model.
  bool egocentric = false;
  double crop_side_m = 6.0;
  double frustum_fov_deg = 79.0;
  double frustum_range_m = 5.0;

  int params_per_category() const { return feature_spec.features_per_cell() + 1; }
  int param_count() const { return categories * params_per_category(); }
  double weight(int category, int feature) const {
    return theta[static_cast<size_t>(category) * params_per_category() + feature];
  }
  double bias(int category) const {
    return theta[static_cast<size_t>(category) * params_per_category() +
                 feature_spec.features_per_cell()];
  }

  static PredictorModel zeros(FeatureSpec spec, int categories = world::kNumTargetCategories);
};

/// C x H x W binary training target.
struct TrainingTarget {
  int categories = 0;
  int h = 0, w = 0;
  std::vector<uint8_t> y;  // category-major planes

  uint8_t at(int c, int i, int j) const {
    return y[(static_cast<size_t>(c) * h + i) * w + j];
  }
  uint8_t* plane(int c) { return y.data() + static_cast<size_t>(c) * h * w; }
  const uint8_t* plane(int c) const { return y.data() + static_cast<size_t>(c) * h * w; }
};

/// y = (1 - e) * M over the C target channels of the final map.
TrainingTarget make_target(const mapping::SemanticMap& final_map, const Grid<uint8_t>& explored);

struct ProbabilityMap {
  Grid<float> z;
  int target_category = 0;
  bool masked = false;
};

/// Dense per-category probabilities over the whole map.
std::vector<Grid<float>> apply(const PredictorModel& model, const mapping::SemanticMap& map);

/// Single-category fast path used on the navigation loop.
Grid<float> apply_category(const PredictorModel& model, const mapping::SemanticMap& map,
                           int category);

/// Probability map for c_target with explored cells zeroed.
ProbabilityMap infer(const PredictorModel& model, const mapping::SemanticMap& map,
                     int target_category, const Grid<uint8_t>& explored);

/// Mean binary cross-entropy over C x H x W plus the exact gradient in theta.
std::pair<double, std::vector<double>> loss_and_grad(const PredictorModel& model,
                                                     const mapping::SemanticMap& map,
                                                     const TrainingTarget& target);

/// Loss only (used by finite-difference checks and validation).
double loss_value(const PredictorModel& model, const mapping::SemanticMap& map,
                  const TrainingTarget& target);

/// Euclidean meters from the argmax of z to the nearest target cell;
/// nullopt when the target mask is empty (item excluded).
std::optional<double> eval_dto(const ProbabilityMap& z, const Grid<uint8_t>& target_mask,
                               double resolution);

/// Mean negative log-likelihood of target cells under sum-normalized z;
/// nullopt when the mask is empty. Throws "degenerate prediction" if z sums
/// to zero.
std::optional<double> eval_nll(const ProbabilityMap& z, const Grid<uint8_t>& target_mask);

struct SnapshotItem {
  std::string input_file;
  std::string final_file;
  int step = 0;
  uint64_t scene_seed = 0;
  int spawn = 0;
  Pose pose;          // agent pose at the snapshot step
  double coverage = 0.0;
};

struct SnapshotDataset {
  std::filesystem::path root;
  std::vector<SnapshotItem> items;

  /// Split by scene seed: the last `val_fraction` of the sorted unique seeds
  /// form the validation set, so validation scenes are never trained on.
  std::pair<std::vector<int>, std::vector<int>> split_by_scene(double val_fraction) const;
};

SnapshotDataset load_dataset(const std::filesystem::path& dir);

struct TrainConfig {
  int iterations = 5000;
  int batch_size = 8;
  double alpha = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double poly_power = 0.9;
  double val_fraction = 0.2;
  int val_interval = 250;
  int val_subsample = 192;
  uint64_t seed = 1;
  bool augment = true;
  bool egocentric = false;
  double crop_side_m = 6.0;
  double frustum_fov_deg = 79.0;
  double frustum_range_m = 5.0;
  FeatureSpec feature_spec;
  int workers = 0;  // 0 = default_workers()
};

struct TrainResult {
  PredictorModel model;
  double best_val_bce = 0.0;
  double final_val_bce = 0.0;
  double baseline_val_bce = 0.0;  // best constant prediction per category
  std::vector<double> train_loss;  // per-iteration batch loss
};

struct PredEvalRow {
  int item_index = 0;
  int category = 0;
  double dto_m = 0.0;
  double nll = 0.0;
};

/// Window-restricted DTO/NLL: metrics are computed inside the agent-up crop
/// window at the snapshot pose, over the unexplored ground-truth target cells
/// there, so crop-input and full-map-input models are scored on a shared
/// support. Full-map models are evaluated by cropping their dense prediction
/// to the window. Categories without unexplored target cells in the window
/// are skipped.
std::vector<PredEvalRow> evaluate_prediction_quality(const PredictorModel& model,
                                                     const SnapshotDataset& dataset,
                                                     const std::vector<int>& items,
                                                     int workers = 0);

/// Adam with polynomial learning-rate decay; deterministic for a fixed seed
/// and any worker count. Throws on non-finite loss.
TrainResult train(const SnapshotDataset& dataset, const TrainConfig& config);

void save_model(const PredictorModel& model, const std::filesystem::path& path);
PredictorModel load_model(const std::filesystem::path& path);

}  // namespace peanut::predictor
