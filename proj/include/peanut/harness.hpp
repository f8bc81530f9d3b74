#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "peanut/planning.hpp"
#include "peanut/predictor.hpp"
#include "peanut/scene.hpp"
#include "peanut/world.hpp"

namespace peanut::harness {

struct AblationFlags {
  bool use_prediction = true;
  bool use_distance_weighting = true;
  bool gt_segmentation = false;
};

struct RunConfig {
  std::string scene_preset = "default";
  world::GenerationParams scene = world::preset_params("default");
  world::SensorParams sensor;
  std::string predictor_checkpoint;
  double lambda_m = 5.0;
  AblationFlags flags;
  int episodes = 500;
  int eval_scenes = 20;
  int step_limit = 500;
  double success_radius_m = 1.0;
  double map_margin_m = 1.0;
  uint64_t seed = 7;
  int workers = 0;  // 0 = PEANUT_WORKERS env or hardware concurrency
  bool emit_traces = false;
};

RunConfig default_config();
/// Strict parse: unknown keys are config errors. gt_segmentation forces the
/// sensor noise to zero and rejects configs that set both.
RunConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const RunConfig& config);
uint64_t config_fingerprint(const RunConfig& config);

enum class FailureReason { None, Timeout, FalseStop, Stuck };
const char* failure_reason_name(FailureReason r);

struct EpisodeResult {
  world::EpisodeSpec spec;
  bool success = false;
  double agent_path_length = 0.0;
  double oracle_path_length = 0.0;
  int steps = 0;
  FailureReason failure = FailureReason::None;
  int predictor_calls = 0;
  std::vector<Pose> trace;        // filled only when emit_traces is set
  std::vector<Cell> goal_trace;
};

struct BenchmarkReport {
  std::string label;
  std::vector<EpisodeResult> rows;  // sorted by episode id
  double success = 0.0;
  double spl = 0.0;
  uint64_t seed = 0;
  uint64_t fingerprint = 0;
  int64_t predictor_calls = 0;
};

/// Thread-safe cache of generated scenes plus derived navigation data
/// (navigable mask, per-category judgeable-success cells).
class SceneCache {
 public:
  explicit SceneCache(const world::GenerationParams& params) : params_(params) {}

  struct Bundle {
    world::GroundTruthScene scene;
    Grid<uint8_t> navigable;
    std::map<int, Grid<uint8_t>> success_cells;
    std::mutex mutex;
  };

  std::shared_ptr<Bundle> get(uint64_t scene_seed);
  /// Cells from which judge() would succeed for this category, restricted to
  /// navigable cells.
  const Grid<uint8_t>& success_mask(Bundle& bundle, int category, double success_radius_m);

 private:
  world::GenerationParams params_;
  std::map<uint64_t, std::shared_ptr<Bundle>> cache_;
  std::mutex mutex_;
};

/// Deterministic paired episode set over held-out scenes.
std::vector<world::EpisodeSpec> sample_episodes(const RunConfig& config, SceneCache& cache);
void save_episodes_jsonl(const std::vector<world::EpisodeSpec>& episodes,
                         const std::filesystem::path& path);
std::vector<world::EpisodeSpec> load_episodes_jsonl(const std::filesystem::path& path);

EpisodeResult run_episode(const RunConfig& config, const world::EpisodeSpec& spec,
                          const predictor::PredictorModel* model, SceneCache& cache);

BenchmarkReport run_benchmark(const RunConfig& config, const std::string& label,
                              const std::vector<world::EpisodeSpec>& episodes,
                              const predictor::PredictorModel* model, SceneCache& cache);

double compute_spl(const std::vector<EpisodeResult>& results);

/// The four ablation rows evaluated on identical episodes:
/// pred+dw, pred-only, frontier, pred+dw+gt-seg.
std::vector<BenchmarkReport> run_ablation_grid(const RunConfig& config,
                                               const std::vector<world::EpisodeSpec>& episodes,
                                               const predictor::PredictorModel* model,
                                               SceneCache& cache);

/// Per-episode CSV, aggregate JSON, and an SVG bar chart; one set per report
/// plus a comparison CSV/SVG when several reports are given.
void emit_report(const BenchmarkReport& report, const std::filesystem::path& dir);
void emit_comparison(const std::vector<BenchmarkReport>& reports,
                     const std::filesystem::path& dir);
std::string report_csv(const BenchmarkReport& report);

}  // namespace peanut::harness
