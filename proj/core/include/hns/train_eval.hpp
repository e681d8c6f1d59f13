#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/optim/optimizer.h>

#include "hns/config.hpp"
#include "hns/data_pipeline.hpp"
#include "hns/losses.hpp"
#include "hns/metrics.hpp"
#include "hns/model.hpp"

namespace hns {

/// Puts libtorch in its deterministic mode (call before building models).
void enable_deterministic_backend();

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct StepRecord {
  int64_t step = 0;
  int64_t epoch = 0;
  LossValues losses;
};

struct TrainOptions {
  std::filesystem::path checkpoint_root;  ///< overrides config.train.checkpoint_dir when set
  std::filesystem::path log_csv;          ///< appended; header written when new
  std::optional<std::filesystem::path> resume_from;
  std::function<void(const StepRecord&)> on_step;
  bool verbose = false;
};

struct TrainResult {
  std::filesystem::path last_checkpoint;
  std::optional<std::filesystem::path> best_checkpoint;
  std::vector<StepRecord> log;
  int64_t steps = 0;
  int64_t epochs_completed = 0;
  std::string param_checksum;
};

/// One optimisation step on a fixed batch; returns the losses before the update.
LossValues train_step(HnsNet& model, torch::optim::Optimizer& optimizer, const Batch& batch, double lambda);

/// Optimises the joint objective over random crops, one per tile per epoch,
/// checkpointing every epoch. Throws DivergenceError on a non-finite loss;
/// the last good checkpoint stays on disk.
TrainResult train(const RunConfig& config, const Dataset& train_set, const Dataset* val_set,
                  const TrainOptions& options = {});

/// CSV header and row for the training log.
std::string loss_log_header(const std::vector<int>& strides);
std::string loss_log_row(const StepRecord& record);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Maps an image [3, H, W] to a road probability map [H, W].
using RoadPredictor = std::function<torch::Tensor(const torch::Tensor& image, int64_t index)>;

struct EvalOptions {
  double threshold = 0.5;
  int tile_size = 256;
  int tile_stride = 0;  ///< 0: whole image
  Averaging averaging = Averaging::Micro;
  std::filesystem::path overlay_dir;  ///< empty: no overlays
  int64_t max_images = 0;             ///< 0: all
};

struct EvalResult {
  MetricReport summary;
  std::vector<std::pair<std::string, MetricReport>> per_image;
  nlohmann::json to_json(Averaging averaging) const;
};

/// Eval-mode, gradient-free prediction on an image of any size: the input is
/// replicate-padded to a multiple of 32 (and tiled when tile_stride > 0).
PredictionBundle predict_full(HnsNet& model, const torch::Tensor& image, int tile_size = 256,
                              int tile_stride = 0);

EvalResult evaluate_predictor(const RoadPredictor& predictor, const Dataset& dataset, const EvalOptions& options);
EvalResult evaluate(HnsNet& model, const Dataset& dataset, const EvalOptions& options);
/// Loads the checkpoint (verifying it against `expected` when given) and evaluates.
EvalResult evaluate_checkpoint(const std::filesystem::path& checkpoint, const Dataset& dataset,
                               const EvalOptions& options, const RunConfig* expected = nullptr);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

struct AblationRow {
  Variant variant = Variant::Full;
  bool ok = false;
  std::string error;
  MetricReport report;
  double final_loss = 0.0;
  int64_t steps = 0;
  int64_t parameters = 0;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  bool partial = false;
};

/// Published F1 (%) per variant on the full Massachusetts protocol; recorded
/// for reference only.
double reference_f1(Variant v);

/// Trains and evaluates each variant under the same data order and seed.
/// Smoke mode runs one step per variant. A failing variant stops the table.
AblationTable ablate(const RunConfig& base, const std::vector<Variant>& variants, const Dataset& train_set,
                     const Dataset& eval_set, bool smoke, const std::filesystem::path& output_dir);

void write_ablation_table(const AblationTable& table, const std::filesystem::path& csv_path,
                          const std::filesystem::path& json_path);

}  // namespace hns
