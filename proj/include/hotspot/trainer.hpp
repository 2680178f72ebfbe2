#pragma once

#include "hotspot/checkpoint.hpp"
#include "hotspot/data_io.hpp"
#include "hotspot/evaluation.hpp"
#include "hotspot/inference.hpp"
#include "hotspot/optimizer.hpp"

#include <filesystem>
#include <ostream>
#include <stdexcept>

namespace hotspot {

struct TrainConfig {
  double lr0 = 0.001;
  double lr_min = 0.0;
  int batch_size = 16;
  int epochs = 200;
  AdamConfig adam;
  LossWeights loss;
  std::uint64_t seed = 0;
  int eval_every = 1;
  bool flip = true;
  bool crop = true;
  double eval_conf = 0.001;  // detections kept for AP ranking
  double nms_iou = 0.5;
  std::filesystem::path out_dir;  // empty: no files written

  void validate() const;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  int epochs_run = 0;
  std::uint64_t steps = 0;
  std::uint64_t skipped_steps = 0;
  std::vector<double> step_losses;
  std::vector<std::pair<int, double>> curve;
  EvalReport last_report;
  double best_map = -1;
};

/// One optimizer step on a preprocessed (N, H, W, 3) batch. Returns the loss
/// measured before the update.
LossBreakdown train_step(Model<float>& model, AdamState& state, const Tensorf& batch,
                         const std::vector<std::vector<Detection>>& gts, double lr, const TrainConfig& cfg,
                         bool* applied = nullptr);

/// Seeded shuffle, optional flip/crop, Adam under a cosine schedule. Every
/// eval_every epochs (and at the last) the eval split is scored and the
/// epoch curve, latest and best checkpoints are written under out_dir.
TrainResult train(Model<float>& model, const DatasetSplit& train_split, const DatasetSplit& eval_split,
                  const TrainConfig& cfg, std::ostream* log = nullptr);

}  // namespace hotspot
