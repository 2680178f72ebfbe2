#pragma once

#include "hotspot/postprocess.hpp"

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace hotspot {

/// A prediction after matching: which image it came from and whether it
/// matched an unclaimed ground truth.
struct LabeledPrediction {
  std::size_t image = 0;
  int class_id = 0;
  double confidence = 0;
  bool true_positive = false;
};

struct MatchResult {
  std::vector<LabeledPrediction> predictions;  // per image, per class, by descending confidence
  std::map<int, std::size_t> gt_per_class;
  std::size_t false_negatives = 0;
};

/// Greedy matching per image and class: predictions by descending confidence
/// claim the unclaimed gt of highest IoU if that IoU >= threshold.
MatchResult match_detections(const std::vector<std::vector<Detection>>& preds,
                             const std::vector<std::vector<Detection>>& gts, double iou_threshold);

/// All-point interpolated AP. Predictions are ranked by confidence (stable
/// for ties). With no ground truth: 1 if there are no predictions, else 0.
double average_precision(std::vector<LabeledPrediction> predictions, std::size_t total_gt);

/// (recall, precision) after each ranked prediction.
std::vector<std::pair<double, double>> pr_curve(std::vector<LabeledPrediction> predictions, std::size_t total_gt);

/// Arithmetic mean; throws on an empty list.
double mean_average_precision(const std::vector<double>& per_class_ap);

struct EvalCounts {
  std::size_t tp = 0, fp = 0, fn = 0;
};

struct EvalReport {
  std::map<int, double> per_class_ap;
  double map_value = 0;
  std::vector<std::pair<double, double>> pr_points;  // pooled over classes
  EvalCounts counts;                                  // at the operating threshold
  double iou_threshold = 0.5;
  double operating_threshold = 0.25;
};

/// Pools predictions across images per class, then averages over classes
/// 0..num_classes-1.
EvalReport evaluate(const std::vector<std::vector<Detection>>& preds, const std::vector<std::vector<Detection>>& gts,
                    int num_classes, double iou_threshold = 0.5, double operating_threshold = 0.25);

/// "map@0.50 <value> classes <N> tp <..> fp <..> fn <..>"
std::string summary_line(const EvalReport& report);
void write_report(const EvalReport& report, std::ostream& os);

/// Upserts (epoch, mAP) into a two-column text file kept sorted by epoch.
void epoch_curve_append(const std::filesystem::path& path, int epoch, double map_value);
std::vector<std::pair<int, double>> read_epoch_curve(const std::filesystem::path& path);

}  // namespace hotspot
