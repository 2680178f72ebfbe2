#pragma once

#include "hotspot/data_io.hpp"
#include "hotspot/evaluation.hpp"
#include "hotspot/model.hpp"

#include <functional>
#include <string>
#include <vector>

namespace hotspot {

struct InferenceConfig {
  double conf_threshold = 0.25;
  NMSConfig nms;
  Index batch = 16;
};

/// Preprocess, forward, decode and NMS for raw (H, W, 3) images. Results
/// are in input order.
std::vector<std::vector<Detection>> detect(const Model<float>& model, const std::vector<const Tensorf*>& images,
                                           const InferenceConfig& cfg);
std::vector<Detection> detect_one(const Model<float>& model, const Tensorf& pixels, const InferenceConfig& cfg);

EvalReport evaluate_model(const Model<float>& model, const DatasetSplit& split, const InferenceConfig& cfg,
                          double iou_threshold = 0.5, double operating_threshold = 0.25);

/// Inclusive pixel rectangle of a box outline, clamped to the image.
struct PixelRect {
  Index x1, y1, x2, y2;
};
PixelRect outline_rect(const Box& box, Index height, Index width);

/// Outline colour by confidence band: >= 0.75 red, >= 0.5 yellow, else cyan.
std::array<float, 3> band_colour(double confidence);

/// Copy of pixels with a one-pixel outline per detection.
Tensorf annotate(const Tensorf& pixels, const std::vector<Detection>& dets);

struct NamedTransform {
  std::string name;
  std::function<Tensorf(const Tensorf&)> apply;
};

/// suite: brightness-contrast, grayscale, blur or all. The identity control is
/// always first.
std::vector<NamedTransform> robustness_transforms(const std::string& suite);

struct RobustImageRow {
  std::string id;
  double baseline_mean_conf = 0;
  double transformed_mean_conf = 0;
  std::vector<double> deltas;  // per baseline detection: matched conf - baseline conf
  double mean_delta = 0;
};

struct RobustRow {
  std::string transform;
  double map_value = 0;
  double mean_delta = 0;
  bool identical_to_baseline = false;
  std::vector<RobustImageRow> images;
};

std::vector<RobustRow> run_robustness(const Model<float>& model, const DatasetSplit& split,
                                      const std::vector<NamedTransform>& transforms, const InferenceConfig& cfg);
void write_robustness_report(const std::vector<RobustRow>& rows, std::ostream& os);

struct BenchResult {
  int runs = 0;
  double mean_ms = 0;
  double std_ms = 0;
};

/// Wall time of single-image end-to-end inference, after 2 warmup runs.
BenchResult bench(const Model<float>& model, const Tensorf& pixels, int runs, const InferenceConfig& cfg);

/// Per-layer table, totals and the published reference line.
void write_summary(const Model<float>& model, std::ostream& os);
inline constexpr const char* kPublishedReference = "published reference: 36.10M params, 25.53 GFLOPs, 25.22 ms";

}  // namespace hotspot
