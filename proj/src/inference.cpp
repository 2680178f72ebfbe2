#include "hotspot/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace hotspot {

std::vector<std::vector<Detection>> detect(const Model<float>& model, const std::vector<const Tensorf*>& images,
                                           const InferenceConfig& cfg) {
  cfg.nms.validate();
  if (cfg.batch < 1) throw std::invalid_argument("detect: batch must be positive");
  const Index H = model.config.backbone.input_h, W = model.config.backbone.input_w;
  std::vector<std::vector<Detection>> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += std::size_t(cfg.batch)) {
    const std::size_t end = std::min(images.size(), start + std::size_t(cfg.batch));
    std::vector<Tensorf> pre;
    for (std::size_t i = start; i < end; ++i) pre.push_back(preprocess(*images[i], H, W));
    std::vector<const Tensorf*> ptrs;
    for (const auto& t : pre) ptrs.push_back(&t);
    auto grids = model_forward(model, stack_batch(ptrs));
    for (auto& dets : decode(grids, model.heads, cfg.conf_threshold)) out.push_back(nms(dets, cfg.nms));
  }
  return out;
}

std::vector<Detection> detect_one(const Model<float>& model, const Tensorf& pixels, const InferenceConfig& cfg) {
  return detect(model, {&pixels}, cfg).front();
}

EvalReport evaluate_model(const Model<float>& model, const DatasetSplit& split, const InferenceConfig& cfg,
                          double iou_threshold, double operating_threshold) {
  std::vector<const Tensorf*> images;
  std::vector<std::vector<Detection>> gts;
  for (const auto& item : split.items) {
    images.push_back(&item.pixels);
    gts.push_back(item.boxes);
  }
  return evaluate(detect(model, images, cfg), gts, model.config.num_classes, iou_threshold, operating_threshold);
}

PixelRect outline_rect(const Box& box, Index height, Index width) {
  auto px = [](double v, Index extent) {
    return std::clamp<Index>(static_cast<Index>(std::lround(v * double(extent) - 0.5)), 0, extent - 1);
  };
  return {px(box.x1(), width), px(box.y1(), height), px(box.x2(), width), px(box.y2(), height)};
}

std::array<float, 3> band_colour(double confidence) {
  if (confidence >= 0.75) return {1.0f, 0.0f, 0.0f};
  if (confidence >= 0.5) return {1.0f, 1.0f, 0.0f};
  return {0.0f, 1.0f, 1.0f};
}

Tensorf annotate(const Tensorf& pixels, const std::vector<Detection>& dets) {
  if (pixels.rank() != 3 || pixels.dim(2) != 3)
    throw std::invalid_argument("annotate: expected (H, W, 3) pixels, got " + shape_string(pixels.shape()));
  Tensorf out = pixels;
  const Index H = pixels.dim(0), W = pixels.dim(1);
  auto put = [&](Index y, Index x, const std::array<float, 3>& c) {
    float* p = out.raw() + (y * W + x) * 3;
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  };
  for (const auto& d : dets) {
    const auto r = outline_rect(d.box, H, W);
    const auto c = band_colour(d.confidence);
    for (Index x = r.x1; x <= r.x2; ++x) {
      put(r.y1, x, c);
      put(r.y2, x, c);
    }
    for (Index y = r.y1; y <= r.y2; ++y) {
      put(y, r.x1, c);
      put(y, r.x2, c);
    }
  }
  return out;
}

std::vector<NamedTransform> robustness_transforms(const std::string& suite) {
  std::vector<NamedTransform> out{{"identity", [](const Tensorf& p) { return p; }}};
  auto bc = [](double b, double c) {
    return [b, c](const Tensorf& p) { return transform_brightness_contrast(p, b, c); };
  };
  const bool all = suite == "all";
  if (all || suite == "brightness-contrast") {
    out.push_back({"bc-40", bc(-0.40, 0.60)});
    out.push_back({"bc-35", bc(-0.35, 0.65)});
    out.push_back({"brightness+25", bc(0.25, 1.0)});
    out.push_back({"contrast+25", bc(0.0, 1.25)});
  }
  if (all || suite == "grayscale") out.push_back({"grayscale", transform_grayscale});
  if (all || suite == "blur") {
    out.push_back({"blur-1", [](const Tensorf& p) { return transform_gaussian_blur(p, 1.0); }});
    out.push_back({"blur-2", [](const Tensorf& p) { return transform_gaussian_blur(p, 2.0); }});
  }
  if (out.size() == 1)
    throw std::invalid_argument("unknown robustness suite '" + suite + "' (brightness-contrast, grayscale, blur, all)");
  return out;
}

namespace {

double mean_conf(const std::vector<Detection>& dets) {
  if (dets.empty()) return 0.0;
  double s = 0;
  for (const auto& d : dets) s += d.confidence;
  return s / double(dets.size());
}

// Each baseline detection is paired with the best-overlapping transformed
// detection of the same class (IoU >= 0.5); unmatched ones count as 0.
std::vector<double> confidence_deltas(const std::vector<Detection>& base, const std::vector<Detection>& moved) {
  std::vector<double> out;
  for (const auto& b : base) {
    double best_iou = 0.5, conf = 0;
    for (const auto& m : moved) {
      if (m.class_id != b.class_id) continue;
      const double v = iou(b.box, m.box);
      if (v >= best_iou) {
        best_iou = v;
        conf = m.confidence;
      }
    }
    out.push_back(conf - b.confidence);
  }
  return out;
}

}  // namespace

std::vector<RobustRow> run_robustness(const Model<float>& model, const DatasetSplit& split,
                                      const std::vector<NamedTransform>& transforms, const InferenceConfig& cfg) {
  std::vector<const Tensorf*> originals;
  std::vector<std::vector<Detection>> gts;
  for (const auto& item : split.items) {
    originals.push_back(&item.pixels);
    gts.push_back(item.boxes);
  }
  InferenceConfig ranking = cfg;
  ranking.conf_threshold = std::min(cfg.conf_threshold, 0.001);
  const auto baseline = detect(model, originals, cfg);

  std::vector<RobustRow> rows;
  for (const auto& tf : transforms) {
    std::vector<Tensorf> moved;
    for (const auto* p : originals) moved.push_back(tf.apply(*p));
    std::vector<const Tensorf*> ptrs;
    for (const auto& t : moved) ptrs.push_back(&t);
    const auto dets = detect(model, ptrs, cfg);
    RobustRow row;
    row.transform = tf.name;
    row.map_value = evaluate(detect(model, ptrs, ranking), gts, model.config.num_classes).map_value;
    row.identical_to_baseline = dets == baseline;
    double total = 0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < split.items.size(); ++i) {
      RobustImageRow ir;
      ir.id = split.items[i].id;
      ir.baseline_mean_conf = mean_conf(baseline[i]);
      ir.transformed_mean_conf = mean_conf(dets[i]);
      ir.deltas = confidence_deltas(baseline[i], dets[i]);
      for (double d : ir.deltas) ir.mean_delta += d;
      total += ir.mean_delta;
      count += ir.deltas.size();
      if (!ir.deltas.empty()) ir.mean_delta /= double(ir.deltas.size());
      row.images.push_back(std::move(ir));
    }
    row.mean_delta = count ? total / double(count) : 0.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_robustness_report(const std::vector<RobustRow>& rows, std::ostream& os) {
  char buf[256];
  os << "transform map mean_conf_delta identical\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s %.4f %+.4f %s\n", r.transform.c_str(), r.map_value, r.mean_delta,
                  r.identical_to_baseline ? "yes" : "no");
    os << buf;
  }
  os << "\nimage transform baseline_conf transformed_conf mean_delta\n";
  for (const auto& r : rows)
    for (const auto& ir : r.images) {
      std::snprintf(buf, sizeof buf, "%s %s %.4f %.4f %+.4f\n", ir.id.c_str(), r.transform.c_str(),
                    ir.baseline_mean_conf, ir.transformed_mean_conf, ir.mean_delta);
      os << buf;
    }
}

BenchResult bench(const Model<float>& model, const Tensorf& pixels, int runs, const InferenceConfig& cfg) {
  if (runs < 3) throw std::invalid_argument("bench: need at least 3 timed runs, got " + std::to_string(runs));
  for (int i = 0; i < 2; ++i) detect_one(model, pixels, cfg);
  std::vector<double> ms;
  for (int i = 0; i < runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    detect_one(model, pixels, cfg);
    const auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  BenchResult r;
  r.runs = runs;
  r.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / double(runs);
  double ss = 0;
  for (double v : ms) ss += (v - r.mean_ms) * (v - r.mean_ms);
  r.std_ms = std::sqrt(ss / double(runs - 1));
  return r;
}

void write_summary(const Model<float>& model, std::ostream& os) {
  const auto rows = model_summary(model);
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-32s %-20s %12s %16s\n", "layer", "output", "params", "flops");
  os << buf;
  double flops = 0;
  Index params = 0;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-32s %-20s %12lld %16.0f\n", r.name.c_str(), shape_string(r.output).c_str(),
                  static_cast<long long>(r.parameters), r.flops);
    os << buf;
    flops += r.flops;
    params += r.parameters;
  }
  std::snprintf(buf, sizeof buf, "total: %.2fM params (%lld), %.2f GFLOPs\n", double(params) / 1e6,
                static_cast<long long>(params), flops / 1e9);
  os << buf << kPublishedReference << "\n";
}

}  // namespace hotspot
