#include "hotspot/postprocess.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace hotspot {

double iou(const Box& a, const Box& b) {
  if (!(a.w > 0 && a.h > 0 && b.w > 0 && b.h > 0)) throw std::invalid_argument("iou: boxes need positive width and height");
  const double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

void NMSConfig::validate() const {
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0))
    throw std::invalid_argument("nms: iou_threshold must lie in [0,1]");
}

std::vector<Detection> nms(const std::vector<Detection>& dets, const NMSConfig& cfg) {
  cfg.validate();
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].confidence > dets[b].confidence; });

  std::vector<Detection> kept;
  std::vector<bool> suppressed(order.size(), false);
  for (std::size_t i = 0; i < order.size() && kept.size() < cfg.max_detections; ++i) {
    if (suppressed[i]) continue;
    const Detection& top = dets[order[i]];
    kept.push_back(top);
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      if (suppressed[j]) continue;
      const Detection& other = dets[order[j]];
      if (other.class_id == top.class_id && iou(top.box, other.box) > cfg.iou_threshold) suppressed[j] = true;
    }
  }
  return kept;
}

std::string format_detection(const std::string& image_id, const Detection& det) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d %.4f %.6f %.6f %.6f %.6f", det.class_id, det.confidence, det.box.x, det.box.y,
                det.box.w, det.box.h);
  return image_id + ' ' + buf;
}

}  // namespace hotspot
