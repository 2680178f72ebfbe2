#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace hotspot {

/// Center-form box (x, y, w, h), normalized image coordinates.
struct Box {
  double x = 0, y = 0, w = 0, h = 0;

  double x1() const { return x - 0.5 * w; }
  double y1() const { return y - 0.5 * h; }
  double x2() const { return x + 0.5 * w; }
  double y2() const { return y + 0.5 * h; }
  double area() const { return w * h; }

  static Box from_corners(double x1, double y1, double x2, double y2) {
    return {0.5 * (x1 + x2), 0.5 * (y1 + y2), x2 - x1, y2 - y1};
  }
  friend bool operator==(const Box&, const Box&) = default;
};

struct Detection {
  Box box;
  int class_id = 0;
  double confidence = 0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

/// Intersection over union; rejects boxes with non-positive width or height.
double iou(const Box& a, const Box& b);

struct NMSConfig {
  double iou_threshold = 0.5;
  std::size_t max_detections = 300;

  void validate() const;
};

/// Greedy per-class suppression. Output is ordered by descending confidence,
/// ties by input position.
std::vector<Detection> nms(const std::vector<Detection>& dets, const NMSConfig& cfg = {});

/// "image-id class-id conf x y w h": confidence to 4 decimals, box to 6.
std::string format_detection(const std::string& image_id, const Detection& det);

}  // namespace hotspot
