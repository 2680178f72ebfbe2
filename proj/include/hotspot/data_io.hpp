#pragma once

#include "hotspot/image_io.hpp"
#include "hotspot/postprocess.hpp"

#include <array>
#include <filesystem>
#include <ostream>
#include <random>
#include <string>
#include <vector>

namespace hotspot {

/// Image pixels (H, W, 3) in [0,1] plus ground-truth boxes (confidence 1).
struct AnnotatedImage {
  std::string id;
  Tensorf pixels;
  std::vector<Detection> boxes;
};

struct DatasetSplit {
  std::string name;
  std::vector<AnnotatedImage> items;

  /// Throws on duplicate ids.
  void validate() const;
};

class AnnotationError : public std::runtime_error {
 public:
  AnnotationError(const std::string& source, int line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// One box per line, "class cx cy w h", normalized. Blank lines and lines
/// starting with '#' are skipped.
std::vector<Detection> parse_annotation_text(const std::string& text, const std::string& source = "<memory>");
std::vector<Detection> parse_annotations(const std::filesystem::path& path);
std::string format_annotations(const std::vector<Detection>& boxes);

/// Bilinear resize to (h, w), then (v - 0.5) / 0.5 per channel.
Tensorf preprocess(const Tensorf& pixels, Index h, Index w);

/// Stacks preprocessed (H, W, 3) images into (N, H, W, 3).
Tensorf stack_batch(const std::vector<const Tensorf*>& images);

AnnotatedImage augment_flip(const AnnotatedImage& img, bool coin);

/// Crop window in normalized coordinates: [x0, x0+sx] x [y0, y0+sy].
struct CropWindow {
  double x0 = 0, y0 = 0, sx = 1, sy = 1;
};

/// Crops and resamples back to the original pixel size. Boxes are clipped
/// to the window, remapped, and dropped when less than min_visible of their
/// area survives.
AnnotatedImage crop_and_resize(const AnnotatedImage& img, const CropWindow& window, double min_visible = 0.3);
/// Side scales uniform in [0.8, 1.0], offset uniform over the valid range.
AnnotatedImage augment_random_crop(const AnnotatedImage& img, std::mt19937_64& rng);

/// clamp((v - 0.5) * contrast + 0.5 + brightness, 0, 1).
Tensorf transform_brightness_contrast(const Tensorf& pixels, double brightness_delta, double contrast_factor);
/// 0.299 R + 0.587 G + 0.114 B on all three channels.
Tensorf transform_grayscale(const Tensorf& pixels);
/// Normalized taps exp(-k^2 / 2 sigma^2), k in [-ceil(3 sigma), ceil(3 sigma)].
std::vector<double> gaussian_kernel(double sigma);
/// Separable Gaussian, clamped edges.
Tensorf transform_gaussian_blur(const Tensorf& pixels, double sigma);

inline constexpr int kStatsBins = 32;

struct BoxMarginal {
  double mean = 0, min = 0, max = 0;
};

struct DatasetStats {
  std::size_t images = 0;
  std::size_t instances = 0;
  std::vector<std::array<std::size_t, kStatsBins>> center_hist;  // [y bin][x bin]
  std::vector<std::array<std::size_t, kStatsBins>> size_hist;    // [h bin][w bin]
  BoxMarginal cx, cy, w, h;
};

DatasetStats dataset_stats(const DatasetSplit& split);
/// Header "histogram,bin_x,bin_y,count" then every bin of both histograms.
void write_stats_csv(const DatasetStats& stats, std::ostream& os);
void write_stats_text(const DatasetStats& stats, std::ostream& os);

// Dataset layout:
//   <root>/images/<split>/<id>.ppm   (or .pgm)
//   <root>/labels/<split>/<id>.txt
//   <root>/manifest.txt              "<split> <id>" per line
std::vector<std::string> read_manifest(const std::filesystem::path& root, const std::string& split);
void append_manifest(const std::filesystem::path& root, const std::string& split, const std::vector<std::string>& ids);
void write_item(const std::filesystem::path& root, const std::string& split, const AnnotatedImage& item);
DatasetSplit load_split(const std::filesystem::path& root, const std::string& split);

}  // namespace hotspot
