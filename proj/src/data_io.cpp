#include "hotspot/data_io.hpp"

#include "hotspot/ops.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace hotspot {

namespace fs = std::filesystem;

void DatasetSplit::validate() const {
  std::set<std::string> seen;
  for (const auto& item : items)
    if (!seen.insert(item.id).second) throw std::invalid_argument("split " + name + ": duplicate id " + item.id);
}

// ---------------------------------------------------------------------------
// Annotations
// ---------------------------------------------------------------------------

std::vector<Detection> parse_annotation_text(const std::string& text, const std::string& source) {
  std::vector<Detection> boxes;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    std::vector<std::string> tok;
    for (std::string t; fields >> t;) tok.push_back(t);
    if (tok.size() != 5)
      throw AnnotationError(source, lineno, "malformed line, expected 5 fields 'class cx cy w h', got " +
                                                std::to_string(tok.size()));
    Detection d;
    double v[4];
    try {
      std::size_t used = 0;
      const long cls = std::stol(tok[0], &used);
      if (used != tok[0].size()) throw std::invalid_argument("class");
      if (cls < 0) throw AnnotationError(source, lineno, "negative class id " + tok[0]);
      d.class_id = static_cast<int>(cls);
      for (int i = 0; i < 4; ++i) {
        v[i] = std::stod(tok[i + 1], &used);
        if (used != tok[i + 1].size() || !std::isfinite(v[i])) throw std::invalid_argument("number");
      }
    } catch (const AnnotationError&) {
      throw;
    } catch (const std::exception&) {
      throw AnnotationError(source, lineno, "malformed line, non-numeric field");
    }
    static constexpr const char* names[4] = {"cx", "cy", "w", "h"};
    for (int i = 0; i < 4; ++i)
      if (v[i] < 0.0 || v[i] > 1.0)
        throw AnnotationError(source, lineno, std::string(names[i]) + " out of range [0,1]: " + tok[i + 1]);
    if (v[2] <= 0.0 || v[3] <= 0.0) throw AnnotationError(source, lineno, "non-positive box width or height");
    d.box = {v[0], v[1], v[2], v[3]};
    d.confidence = 1.0;
    boxes.push_back(d);
  }
  return boxes;
}

std::vector<Detection> parse_annotations(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open annotation file");
  std::ostringstream os;
  os << in.rdbuf();
  return parse_annotation_text(os.str(), path.string());
}

std::string format_annotations(const std::vector<Detection>& boxes) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6);
  for (const auto& d : boxes) os << d.class_id << ' ' << d.box.x << ' ' << d.box.y << ' ' << d.box.w << ' ' << d.box.h << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Preprocessing and augmentation
// ---------------------------------------------------------------------------

namespace {

void require_rgb(const Tensorf& p, const char* op) {
  if (p.rank() != 3 || p.dim(2) != 3)
    throw std::invalid_argument(std::string(op) + ": expected (H,W,3) pixels, got " + shape_string(p.shape()));
}

float sample_clamped(const Tensorf& p, double sx, double sy, Index c) {
  const Index H = p.dim(0), W = p.dim(1);
  sx = std::clamp(sx, 0.0, double(W - 1));
  sy = std::clamp(sy, 0.0, double(H - 1));
  const Index x0 = std::min<Index>(static_cast<Index>(sx), W - 1), y0 = std::min<Index>(static_cast<Index>(sy), H - 1);
  const Index x1 = std::min<Index>(x0 + 1, W - 1), y1 = std::min<Index>(y0 + 1, H - 1);
  const float fx = float(sx - double(x0)), fy = float(sy - double(y0));
  auto at = [&](Index y, Index x) { return p[(y * W + x) * 3 + c]; };
  const float top = at(y0, x0) + fx * (at(y0, x1) - at(y0, x0));
  const float bottom = at(y1, x0) + fx * (at(y1, x1) - at(y1, x0));
  return top + fy * (bottom - top);
}

}  // namespace

Tensorf preprocess(const Tensorf& pixels, Index h, Index w) {
  require_rgb(pixels, "preprocess");
  Tensorf resized = pixels.dim(0) == h && pixels.dim(1) == w
                        ? pixels
                        : resize_bilinear(pixels.reshaped({1, pixels.dim(0), pixels.dim(1), 3}), h, w).reshaped({h, w, 3});
  resized.data() = (resized.data().array() - 0.5f) / 0.5f;
  return resized;
}

Tensorf stack_batch(const std::vector<const Tensorf*>& images) {
  if (images.empty()) throw std::invalid_argument("stack_batch: no images");
  const Shape s = images.front()->shape();
  Tensorf out({Index(images.size()), s[0], s[1], s[2]});
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i]->shape() != s) throw std::invalid_argument("stack_batch: images differ in shape");
    out.data().segment(Index(i) * images[i]->size(), images[i]->size()) = images[i]->data();
  }
  return out;
}

AnnotatedImage augment_flip(const AnnotatedImage& img, bool coin) {
  if (!coin) return img;
  require_rgb(img.pixels, "augment_flip");
  AnnotatedImage out = img;
  const Index H = img.pixels.dim(0), W = img.pixels.dim(1);
  for (Index y = 0; y < H; ++y)
    for (Index x = 0; x < W; ++x)
      for (Index c = 0; c < 3; ++c) out.pixels[(y * W + x) * 3 + c] = img.pixels[(y * W + (W - 1 - x)) * 3 + c];
  for (auto& d : out.boxes) d.box.x = 1.0 - d.box.x;
  return out;
}

AnnotatedImage crop_and_resize(const AnnotatedImage& img, const CropWindow& win, double min_visible) {
  require_rgb(img.pixels, "crop_and_resize");
  if (!(win.sx > 0 && win.sy > 0 && win.x0 >= 0 && win.y0 >= 0 && win.x0 + win.sx <= 1 + 1e-12 &&
        win.y0 + win.sy <= 1 + 1e-12))
    throw std::invalid_argument("crop_and_resize: window outside the image");
  AnnotatedImage out;
  out.id = img.id;
  const Index H = img.pixels.dim(0), W = img.pixels.dim(1);
  out.pixels = Tensorf(img.pixels.shape());
  const bool identity = win.x0 == 0 && win.y0 == 0 && win.sx == 1 && win.sy == 1;
  if (identity) {
    out.pixels = img.pixels;
  } else {
    // Pixel centers map through the same affine relation as the boxes.
    for (Index y = 0; y < H; ++y) {
      const double sy = win.y0 * double(H) + (double(y) + 0.5) * win.sy - 0.5;
      for (Index x = 0; x < W; ++x) {
        const double sx = win.x0 * double(W) + (double(x) + 0.5) * win.sx - 0.5;
        for (Index c = 0; c < 3; ++c) out.pixels[(y * W + x) * 3 + c] = sample_clamped(img.pixels, sx, sy, c);
      }
    }
  }
  if (identity) {
    out.boxes = img.boxes;
    return out;
  }
  for (const auto& d : img.boxes) {
    const double x1 = std::max(d.box.x1(), win.x0), x2 = std::min(d.box.x2(), win.x0 + win.sx);
    const double y1 = std::max(d.box.y1(), win.y0), y2 = std::min(d.box.y2(), win.y0 + win.sy);
    if (x2 <= x1 || y2 <= y1) continue;
    if ((x2 - x1) * (y2 - y1) < min_visible * d.box.area()) continue;
    Detection r = d;
    r.box = Box::from_corners((x1 - win.x0) / win.sx, (y1 - win.y0) / win.sy, (x2 - win.x0) / win.sx,
                              (y2 - win.y0) / win.sy);
    out.boxes.push_back(r);
  }
  return out;
}

AnnotatedImage augment_random_crop(const AnnotatedImage& img, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> scale(0.8, 1.0), unit(0.0, 1.0);
  CropWindow w;
  w.sx = scale(rng);
  w.sy = scale(rng);
  w.x0 = unit(rng) * (1.0 - w.sx);
  w.y0 = unit(rng) * (1.0 - w.sy);
  return crop_and_resize(img, w);
}

// ---------------------------------------------------------------------------
// Robustness transforms
// ---------------------------------------------------------------------------

Tensorf transform_brightness_contrast(const Tensorf& pixels, double brightness_delta, double contrast_factor) {
  if (!(contrast_factor > 0)) throw std::invalid_argument("contrast factor must be positive");
  Tensorf out = pixels;
  // Double precision with a single final rounding; (v - 0.5) * 1 + 0.5 is exact for float v.
  out.data() = ((pixels.data().cast<double>().array() - 0.5) * contrast_factor + 0.5 + brightness_delta)
                   .cwiseMax(0.0)
                   .cwiseMin(1.0)
                   .cast<float>()
                   .matrix();
  return out;
}

Tensorf transform_grayscale(const Tensorf& pixels) {
  require_rgb(pixels, "transform_grayscale");
  Tensorf out = pixels;
  auto rgb = out.matrix();
  const Eigen::ArrayXd r = rgb.col(0).cast<double>().array(), g = rgb.col(1).cast<double>().array(),
                       b = rgb.col(2).cast<double>().array();
  const Eigen::ArrayXf lum = (r * 0.299 + g * 0.587 + b * 0.114).cwiseMax(0.0).cwiseMin(1.0).cast<float>();
  for (Index c = 0; c < 3; ++c) rgb.col(c) = lum.matrix();
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0)) throw std::invalid_argument("gaussian blur: sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) sum += k[static_cast<std::size_t>(i + radius)] = std::exp(-double(i * i) / (2 * sigma * sigma));
  for (double& v : k) v /= sum;
  return k;
}

Tensorf transform_gaussian_blur(const Tensorf& pixels, double sigma) {
  require_rgb(pixels, "transform_gaussian_blur");
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  const Index H = pixels.dim(0), W = pixels.dim(1);
  Tensorf tmp(pixels.shape()), out(pixels.shape());
  for (Index y = 0; y < H; ++y)
    for (Index x = 0; x < W; ++x)
      for (Index c = 0; c < 3; ++c) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) {
          const Index xx = std::clamp<Index>(x + i, 0, W - 1);
          acc += k[static_cast<std::size_t>(i + r)] * pixels[(y * W + xx) * 3 + c];
        }
        tmp[(y * W + x) * 3 + c] = float(acc);
      }
  for (Index y = 0; y < H; ++y)
    for (Index x = 0; x < W; ++x)
      for (Index c = 0; c < 3; ++c) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) {
          const Index yy = std::clamp<Index>(y + i, 0, H - 1);
          acc += k[static_cast<std::size_t>(i + r)] * tmp[(yy * W + x) * 3 + c];
        }
        out[(y * W + x) * 3 + c] = std::clamp(float(acc), 0.0f, 1.0f);
      }
  return out;
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

namespace {

std::size_t bin_of(double v) {
  return static_cast<std::size_t>(std::clamp(static_cast<int>(std::floor(v * kStatsBins)), 0, kStatsBins - 1));
}

}  // namespace

DatasetStats dataset_stats(const DatasetSplit& split) {
  DatasetStats s;
  s.images = split.items.size();
  s.center_hist.assign(kStatsBins, {});
  s.size_hist.assign(kStatsBins, {});
  std::array<BoxMarginal*, 4> m{&s.cx, &s.cy, &s.w, &s.h};
  for (auto* b : m) {
    b->min = 1.0;
    b->max = 0.0;
  }
  for (const auto& item : split.items)
    for (const auto& d : item.boxes) {
      ++s.instances;
      ++s.center_hist[bin_of(d.box.y)][bin_of(d.box.x)];
      ++s.size_hist[bin_of(d.box.h)][bin_of(d.box.w)];
      const std::array<double, 4> v{d.box.x, d.box.y, d.box.w, d.box.h};
      for (int i = 0; i < 4; ++i) {
        m[i]->mean += v[i];
        m[i]->min = std::min(m[i]->min, v[i]);
        m[i]->max = std::max(m[i]->max, v[i]);
      }
    }
  for (auto* b : m) {
    if (s.instances == 0) *b = {};
    else b->mean /= double(s.instances);
  }
  return s;
}

void write_stats_csv(const DatasetStats& stats, std::ostream& os) {
  os << "histogram,bin_x,bin_y,count\n";
  auto dump = [&](const char* name, const auto& hist) {
    for (int y = 0; y < kStatsBins; ++y)
      for (int x = 0; x < kStatsBins; ++x) os << name << ',' << x << ',' << y << ',' << hist[y][x] << '\n';
  };
  dump("center", stats.center_hist);
  dump("size", stats.size_hist);
}

void write_stats_text(const DatasetStats& stats, std::ostream& os) {
  os << "images " << stats.images << "\ninstances " << stats.instances << '\n';
  os << std::fixed << std::setprecision(4);
  auto row = [&](const char* name, const BoxMarginal& b) {
    os << name << " mean " << b.mean << " min " << b.min << " max " << b.max << '\n';
  };
  row("cx", stats.cx);
  row("cy", stats.cy);
  row("w", stats.w);
  row("h", stats.h);
}

// ---------------------------------------------------------------------------
// Dataset layout
// ---------------------------------------------------------------------------

std::vector<std::string> read_manifest(const fs::path& root, const std::string& split) {
  std::ifstream in(root / "manifest.txt");
  if (!in) throw std::runtime_error((root / "manifest.txt").string() + ": cannot open manifest");
  std::vector<std::string> ids;
  std::string s, id;
  while (in >> s >> id)
    if (s == split) ids.push_back(id);
  return ids;
}

void append_manifest(const fs::path& root, const std::string& split, const std::vector<std::string>& ids) {
  std::ofstream out(root / "manifest.txt", std::ios::app);
  if (!out) throw std::runtime_error((root / "manifest.txt").string() + ": cannot write manifest");
  for (const auto& id : ids) out << split << ' ' << id << '\n';
}

void write_item(const fs::path& root, const std::string& split, const AnnotatedImage& item) {
  fs::create_directories(root / "images" / split);
  fs::create_directories(root / "labels" / split);
  save_ppm(root / "images" / split / (item.id + ".ppm"), item.pixels);
  std::ofstream out(root / "labels" / split / (item.id + ".txt"), std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write labels for " + item.id);
  out << format_annotations(item.boxes);
}

DatasetSplit load_split(const fs::path& root, const std::string& split) {
  DatasetSplit ds;
  ds.name = split;
  for (const auto& id : read_manifest(root, split)) {
    AnnotatedImage item;
    item.id = id;
    const fs::path ppm = root / "images" / split / (id + ".ppm");
    const fs::path pgm = root / "images" / split / (id + ".pgm");
    item.pixels = load_image(fs::exists(ppm) ? ppm : pgm);
    const fs::path labels = root / "labels" / split / (id + ".txt");
    if (fs::exists(labels)) item.boxes = parse_annotations(labels);
    ds.items.push_back(std::move(item));
  }
  ds.validate();
  return ds;
}

}  // namespace hotspot
