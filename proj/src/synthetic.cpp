#include "hotspot/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

namespace hotspot {

void SceneSpec::validate() const {
  if (width < 8 || height < 8) throw std::invalid_argument("scene: image must be at least 8x8");
  if (rows < 1 || cols < 1) throw std::invalid_argument("scene: module grid must be at least 1x1");
  if (min_hotspots < 0 || max_hotspots < min_hotspots) throw std::invalid_argument("scene: bad hotspot count range");
  if (!(min_size > 0 && min_size <= max_size && max_size <= 0.3))
    throw std::invalid_argument("scene: hotspot sizes must lie in (0, 0.3]");
  if (noise < 0 || gradient < 0 || contrast <= 0) throw std::invalid_argument("scene: negative noise/gradient or no contrast");
  if (module_level + irradiance + gradient + contrast + noise > 1.0 || background + irradiance < 0)
    throw std::invalid_argument("scene: intensities exceed [0,1]");
}

SceneSpec scene_preset(const std::string& name) {
  SceneSpec s;
  if (name == "default") return s;
  if (name == "high-irradiance") {
    s.irradiance = 0.25;
    s.contrast = 0.25;
    return s;
  }
  throw std::invalid_argument("unknown scene preset '" + name + "' (default, high-irradiance)");
}

namespace {

struct Rect {
  double x1, y1, x2, y2;
};

std::vector<Rect> module_layout(const SceneSpec& s) {
  const double margin = 0.03;
  const double mw = (1.0 - 2 * margin - (s.cols - 1) * s.gap) / s.cols;
  const double mh = (1.0 - 2 * margin - (s.rows - 1) * s.gap) / s.rows;
  std::vector<Rect> out;
  for (int r = 0; r < s.rows; ++r)
    for (int c = 0; c < s.cols; ++c) {
      const double x1 = margin + c * (mw + s.gap), y1 = margin + r * (mh + s.gap);
      out.push_back({x1, y1, x1 + mw, y1 + mh});
    }
  return out;
}

bool overlaps(const Box& a, const Box& b) {
  return a.x1() < b.x2() && b.x1() < a.x2() && a.y1() < b.y2() && b.y1() < a.y2();
}

}  // namespace

Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Index H = spec.height, W = spec.width;
  const auto modules = module_layout(spec);

  auto inside_module = [&](double x, double y) {
    return std::any_of(modules.begin(), modules.end(),
                       [&](const Rect& m) { return x >= m.x1 && x < m.x2 && y >= m.y1 && y < m.y2; });
  };
  auto base_level = [&](double x, double y) {
    const double level = inside_module(x, y) ? spec.module_level : spec.background;
    return level + spec.irradiance + spec.gradient * 0.5 * (x + y);
  };

  Scene scene;
  scene.requested = spec.min_hotspots + static_cast<int>(unit(rng) * (spec.max_hotspots - spec.min_hotspots + 1));
  scene.requested = std::min(scene.requested, spec.max_hotspots);
  std::vector<Box> blobs;
  for (int h = 0; h < scene.requested; ++h) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      const Rect& m = modules[static_cast<std::size_t>(unit(rng) * double(modules.size())) % modules.size()];
      const double bw = spec.min_size + unit(rng) * (spec.max_size - spec.min_size);
      const double bh = spec.min_size + unit(rng) * (spec.max_size - spec.min_size);
      if (bw > m.x2 - m.x1 || bh > m.y2 - m.y1) continue;
      const double cx = m.x1 + bw / 2 + unit(rng) * (m.x2 - m.x1 - bw);
      const double cy = m.y1 + bh / 2 + unit(rng) * (m.y2 - m.y1 - bh);
      const Box b{cx, cy, bw, bh};
      if (std::any_of(blobs.begin(), blobs.end(), [&](const Box& o) { return overlaps(o, b); })) continue;
      blobs.push_back(b);
      break;
    }
  }
  scene.placed = static_cast<int>(blobs.size());

  Tensorf& px = scene.image.pixels = Tensorf({H, W, 3});
  std::uniform_real_distribution<double> noise(-spec.noise, spec.noise);
  for (Index y = 0; y < H; ++y)
    for (Index x = 0; x < W; ++x) {
      const double nx = (double(x) + 0.5) / double(W), ny = (double(y) + 0.5) / double(H);
      double v = base_level(nx, ny);
      for (const Box& b : blobs) {
        const double dx = (nx - b.x) / (0.5 * b.w), dy = (ny - b.y) / (0.5 * b.h);
        const double r2 = dx * dx + dy * dy;
        if (r2 <= 1.0) v += spec.contrast * std::exp(-2.0 * r2);
      }
      v += noise(rng);
      const float f = static_cast<float>(std::clamp(v, 0.0, 1.0));
      for (Index c = 0; c < 3; ++c) px[(y * W + x) * 3 + c] = f;
    }

  char id[32];
  std::snprintf(id, sizeof id, "scene_%016llx", static_cast<unsigned long long>(spec.seed));
  scene.image.id = id;
  for (const Box& b : blobs) {
    scene.image.boxes.push_back({b, 0, 1.0});
    scene.center_background.push_back(base_level(b.x, b.y));
  }
  return scene;
}

DatasetSplit generate_split_in_memory(const SceneSpec& spec, int count, std::uint64_t seed, const std::string& split) {
  if (count < 1) throw std::invalid_argument("generate_split: count must be >= 1");
  DatasetSplit ds;
  ds.name = split;
  for (int i = 0; i < count; ++i) {
    SceneSpec s = spec;
    s.seed = seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(i) + 1;
    Scene scene = generate_scene(s);
    char id[64];
    std::snprintf(id, sizeof id, "%s_%04d", split.c_str(), i);
    scene.image.id = id;
    ds.items.push_back(std::move(scene.image));
  }
  return ds;
}

DatasetSplit generate_split(const SceneSpec& spec, int count, std::uint64_t seed, const std::filesystem::path& root,
                            const std::string& split) {
  DatasetSplit ds = generate_split_in_memory(spec, count, seed, split);
  std::filesystem::create_directories(root);
  std::vector<std::string> ids;
  for (const auto& item : ds.items) {
    write_item(root, split, item);
    ids.push_back(item.id);
  }
  append_manifest(root, split, ids);
  return ds;
}

}  // namespace hotspot
