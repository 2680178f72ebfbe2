#pragma once

#include "hotspot/data_io.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace hotspot {

/// Parameters of a synthetic thermal PV scene. Sizes are normalized to the
/// image side; intensities are in [0,1].
struct SceneSpec {
  std::uint64_t seed = 0;
  Index width = 640;
  Index height = 640;
  int rows = 3;  // PV module grid
  int cols = 4;
  int min_hotspots = 1;
  int max_hotspots = 4;
  double min_size = 0.03;
  double max_size = 0.12;
  double gradient = 0.08;     // ambient ramp across the image
  double noise = 0.02;        // uniform noise amplitude
  double background = 0.12;   // frame and inter-module gaps
  double module_level = 0.35;
  double irradiance = 0.0;    // uniform heat added to the whole scene
  double contrast = 0.45;     // hotspot peak above local background
  double gap = 0.02;          // inter-module gap

  void validate() const;
  /// Lower bound on (center pixel - local background) for every emitted box.
  double hotspot_margin() const { return 0.8 * contrast - noise; }
};

/// "default" or "high-irradiance" (elevated uniform background, weaker hotspots).
SceneSpec scene_preset(const std::string& name);

struct Scene {
  AnnotatedImage image;
  int requested = 0;
  int placed = 0;
  /// Local background (no noise, no blob) at each box center, for self-checks.
  std::vector<double> center_background;
};

Scene generate_scene(const SceneSpec& spec);

/// Per-scene seeds derived from (seed, index); ids "<split>_<index>".
DatasetSplit generate_split_in_memory(const SceneSpec& spec, int count, std::uint64_t seed, const std::string& split);
/// Writes the dataset layout under root and appends to its manifest.
DatasetSplit generate_split(const SceneSpec& spec, int count, std::uint64_t seed, const std::filesystem::path& root,
                            const std::string& split);

}  // namespace hotspot
