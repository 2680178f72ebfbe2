#pragma once

#include "hotspot/tensor.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>

namespace hotspot {

class ImageError : public std::runtime_error {
 public:
  enum class Kind { Io, MalformedHeader, UnsupportedMaxval, TruncatedPayload };
  ImageError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Decodes binary P6 / P5 with maxval 255 into an (H, W, 3) tensor of
/// values byte/255. Grayscale is replicated to three channels.
Tensorf decode_netpbm(const std::string& bytes, const std::string& source = "<memory>");
Tensorf load_image(const std::filesystem::path& path);

/// Canonical "P6\n<w> <h>\n255\n" encoding; values are clamped to [0,1] and
/// rounded to the nearest byte.
std::string encode_ppm(const Tensorf& pixels);
/// P5 from channel 0.
std::string encode_pgm(const Tensorf& pixels);
void save_ppm(const std::filesystem::path& path, const Tensorf& pixels);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace hotspot
