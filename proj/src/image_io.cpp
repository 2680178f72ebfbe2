#include "hotspot/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace hotspot {

namespace {

class HeaderReader {
 public:
  HeaderReader(const std::string& bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  long next_int(const char* field) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
    if (start == pos_ || pos_ - start > 9)
      throw ImageError(ImageError::Kind::MalformedHeader, source_ + ": malformed header, bad " + std::string(field));
    return std::stol(bytes_.substr(start, pos_ - start));
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t payload_start() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_])))
      throw ImageError(ImageError::Kind::MalformedHeader, source_ + ": malformed header, no separator before raster");
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& bytes_;
  const std::string& source_;
  std::size_t pos_ = 2;
};

unsigned char to_byte(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<unsigned char>(std::lround(c * 255.0f));
}

}  // namespace

Tensorf decode_netpbm(const std::string& bytes, const std::string& source) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '6' && bytes[1] != '5'))
    throw ImageError(ImageError::Kind::MalformedHeader, source + ": malformed header, expected P6 or P5 magic");
  const int channels = bytes[1] == '6' ? 3 : 1;
  HeaderReader reader(bytes, source);
  const long width = reader.next_int("width");
  const long height = reader.next_int("height");
  const long maxval = reader.next_int("maxval");
  if (width < 1 || height < 1)
    throw ImageError(ImageError::Kind::MalformedHeader, source + ": malformed header, zero image extent");
  if (maxval != 255)
    throw ImageError(ImageError::Kind::UnsupportedMaxval,
                     source + ": unsupported maxval " + std::to_string(maxval) + " (only 8-bit, 255, is supported)");
  const std::size_t start = reader.payload_start();
  const std::size_t expected = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * channels;
  const std::size_t actual = bytes.size() >= start ? bytes.size() - start : 0;
  if (actual < expected)
    throw ImageError(ImageError::Kind::TruncatedPayload, source + ": truncated payload, expected " +
                                                             std::to_string(expected) + " bytes, got " +
                                                             std::to_string(actual));
  Tensorf img({height, width, 3});
  const auto* raster = reinterpret_cast<const unsigned char*>(bytes.data() + start);
  const Index pixels = height * width;
  for (Index p = 0; p < pixels; ++p)
    for (int c = 0; c < 3; ++c) img[p * 3 + c] = float(raster[p * channels + (channels == 3 ? c : 0)]) / 255.0f;
  return img;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError(ImageError::Kind::Io, path.string() + ": cannot open");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ImageError(ImageError::Kind::Io, path.string() + ": cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ImageError(ImageError::Kind::Io, path.string() + ": write failed");
}

Tensorf load_image(const std::filesystem::path& path) { return decode_netpbm(read_file(path), path.string()); }

namespace {

std::string encode(const Tensorf& pixels, bool color) {
  if (pixels.rank() != 3 || pixels.dim(2) != 3)
    throw std::invalid_argument("encode: expected (H,W,3) pixels, got " + shape_string(pixels.shape()));
  const Index h = pixels.dim(0), w = pixels.dim(1);
  std::string out = std::string(color ? "P6\n" : "P5\n") + std::to_string(w) + ' ' + std::to_string(h) + "\n255\n";
  const std::size_t header = out.size();
  const int channels = color ? 3 : 1;
  out.resize(header + static_cast<std::size_t>(h * w * channels));
  for (Index p = 0; p < h * w; ++p)
    for (int c = 0; c < channels; ++c) out[header + p * channels + c] = static_cast<char>(to_byte(pixels[p * 3 + c]));
  return out;
}

}  // namespace

std::string encode_ppm(const Tensorf& pixels) { return encode(pixels, true); }
std::string encode_pgm(const Tensorf& pixels) { return encode(pixels, false); }

void save_ppm(const std::filesystem::path& path, const Tensorf& pixels) { write_file(path, encode_ppm(pixels)); }

}  // namespace hotspot
