#pragma once

#include "hotspot/model.hpp"
#include "hotspot/optimizer.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace hotspot {

inline constexpr char kCheckpointMagic[8] = {'H', 'S', 'P', 'T', 'Y', 'O', 'L', 'O'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct LoadedCheckpoint {
  Model<float> model;
  std::optional<AdamState> adam;
};

/// Layout (all integers and floats little-endian):
///   magic[8] "HSPTYOLO", u32 version
///   config: i64 input_h, input_w; i64 widths[4]; i64 strides[4]; i64 se_reduction;
///           i64 aggregation_channels, unified_h, unified_w; i32 num_classes; f64 ranges[3]
///   u32 tensor count, then per tensor:
///           u32 name length, name bytes, u32 rank, u64 extents[rank], f32 values
///   u8 has_optimizer; if 1: u64 step, then m and v tensors in the same
///           per-tensor encoding, named "adam.m.<param>" / "adam.v.<param>"
std::string encode_checkpoint(const Model<float>& model, const AdamState* adam = nullptr);
LoadedCheckpoint decode_checkpoint(const std::string& bytes, const std::string& source = "<memory>");

void save_checkpoint(const std::filesystem::path& path, const Model<float>& model, const AdamState* adam = nullptr);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hotspot
