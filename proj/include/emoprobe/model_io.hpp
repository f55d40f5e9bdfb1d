#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "emoprobe/dataset.hpp"
#include "emoprobe/probing_model.hpp"

namespace emoprobe {

/// A trained network together with the label names its output classes map to.
struct ProbingModel {
  ProbingNetwork network;
  LabelSpace labels;
};

inline constexpr std::uint32_t kPrb1Version = 1;

/// PRB1 layout (little-endian): "PRB1", u32 version, config, u32 label count,
/// labels as (u16 length, bytes), head weights layer-major/head-major/row-major
/// as f32, output weight row-major, output bias, u32 CRC-32 trailer.
std::vector<std::uint8_t> encode_prb1(const ProbingModel& model);
ProbingModel decode_prb1(std::span<const std::uint8_t> bytes);

void save_model(const ProbingModel& model, const std::filesystem::path& path);
ProbingModel load_model(const std::filesystem::path& path);

}  // namespace emoprobe
