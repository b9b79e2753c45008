#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "bpt/nn/parameters.hpp"

namespace bpt::nn {

inline constexpr std::uint16_t kCheckpointVersion = 1;

/// "BPTW" | u16 version | u32 parameter count | u32 descriptor length |
/// descriptor bytes | f64[count] | u32 CRC-32 of everything before it.
/// All integers and reals little-endian.
std::vector<std::uint8_t> encode_checkpoint(const ParameterSet& params);
ParameterSet decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params);
ParameterSet load_checkpoint(const std::filesystem::path& path);

}  // namespace bpt::nn
