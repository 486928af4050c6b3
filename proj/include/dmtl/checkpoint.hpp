#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dmtl/tensor.hpp"

namespace dmtl {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

inline constexpr char kCheckpointMagic[4] = {'D', 'M', 'T', 'L'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (all integers u32 little-endian, values f64 little-endian):
//   "DMTL" version
//   repeated until EOF: name_len name rank dims[rank] values[prod(dims)]
void write_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors read_checkpoint(const std::filesystem::path& path);

std::string encode_checkpoint(const NamedTensors& tensors);
NamedTensors decode_checkpoint(const std::string& bytes);

}  // namespace dmtl
