#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mbrbf/tensor.hpp"

namespace mbrbf {

// .mbrt layout, all integers and floats little-endian:
//   "MBRT" | u8 version (=1) | u8 rank | rank x u64 dims | n x f64 payload
inline constexpr char kTensorMagic[4] = {'M', 'B', 'R', 'T'};
inline constexpr std::uint8_t kTensorVersion = 1;

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor read_tensor(const std::filesystem::path& path);

/// 64-bit FNV-1a, used for checksums in provenance records.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);
std::uint64_t file_checksum(const std::filesystem::path& path);

}  // namespace mbrbf
