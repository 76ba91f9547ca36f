#pragma once

#include <filesystem>

#include "pcmar/tensor.hpp"

namespace pcmar {

/// TNSR layout (all integers little-endian):
///   "TNSR" | u32 version = 1 | u32 ndim | ndim x u32 dims | f32 payload (LE)
inline constexpr std::uint32_t kTensorFormatVersion = 1;

void tensor_write(const Tensor& t, const std::filesystem::path& path);
Tensor tensor_read(const std::filesystem::path& path);

/// Binary P5 PGM, maxval 255. v maps to round-half-up(255 * clamp((v-lo)/(hi-lo), 0, 1)).
void pgm_export(const Tensor& t, const std::filesystem::path& path, float lo, float hi);

/// The grey level pgm_export writes for a value; exposed for tests.
std::uint8_t pgm_level(float v, float lo, float hi);

}  // namespace pcmar
