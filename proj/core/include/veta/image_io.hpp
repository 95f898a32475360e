#pragma once

#include <cstdint>
#include <string>

#include "veta/types.hpp"

namespace veta {

/// Encoding of [0, 1] into 16-bit codes: q = min(65535, ⌊v·65536⌋), decoded
/// as (q + ½)/65536. Every value in [0, 1] round-trips within 2⁻¹⁷.
std::uint16_t encode_unit16(double v);
double decode_unit16(std::uint16_t q);

/// Reads a 16-bit single-channel PNG. Any other bit depth or channel layout
/// throws UnsupportedFormat; a missing file throws MissingFile.
Image read_image(const std::string& path);

/// Writes a 16-bit grayscale PNG; values are clamped to [0, 1] first.
void write_image(const std::string& path, const Image& image);

}  // namespace veta
