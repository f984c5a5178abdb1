#pragma once

#include <filesystem>

#include "rps/image.hpp"

namespace rps::io {

/// Binary portable graymap (P5). 8-bit when maxval < 256, otherwise 16-bit
/// big-endian. Values are returned divided by maxval.
Image read_pgm(const std::filesystem::path& path);

/// Writes clamp_unit(img) quantised to the requested bit depth (8 or 16).
void write_pgm(const Image& img, const std::filesystem::path& path, int bit_depth = 16);

/// Raw float64 image: two little-endian uint32 (rows, cols) followed by
/// rows*cols little-endian doubles in row-major order.
Image read_raw(const std::filesystem::path& path);
void write_raw(const Image& img, const std::filesystem::path& path);

/// Reads any supported image, dispatching on the extension (.pgm or .raw).
Image read_image(const std::filesystem::path& path);

}  // namespace rps::io
