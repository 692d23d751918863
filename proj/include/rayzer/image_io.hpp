#pragma once

#include <string>

#include "rayzer/image.hpp"

namespace rayzer {

// 8-bit RGB PNG, fixed encoder settings so regeneration is byte-identical.
// Float values are clamped to [0,1] and quantized with round-to-nearest.
void write_png(const std::string& path, const Image& img);

// Reads 8-bit RGB(A)/gray PNGs; throws std::runtime_error naming the path on
// missing or corrupt files.
Image read_png(const std::string& path);

}  // namespace rayzer
