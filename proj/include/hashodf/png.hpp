#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace hashodf {

/// 8-bit PNG, 1 (gray) or 3 (RGB) interleaved channels, rows top to bottom.
void write_png(const std::filesystem::path& path, int width, int height, int channels, const std::vector<std::uint8_t>& pixels);

}  // namespace hashodf
