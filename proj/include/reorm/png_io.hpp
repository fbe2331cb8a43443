#pragma once

#include "reorm/raster.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace reorm {

// PNG codec for the two rasters this project exchanges on disk:
// 8-bit RGB images (color type 2) and single-channel masks (color type 0,
// samples restricted to {0,255}). Alpha, palette, and 16-bit inputs are
// rejected rather than converted; interlaced files are not supported.

std::vector<std::uint8_t> encode_png(const Image& image);
std::vector<std::uint8_t> encode_png(const Mask& mask);

Image decode_image_png(std::span<const std::uint8_t> bytes);
Mask decode_mask_png(std::span<const std::uint8_t> bytes);

Image load_image_png(const std::string& path);
Mask load_mask_png(const std::string& path);
void save_png(const std::string& path, const Image& image);
void save_png(const std::string& path, const Mask& mask);

} // namespace reorm
