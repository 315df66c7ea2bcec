#pragma once

#include <filesystem>

#include "textdestroyer/tensor.hpp"

namespace textdestroyer {

// 8-bit RGB; grey, palette and alpha inputs are converted.
Image read_png(const std::filesystem::path& path);
// Quantises to 8 bits. 1-channel images are written as grey, 3-channel as RGB.
void write_png(const std::filesystem::path& path, const Image& image);

// Grey PNG; any non-zero pixel is text.
Mask read_mask_png(const std::filesystem::path& path);
// 0 = background, 255 = text.
void write_mask_png(const std::filesystem::path& path, const Mask& mask);

}  // namespace textdestroyer
