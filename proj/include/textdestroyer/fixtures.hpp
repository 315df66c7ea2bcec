#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "textdestroyer/image_ops.hpp"

namespace textdestroyer {

struct GlyphFixture {
  Image image;
  Mask truth;  // glyph pixels
  std::vector<std::string> lines;
  std::vector<Box> line_boxes;
};

/// Dark block-letter text (one or two lines, 5x7 font at scale 2 or 3) on a light,
/// mildly textured background. Fully determined by the seed.
GlyphFixture make_glyph_fixture(std::uint64_t seed, int height = 96, int width = 96);

/// The same background family without any text.
Image make_blank_fixture(std::uint64_t seed, int height = 96, int width = 96);

// Pixels set by one glyph of the 5x7 font (unknown characters draw nothing).
std::vector<std::string> glyph_rows(char letter);

}  // namespace textdestroyer
