#pragma once

#include <vector>

#include "textdestroyer/tensor.hpp"

namespace textdestroyer {

/// Axis-aligned rectangle, half-open: [x0, x1) x [y0, y1).
struct Box {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  long area() const { return static_cast<long>(width()) * height(); }
  bool empty() const { return x1 <= x0 || y1 <= y0; }
  bool intersects(const Box& o) const { return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1; }
  bool operator==(const Box&) const = default;
};

// Half-pixel-centre bilinear resampling (no corner alignment).
Map2D resize_bilinear(const Map2D& src, int height, int width);
Mask resize_nearest(const Mask& src, int height, int width);
// Keys cubic (a = -0.5); the kernel is widened when shrinking so downscales are antialiased.
Image resize_bicubic(const Image& src, int height, int width);

// Output dims are ceil(dim / factor); partial edge blocks use the pixels they have.
Mask max_pool(const Mask& src, int factor);
Map2D area_pool(const Map2D& src, int factor);
Mask upsample_nearest(const Mask& src, int factor);

// Square k x k structuring element centred on each pixel; k must be odd.
Mask dilate(const Mask& src, int k);

// Bounding boxes of 8-connected components holding at least min_area pixels.
// Overlapping boxes are merged so the result is pairwise disjoint.
std::vector<Box> connected_component_boxes(const Mask& mask, long min_area);

Map2D luma(const Image& image);
Image crop(const Image& image, const Box& box);
Mask crop(const Mask& mask, const Box& box);
void paste(Image& dst, const Image& patch, const Box& box);

Map2D mask_to_map(const Mask& mask);

}  // namespace textdestroyer
