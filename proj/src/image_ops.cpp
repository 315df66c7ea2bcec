#include "textdestroyer/image_ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace textdestroyer {

namespace {

struct Tap {
  int first = 0;
  std::vector<double> weights;
};

double cubic_kernel(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

// Per-output-sample taps along one axis, normalised to sum to one.
std::vector<Tap> cubic_taps(int in_size, int out_size) {
  const double scale = static_cast<double>(in_size) / out_size;
  const double support_scale = std::max(scale, 1.0);
  const double support = 2.0 * support_scale;
  std::vector<Tap> taps(out_size);
  for (int i = 0; i < out_size; ++i) {
    const double center = (i + 0.5) * scale;
    int lo = static_cast<int>(std::floor(center - support));
    int hi = static_cast<int>(std::ceil(center + support));
    lo = std::max(lo, 0);
    hi = std::min(hi, in_size);
    Tap& tap = taps[i];
    tap.first = lo;
    double total = 0.0;
    for (int j = lo; j < hi; ++j) {
      double w = cubic_kernel((j + 0.5 - center) / support_scale);
      tap.weights.push_back(w);
      total += w;
    }
    if (total != 0.0) {
      for (auto& w : tap.weights) w /= total;
    }
  }
  return taps;
}

}  // namespace

Map2D resize_bilinear(const Map2D& src, int height, int width) {
  if (src.empty()) throw ContractViolation("resize_bilinear: empty source");
  if (height <= 0 || width <= 0) throw ContractViolation("resize_bilinear: non-positive target");
  if (src.height() == height && src.width() == width) return src;
  Map2D out(height, width);
  const double sy = static_cast<double>(src.height()) / height;
  const double sx = static_cast<double>(src.width()) / width;
  for (int y = 0; y < height; ++y) {
    double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height() - 1));
    int y0 = static_cast<int>(fy);
    int y1 = std::min(y0 + 1, src.height() - 1);
    double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width() - 1));
      int x0 = static_cast<int>(fx);
      int x1 = std::min(x0 + 1, src.width() - 1);
      double wx = fx - x0;
      double top = src(y0, x0) * (1.0 - wx) + src(y0, x1) * wx;
      double bottom = src(y1, x0) * (1.0 - wx) + src(y1, x1) * wx;
      out(y, x) = top * (1.0 - wy) + bottom * wy;
    }
  }
  return out;
}

Mask resize_nearest(const Mask& src, int height, int width) {
  if (src.empty()) throw ContractViolation("resize_nearest: empty source");
  if (height <= 0 || width <= 0) throw ContractViolation("resize_nearest: non-positive target");
  Mask out(height, width);
  for (int y = 0; y < height; ++y) {
    int sy = std::min(static_cast<int>((y + 0.5) * src.height() / height), src.height() - 1);
    for (int x = 0; x < width; ++x) {
      int sx = std::min(static_cast<int>((x + 0.5) * src.width() / width), src.width() - 1);
      out(y, x) = src(sy, sx);
    }
  }
  return out;
}

Image resize_bicubic(const Image& src, int height, int width) {
  if (src.height <= 0 || src.width <= 0) throw ContractViolation("resize_bicubic: empty source");
  if (height <= 0 || width <= 0) throw ContractViolation("resize_bicubic: non-positive target");
  if (src.height == height && src.width == width) return src;
  const int c = src.channels;
  const auto xtaps = cubic_taps(src.width, width);
  const auto ytaps = cubic_taps(src.height, height);

  Image horizontal(src.height, width, c);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Tap& tap = xtaps[x];
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t k = 0; k < tap.weights.size(); ++k) acc += tap.weights[k] * src.at(y, tap.first + k, ch);
        horizontal.at(y, x, ch) = acc;
      }
    }
  }
  Image out(height, width, c);
  for (int y = 0; y < height; ++y) {
    const Tap& tap = ytaps[y];
    for (int x = 0; x < width; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t k = 0; k < tap.weights.size(); ++k) acc += tap.weights[k] * horizontal.at(tap.first + k, x, ch);
        out.at(y, x, ch) = acc;
      }
    }
  }
  return out;
}

Mask max_pool(const Mask& src, int factor) {
  if (factor <= 0) throw ContractViolation("max_pool: factor must be positive");
  const int h = (src.height() + factor - 1) / factor;
  const int w = (src.width() + factor - 1) / factor;
  Mask out(h, w);
  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < src.width(); ++x) {
      if (src(y, x)) out(y / factor, x / factor) = 1;
    }
  }
  return out;
}

Map2D area_pool(const Map2D& src, int factor) {
  if (factor <= 0) throw ContractViolation("area_pool: factor must be positive");
  if (factor == 1) return src;
  const int h = (src.height() + factor - 1) / factor;
  const int w = (src.width() + factor - 1) / factor;
  Map2D sum(h, w);
  Grid2D<int> count(h, w);
  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < src.width(); ++x) {
      sum(y / factor, x / factor) += src(y, x);
      count(y / factor, x / factor) += 1;
    }
  }
  for (std::size_t i = 0; i < sum.size(); ++i) sum.storage()[i] /= count.storage()[i];
  return sum;
}

Mask upsample_nearest(const Mask& src, int factor) {
  if (factor <= 0) throw ContractViolation("upsample_nearest: factor must be positive");
  Mask out(src.height() * factor, src.width() * factor);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) out(y, x) = src(y / factor, x / factor);
  }
  return out;
}

Mask dilate(const Mask& src, int k) {
  if (k <= 0 || k % 2 == 0) throw ContractViolation("dilate: kernel size must be odd and positive");
  const int r = k / 2;
  if (r == 0) return src;
  // Separable: a square structuring element is a row pass followed by a column pass.
  Mask rows(src.height(), src.width());
  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < src.width(); ++x) {
      if (!src(y, x)) continue;
      for (int dx = std::max(0, x - r); dx <= std::min(src.width() - 1, x + r); ++dx) rows(y, dx) = 1;
    }
  }
  Mask out(src.height(), src.width());
  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < src.width(); ++x) {
      if (!rows(y, x)) continue;
      for (int dy = std::max(0, y - r); dy <= std::min(src.height() - 1, y + r); ++dy) out(dy, x) = 1;
    }
  }
  return out;
}

std::vector<Box> connected_component_boxes(const Mask& mask, long min_area) {
  const int h = mask.height(), w = mask.width();
  Grid2D<int> label(h, w, -1);
  std::vector<Box> boxes;
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask(y, x) || label(y, x) >= 0) continue;
      const int id = static_cast<int>(boxes.size());
      Box box{x, y, x + 1, y + 1};
      long count = 0;
      stack.assign(1, {y, x});
      label(y, x) = id;
      while (!stack.empty()) {
        auto [cy, cx] = stack.back();
        stack.pop_back();
        ++count;
        box.x0 = std::min(box.x0, cx);
        box.y0 = std::min(box.y0, cy);
        box.x1 = std::max(box.x1, cx + 1);
        box.y1 = std::max(box.y1, cy + 1);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            int ny = cy + dy, nx = cx + dx;
            if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
            if (!mask(ny, nx) || label(ny, nx) >= 0) continue;
            label(ny, nx) = id;
            stack.emplace_back(ny, nx);
          }
        }
      }
      boxes.push_back(count >= min_area ? box : Box{});
    }
  }
  std::erase_if(boxes, [](const Box& b) { return b.empty(); });

  bool merged = true;
  while (merged) {
    merged = false;
    for (std::size_t i = 0; i < boxes.size() && !merged; ++i) {
      for (std::size_t j = i + 1; j < boxes.size(); ++j) {
        if (!boxes[i].intersects(boxes[j])) continue;
        boxes[i] = Box{std::min(boxes[i].x0, boxes[j].x0), std::min(boxes[i].y0, boxes[j].y0),
                       std::max(boxes[i].x1, boxes[j].x1), std::max(boxes[i].y1, boxes[j].y1)};
        boxes.erase(boxes.begin() + static_cast<long>(j));
        merged = true;
        break;
      }
    }
  }
  std::sort(boxes.begin(), boxes.end(), [](const Box& a, const Box& b) {
    return a.y0 != b.y0 ? a.y0 < b.y0 : a.x0 < b.x0;
  });
  return boxes;
}

Map2D luma(const Image& image) {
  Map2D out(image.height, image.width);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      if (image.channels >= 3) {
        out(y, x) = 0.299 * image.at(y, x, 0) + 0.587 * image.at(y, x, 1) + 0.114 * image.at(y, x, 2);
      } else {
        out(y, x) = image.at(y, x, 0);
      }
    }
  }
  return out;
}

Image crop(const Image& image, const Box& box) {
  if (box.x0 < 0 || box.y0 < 0 || box.x1 > image.width || box.y1 > image.height || box.empty()) {
    throw ContractViolation("crop: box outside image bounds");
  }
  Image out(box.height(), box.width(), image.channels);
  for (int y = 0; y < box.height(); ++y) {
    for (int x = 0; x < box.width(); ++x) {
      for (int c = 0; c < image.channels; ++c) out.at(y, x, c) = image.at(box.y0 + y, box.x0 + x, c);
    }
  }
  return out;
}

Mask crop(const Mask& mask, const Box& box) {
  if (box.x0 < 0 || box.y0 < 0 || box.x1 > mask.width() || box.y1 > mask.height() || box.empty()) {
    throw ContractViolation("crop: box outside mask bounds");
  }
  Mask out(box.height(), box.width());
  for (int y = 0; y < box.height(); ++y) {
    for (int x = 0; x < box.width(); ++x) out(y, x) = mask(box.y0 + y, box.x0 + x);
  }
  return out;
}

void paste(Image& dst, const Image& patch, const Box& box) {
  if (patch.height != box.height() || patch.width != box.width() || patch.channels != dst.channels) {
    throw ContractViolation("paste: patch does not match box");
  }
  if (box.x0 < 0 || box.y0 < 0 || box.x1 > dst.width || box.y1 > dst.height) {
    throw ContractViolation("paste: box outside image bounds");
  }
  for (int y = 0; y < box.height(); ++y) {
    for (int x = 0; x < box.width(); ++x) {
      for (int c = 0; c < dst.channels; ++c) dst.at(box.y0 + y, box.x0 + x, c) = patch.at(y, x, c);
    }
  }
}

Map2D mask_to_map(const Mask& mask) {
  Map2D out(mask.height(), mask.width());
  for (std::size_t i = 0; i < mask.size(); ++i) out.storage()[i] = mask.storage()[i] ? 1.0 : 0.0;
  return out;
}

}  // namespace textdestroyer
