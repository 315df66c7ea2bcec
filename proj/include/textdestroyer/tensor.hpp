#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "textdestroyer/errors.hpp"

namespace textdestroyer {

struct Shape3 {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  std::size_t size() const { return plane() * channels; }
  bool operator==(const Shape3&) const = default;
  std::string str() const;
};

enum class SpaceTag : std::uint8_t { kLatent, kImage };

/// Dense (channels x height x width) array in planar layout.
///
/// The shape is fixed at construction; every arithmetic helper in the
/// library produces a new tensor of the same shape.
class LatentTensor {
 public:
  LatentTensor() = default;
  explicit LatentTensor(Shape3 shape, SpaceTag tag = SpaceTag::kLatent);
  LatentTensor(Shape3 shape, std::vector<double> data, SpaceTag tag = SpaceTag::kLatent);

  const Shape3& shape() const { return shape_; }
  SpaceTag space() const { return tag_; }
  std::size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  double& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  double at(int c, int y, int x) const { return data_[index(c, y, x)]; }

  std::span<double> channel(int c) { return std::span<double>(data_).subspan(c * shape_.plane(), shape_.plane()); }
  std::span<const double> channel(int c) const {
    return std::span<const double>(data_).subspan(c * shape_.plane(), shape_.plane());
  }

  bool all_finite() const;
  bool operator==(const LatentTensor& other) const { return shape_ == other.shape_ && data_ == other.data_; }

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * shape_.height + y) * shape_.width + x;
  }

  Shape3 shape_;
  std::vector<double> data_;
  SpaceTag tag_ = SpaceTag::kLatent;
};

void require_same_shape(const LatentTensor& a, const LatentTensor& b, const char* what);

/// Row-major 2-D grid. Used for attention maps (double) and binary masks (uint8).
template <typename T>
class Grid2D {
 public:
  Grid2D() = default;
  Grid2D(int height, int width, T fill = T{})
      : height_(height), width_(width), data_(static_cast<std::size_t>(height) * width, fill) {
    if (height < 0 || width < 0) throw ContractViolation("negative grid dimensions");
  }
  Grid2D(int height, int width, std::vector<T> data) : height_(height), width_(width), data_(std::move(data)) {
    if (data_.size() != static_cast<std::size_t>(height) * width) throw ContractViolation("grid data size mismatch");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  const T& operator()(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  bool same_size(const Grid2D& other) const { return height_ == other.height_ && width_ == other.width_; }
  bool operator==(const Grid2D&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

using Map2D = Grid2D<double>;
// Binary mask: every element is 0 or 1.
using Mask = Grid2D<std::uint8_t>;

std::size_t mask_area(const Mask& mask);
bool is_binary(const Mask& mask);
Mask mask_and(const Mask& a, const Mask& b);
Mask mask_or(const Mask& a, const Mask& b);
// a AND NOT b
Mask mask_minus(const Mask& a, const Mask& b);
bool mask_subset(const Mask& inner, const Mask& outer);
double mask_iou(const Mask& a, const Mask& b);

/// Interleaved H x W x C pixel array with intensities on the 8-bit scale [0, 255].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<double> pixels;

  Image() = default;
  Image(int h, int w, int c = 3, double fill = 0.0)
      : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h) * w * c, fill) {}

  double& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  double at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool same_geometry(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  bool operator==(const Image&) const = default;
};

// Rounds and clamps to the 8-bit grid, as a PNG round trip would.
Image quantize(const Image& image);

/// Row-major (rows x cols) matrix; the K and V records of self-attention layers.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), values(static_cast<std::size_t>(r) * c, fill) {}

  double& operator()(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
  std::span<const double> row(int r) const {
    return std::span<const double>(values).subspan(static_cast<std::size_t>(r) * cols, cols);
  }
  bool operator==(const Matrix&) const = default;
};

}  // namespace textdestroyer
