#include "textdestroyer/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace textdestroyer {

std::string Shape3::str() const {
  return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
}

LatentTensor::LatentTensor(Shape3 shape, SpaceTag tag) : shape_(shape), data_(shape.size(), 0.0), tag_(tag) {
  if (shape.channels <= 0 || shape.height <= 0 || shape.width <= 0) {
    throw ContractViolation("latent shape must be positive, got " + shape.str());
  }
}

LatentTensor::LatentTensor(Shape3 shape, std::vector<double> data, SpaceTag tag)
    : shape_(shape), data_(std::move(data)), tag_(tag) {
  if (shape.channels <= 0 || shape.height <= 0 || shape.width <= 0) {
    throw ContractViolation("latent shape must be positive, got " + shape.str());
  }
  if (data_.size() != shape_.size()) {
    throw ContractViolation("latent data size " + std::to_string(data_.size()) + " does not match shape " +
                            shape_.str());
  }
}

bool LatentTensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_same_shape(const LatentTensor& a, const LatentTensor& b, const char* what) {
  if (!(a.shape() == b.shape())) {
    throw ContractViolation(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
}

std::size_t mask_area(const Mask& mask) {
  std::size_t n = 0;
  for (auto v : mask.data()) n += v != 0;
  return n;
}

bool is_binary(const Mask& mask) {
  return std::all_of(mask.data().begin(), mask.data().end(), [](std::uint8_t v) { return v <= 1; });
}

namespace {

template <typename Op>
Mask combine(const Mask& a, const Mask& b, const char* what, Op op) {
  if (!a.same_size(b)) throw ContractViolation(std::string(what) + ": mask size mismatch");
  Mask out(a.height(), a.width());
  for (std::size_t i = 0; i < a.size(); ++i) out.storage()[i] = op(a.storage()[i] != 0, b.storage()[i] != 0) ? 1 : 0;
  return out;
}

}  // namespace

Mask mask_and(const Mask& a, const Mask& b) {
  return combine(a, b, "mask_and", [](bool x, bool y) { return x && y; });
}
Mask mask_or(const Mask& a, const Mask& b) {
  return combine(a, b, "mask_or", [](bool x, bool y) { return x || y; });
}
Mask mask_minus(const Mask& a, const Mask& b) {
  return combine(a, b, "mask_minus", [](bool x, bool y) { return x && !y; });
}

bool mask_subset(const Mask& inner, const Mask& outer) {
  if (!inner.same_size(outer)) throw ContractViolation("mask_subset: mask size mismatch");
  for (std::size_t i = 0; i < inner.size(); ++i) {
    if (inner.storage()[i] && !outer.storage()[i]) return false;
  }
  return true;
}

double mask_iou(const Mask& a, const Mask& b) {
  if (!a.same_size(b)) throw ContractViolation("mask_iou: mask size mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    bool x = a.storage()[i] != 0, y = b.storage()[i] != 0;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Image quantize(const Image& image) {
  Image out = image;
  for (auto& v : out.pixels) v = std::clamp(std::round(v), 0.0, 255.0);
  return out;
}

}  // namespace textdestroyer
