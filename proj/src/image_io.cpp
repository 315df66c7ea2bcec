#include "textdestroyer/image_io.hpp"

#include <png.h>

#include <cstring>
#include <vector>

namespace textdestroyer {

namespace {

std::vector<png_byte> read_raw(const std::filesystem::path& path, png_uint_32 format, int* height, int* width) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + img.message);
  }
  img.format = format;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError("cannot decode PNG " + path.string() + ": " + img.message);
  }
  *height = static_cast<int>(img.height);
  *width = static_cast<int>(img.width);
  return buffer;
}

void write_raw(const std::filesystem::path& path, const std::vector<png_byte>& buffer, int height, int width,
               png_uint_32 format) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, buffer.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + img.message);
  }
}

}  // namespace

Image read_png(const std::filesystem::path& path) {
  int h = 0, w = 0;
  const auto raw = read_raw(path, PNG_FORMAT_RGB, &h, &w);
  Image out(h, w, 3);
  for (std::size_t i = 0; i < raw.size(); ++i) out.pixels[i] = raw[i];
  return out;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw IoError("write_png: only grey or RGB images are supported");
  const Image q = quantize(image);
  std::vector<png_byte> raw(q.pixels.size());
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<png_byte>(q.pixels[i]);
  write_raw(path, raw, image.height, image.width, image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY);
}

Mask read_mask_png(const std::filesystem::path& path) {
  int h = 0, w = 0;
  const auto raw = read_raw(path, PNG_FORMAT_GRAY, &h, &w);
  Mask out(h, w, 0);
  for (std::size_t i = 0; i < raw.size(); ++i) out.storage()[i] = raw[i] ? 1 : 0;
  return out;
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
  std::vector<png_byte> raw(mask.size());
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = mask.storage()[i] ? 255 : 0;
  write_raw(path, raw, mask.height(), mask.width(), PNG_FORMAT_GRAY);
}

}  // namespace textdestroyer
