#include "textdestroyer/metrics.hpp"

#include <array>
#include <cmath>

#include "textdestroyer/image_ops.hpp"

namespace textdestroyer {

namespace {

void require_same(const Image& a, const Image& b, const char* what) {
  if (!a.same_geometry(b)) throw ContractViolation(std::string(what) + ": image shapes differ");
}

void require_mask(const Image& a, const Mask& m, const char* what) {
  if (m.height() != a.height || m.width() != a.width) {
    throw ContractViolation(std::string(what) + ": mask does not match the image");
  }
}

double psnr_from_sse(double sse, double count) {
  if (sse == 0.0) return kPsnrCap;
  const double mse = sse / count;
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

Map2D gray(const Image& image) {
  if (image.channels == 1) {
    return Map2D(image.height, image.width, image.pixels);
  }
  return luma(image);
}

std::array<double, kSsimWindow> gaussian_taps() {
  std::array<double, kSsimWindow> w{};
  double total = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    w[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

// Local SSIM at each valid window, indexed by window top-left.
Map2D ssim_map(const Image& a, const Image& b) {
  require_same(a, b, "mssim");
  if (a.height < kSsimWindow || a.width < kSsimWindow) {
    throw ContractViolation("mssim: images smaller than the 11x11 window");
  }
  const Map2D x = gray(a);
  const Map2D y = gray(b);
  const auto w = gaussian_taps();
  const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  const double c2 = (0.03 * 255.0) * (0.03 * 255.0);
  const int oh = a.height - kSsimWindow + 1;
  const int ow = a.width - kSsimWindow + 1;
  Map2D out(oh, ow);
  for (int i = 0; i < oh; ++i) {
    for (int j = 0; j < ow; ++j) {
      double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
      for (int u = 0; u < kSsimWindow; ++u) {
        for (int v = 0; v < kSsimWindow; ++v) {
          const double g = w[u] * w[v];
          const double xv = x(i + u, j + v);
          const double yv = y(i + u, j + v);
          mx += g * xv;
          my += g * yv;
          xx += g * xv * xv;
          yy += g * yv * yv;
          xy += g * xv * yv;
        }
      }
      const double sx = xx - mx * mx;
      const double sy = yy - my * my;
      const double sxy = xy - mx * my;
      out(i, j) = ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sx + sy + c2));
    }
  }
  return out;
}

}  // namespace

const char* to_string(MetricRegion region) {
  return region == MetricRegion::kFullImage ? "full_image" : "background_only";
}

double psnr(const Image& a, const Image& b) {
  require_same(a, b, "psnr");
  double sse = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    sse += d * d;
  }
  return psnr_from_sse(sse, static_cast<double>(a.pixels.size()));
}

double psnr_background(const Image& a, const Image& b, const Mask& exclude) {
  require_same(a, b, "psnr");
  require_mask(a, exclude, "psnr");
  double sse = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      if (exclude(y, x)) continue;
      for (int c = 0; c < a.channels; ++c) {
        const double d = a.at(y, x, c) - b.at(y, x, c);
        sse += d * d;
        ++count;
      }
    }
  }
  if (count == 0) throw ContractViolation("psnr: no background pixels");
  return psnr_from_sse(sse, static_cast<double>(count));
}

double mssim(const Image& a, const Image& b) {
  const Map2D m = ssim_map(a, b);
  double total = 0.0;
  for (double v : m.storage()) total += v;
  return total / static_cast<double>(m.size());
}

double mssim_background(const Image& a, const Image& b, const Mask& exclude) {
  require_mask(a, exclude, "mssim");
  const Map2D m = ssim_map(a, b);
  const int half = kSsimWindow / 2;
  double total = 0.0;
  std::size_t count = 0;
  for (int i = 0; i < m.height(); ++i) {
    for (int j = 0; j < m.width(); ++j) {
      if (exclude(i + half, j + half)) continue;
      total += m(i, j);
      ++count;
    }
  }
  if (count == 0) throw ContractViolation("mssim: no background windows");
  return total / static_cast<double>(count);
}

MetricReport evaluate(const Image& a, const Image& b) {
  return {psnr(a, b), mssim(a, b), MetricRegion::kFullImage};
}

MetricReport evaluate_background(const Image& a, const Image& b, const Mask& exclude) {
  return {psnr_background(a, b, exclude), mssim_background(a, b, exclude), MetricRegion::kBackgroundOnly};
}

}  // namespace textdestroyer
