#pragma once

#include "textdestroyer/tensor.hpp"

namespace textdestroyer {

enum class MetricRegion { kFullImage, kBackgroundOnly };

const char* to_string(MetricRegion region);

struct MetricReport {
  double psnr_db = 0.0;
  double mssim = 0.0;
  MetricRegion region = MetricRegion::kFullImage;
};

// Returned for identical inputs.
inline constexpr double kPsnrCap = 100.0;
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

/// 10 log10(255^2 / MSE) over every channel value, capped at kPsnrCap.
double psnr(const Image& a, const Image& b);
/// PSNR over pixels where `exclude` is 0. Throws ContractViolation if nothing remains.
double psnr_background(const Image& a, const Image& b, const Mask& exclude);

/// Mean SSIM of the luma planes over every valid 11x11 Gaussian window.
/// Throws ContractViolation for images smaller than the window.
double mssim(const Image& a, const Image& b);
/// Mean SSIM over windows whose centre pixel is not excluded.
double mssim_background(const Image& a, const Image& b, const Mask& exclude);

MetricReport evaluate(const Image& a, const Image& b);
MetricReport evaluate_background(const Image& a, const Image& b, const Mask& exclude);

}  // namespace textdestroyer
