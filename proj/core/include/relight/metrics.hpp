#pragma once

#include <vector>

#include "relight/image.hpp"

namespace relight {

// 10*log10(1 / MSE) over all channels, capped at 99 dB for identical images.
double psnr(const Image& a, const Image& b);

inline constexpr double kPsnrCap = 99.0;

// Mean windowed SSIM: 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2,
// C2 = 0.03^2, valid windows only, computed per channel then averaged.
// When d_a is non-null it receives dSSIM/da (same shape as a).
double ssim(const Image& a, const Image& b, Image* d_a = nullptr);

// Mean absolute error; optional gradient with respect to a.
double l1(const Image& a, const Image& b, Image* d_a = nullptr);

struct ViewMetrics {
  int view = 0;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct MetricReport {
  double psnr = 0.0;  // averaged over views
  double ssim = 0.0;
  std::vector<ViewMetrics> views;
};

MetricReport aggregate_metrics(std::vector<ViewMetrics> views);

}  // namespace relight
