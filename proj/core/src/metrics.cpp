#include "relight/metrics.hpp"

#include <cmath>
#include <array>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace relight {
namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void check_shapes(const Image& a, const Image& b) {
  if (a.width() != b.width() || a.height() != b.height() ||
      a.channels() != b.channels()) {
    throw std::invalid_argument("metrics: image shape mismatch");
  }
}

const std::array<double, kWin>& gauss_window() {
  static const std::array<double, kWin> g = [] {
    std::array<double, kWin> w{};
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i) {
      double d = i - (kWin - 1) / 2.0;
      w[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
      sum += w[i];
    }
    for (auto& v : w) v /= sum;
    return w;
  }();
  return g;
}

// Valid-window 2D Gaussian filter of one channel; output is
// (W-10) x (H-10), stored row-major.
std::vector<double> blur_valid(const Image& img, int ch, int ow, int oh) {
  const auto& g = gauss_window();
  std::vector<double> out(size_t(ow) * oh, 0.0);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      double acc = 0.0;
      for (int j = 0; j < kWin; ++j)
        for (int i = 0; i < kWin; ++i)
          acc += g[i] * g[j] * img.at(ox + i, oy + j, ch);
      out[size_t(oy) * ow + ox] = acc;
    }
  }
  return out;
}

// Adjoint of blur_valid: scatters window-space gradients back to pixels.
void blur_valid_adjoint(const std::vector<double>& d_out, int ow, int oh,
                        Image& d_img, int ch,
                        const std::function<double(int, int)>& pixel_factor) {
  const auto& g = gauss_window();
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      double go = d_out[size_t(oy) * ow + ox];
      if (go == 0.0) continue;
      for (int j = 0; j < kWin; ++j)
        for (int i = 0; i < kWin; ++i) {
          int px = ox + i, py = oy + j;
          d_img.at(px, py, ch) += g[i] * g[j] * go * pixel_factor(px, py);
        }
    }
  }
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  check_shapes(a, b);
  double mse = 0.0;
  size_t n = a.size();
  for (size_t i = 0; i < n; ++i) {
    double d = a.raw()[i] - b.raw()[i];
    mse += d * d;
  }
  mse /= double(n);
  if (mse <= 0.0) return kPsnrCap;
  return std::min(10.0 * std::log10(1.0 / mse), kPsnrCap);
}

double ssim(const Image& a, const Image& b, Image* d_a) {
  check_shapes(a, b);
  const int w = a.width(), h = a.height(), C = a.channels();
  if (w < kWin || h < kWin)
    throw std::invalid_argument("ssim: image smaller than 11x11 window");

  const int ow = w - kWin + 1, oh = h - kWin + 1;
  const size_t nwin = size_t(ow) * oh;
  if (d_a != nullptr) *d_a = Image(w, h, C);

  double total = 0.0;
  for (int ch = 0; ch < C; ++ch) {
    Image a2(w, h, 1), b2(w, h, 1), ab(w, h, 1);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double av = a.at(x, y, ch), bv = b.at(x, y, ch);
        a2.at(x, y) = av * av;
        b2.at(x, y) = bv * bv;
        ab.at(x, y) = av * bv;
      }
    std::vector<double> mu_a = blur_valid(a, ch, ow, oh);
    std::vector<double> mu_b = blur_valid(b, ch, ow, oh);
    std::vector<double> m2a = blur_valid(a2, 0, ow, oh);
    std::vector<double> m2b = blur_valid(b2, 0, ow, oh);
    std::vector<double> mab = blur_valid(ab, 0, ow, oh);

    std::vector<double> d_mu(nwin, 0.0), d_m2a(nwin, 0.0), d_mab(nwin, 0.0);
    double ch_sum = 0.0;
    for (size_t i = 0; i < nwin; ++i) {
      double ma = mu_a[i], mb = mu_b[i];
      double va = m2a[i] - ma * ma;
      double vb = m2b[i] - mb * mb;
      double cov = mab[i] - ma * mb;
      double n1 = 2.0 * ma * mb + kC1, d1 = ma * ma + mb * mb + kC1;
      double n2 = 2.0 * cov + kC2, d2 = va + vb + kC2;
      double s = (n1 * n2) / (d1 * d2);
      ch_sum += s;
      if (d_a != nullptr) {
        double ds_n1 = n2 / (d1 * d2);
        double ds_n2 = n1 / (d1 * d2);
        double ds_d1 = -s / d1;
        double ds_d2 = -s / d2;
        // s depends on mu_a directly and through va, cov.
        d_mu[i] = ds_n1 * 2.0 * mb + ds_d1 * 2.0 * ma +
                  ds_n2 * 2.0 * (-mb) + ds_d2 * (-2.0 * ma);
        d_m2a[i] = ds_d2;
        d_mab[i] = ds_n2 * 2.0;
      }
    }
    total += ch_sum / double(nwin);

    if (d_a != nullptr) {
      double norm = 1.0 / (double(nwin) * C);
      for (auto& v : d_mu) v *= norm;
      for (auto& v : d_m2a) v *= norm;
      for (auto& v : d_mab) v *= norm;
      blur_valid_adjoint(d_mu, ow, oh, *d_a, ch,
                         [](int, int) { return 1.0; });
      blur_valid_adjoint(d_m2a, ow, oh, *d_a, ch, [&](int px, int py) {
        return 2.0 * a.at(px, py, ch);
      });
      blur_valid_adjoint(d_mab, ow, oh, *d_a, ch, [&](int px, int py) {
        return b.at(px, py, ch);
      });
    }
  }
  return total / C;
}

double l1(const Image& a, const Image& b, Image* d_a) {
  check_shapes(a, b);
  size_t n = a.size();
  if (d_a != nullptr) *d_a = Image(a.width(), a.height(), a.channels());
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double d = a.raw()[i] - b.raw()[i];
    sum += std::abs(d);
    if (d_a != nullptr)
      d_a->raw()[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / double(n);
  }
  return sum / double(n);
}

MetricReport aggregate_metrics(std::vector<ViewMetrics> views) {
  MetricReport r;
  r.views = std::move(views);
  if (r.views.empty()) return r;
  for (const auto& v : r.views) {
    r.psnr += v.psnr;
    r.ssim += v.ssim;
  }
  r.psnr /= double(r.views.size());
  r.ssim /= double(r.views.size());
  return r;
}

}  // namespace relight
