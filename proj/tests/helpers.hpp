#pragma once

// Shared fixtures for unit and acceptance tests: randomized scene/camera
// builders, a central-difference gradient checker, and an independent
// straight-loop blend reference used as the blending oracle.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "relight/image.hpp"
#include "relight/raster.hpp"
#include "relight/rng.hpp"
#include "relight/scene.hpp"

namespace relight::testing {

// ---- randomized fixtures ---------------------------------------------------

// Moderate opacities and scales keep randomized scenes away from the
// term-transmittance and culling discontinuities that break finite
// differences.
inline Scene random_scene(Rng& rng, int n, double spread = 0.55) {
  Scene s;
  s.scene_units = 1.0;
  s.background = Vec3(rng.uniform(0.02, 0.15), rng.uniform(0.02, 0.15),
                      rng.uniform(0.02, 0.15));
  for (int i = 0; i < n; ++i) {
    NeuralGaussian g;
    g.mu = rng.in_ball(spread);
    Vec4 q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    g.rot = q.normalized();
    for (int a = 0; a < 3; ++a) g.log_scale[a] = std::log(rng.uniform(0.06, 0.2));
    double alpha0 = rng.uniform(0.35, 0.8);
    g.opacity_logit = std::log(alpha0 / (1.0 - alpha0));
    for (int k = 0; k < kFeatureDim; ++k) g.feature[k] = 0.5 * rng.normal();
    s.gaussians.push_back(g);
  }
  return s;
}

inline Camera random_camera(Rng& rng, int res) {
  Camera cam;
  Vec3 dir = rng.unit_vector();
  if (std::abs(dir.z()) > 0.95) dir = Vec3(0.6, 0.3, 0.74).normalized();
  cam.position = 3.0 * dir;
  cam.orientation = look_at(cam.position, rng.in_ball(0.1));
  cam.fov_y = rng.uniform(0.5, 0.9);
  cam.width = cam.height = res;
  cam.near = 0.05;
  cam.far = 20.0;
  return cam;
}

inline PointLight random_light(Rng& rng) {
  PointLight l;
  l.position = 2.5 * rng.unit_vector();
  l.intensity = Vec3(rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5),
                     rng.uniform(0.5, 1.5));
  return l;
}

inline MatX random_payload(Rng& rng, int n, int k) {
  MatX p(n, k);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) p(i, j) = rng.normal();
  return p;
}

// ---- independent blend reference -------------------------------------------

// Direct per-pixel loop over the depth-sorted visible set. Implements the
// documented blend contract (axis-aligned cull_sigma footprint box around the
// projected mean, front-to-back compositing, early termination) without
// tiles, CSR bookkeeping, or shared accumulation code.
struct RefBlend {
  int width = 0, height = 0, k = 0;
  std::vector<double> payload;  // H*W*K
  std::vector<double> alpha, depth_num, depth_den;  // H*W
  std::vector<double> color;                        // H*W*3 in color mode

  double pay(int x, int y, int c) const {
    return payload[(size_t(y) * width + x) * k + c];
  }
  double at(const std::vector<double>& b, int x, int y) const {
    return b[size_t(y) * width + x];
  }
};

inline RefBlend reference_blend(const Scene& scene, const Camera& cam,
                                const MatX& payload, BlendMode mode,
                                const RasterOptions& opts = {}) {
  struct Item {
    ProjectedGaussian p;
    double radius, opacity;
    Mat2 icov;
  };
  std::vector<Item> items;
  for (int i = 0; i < int(scene.gaussians.size()); ++i) {
    auto p = project_gaussian(scene.gaussians[i], cam, i, opts.proj);
    if (!p) continue;
    double mid = 0.5 * (p->cov2d(0, 0) + p->cov2d(1, 1));
    double det = p->cov2d.determinant();
    double lmax = mid + std::sqrt(std::max(0.0, mid * mid - det));
    items.push_back({*p, opts.proj.cull_sigma * std::sqrt(lmax),
                     scene.gaussians[i].opacity(), p->cov2d.inverse()});
  }
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    if (a.p.depth != b.p.depth) return a.p.depth < b.p.depth;
    return a.p.index < b.p.index;
  });

  const int w = cam.width, h = cam.height, K = int(payload.cols());
  RefBlend out;
  out.width = w;
  out.height = h;
  out.k = K;
  out.payload.assign(size_t(w) * h * K, 0.0);
  out.alpha.assign(size_t(w) * h, 0.0);
  out.depth_num.assign(size_t(w) * h, 0.0);
  out.depth_den.assign(size_t(w) * h, 0.0);
  if (mode == BlendMode::Color) out.color.assign(size_t(w) * h * 3, 0.0);

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Vec2 pix(x + 0.5, y + 0.5);
      double transmittance = 1.0;
      const size_t base = size_t(y) * w + x;
      for (const Item& it : items) {
        if (transmittance < opts.term_transmittance) break;
        if (std::abs(pix.x() - it.p.mean2d.x()) > it.radius ||
            std::abs(pix.y() - it.p.mean2d.y()) > it.radius)
          continue;
        const Vec2 d = pix - it.p.mean2d;
        double a = it.opacity * std::exp(-0.5 * d.dot(it.icov * d));
        double weight = a * transmittance;
        for (int c = 0; c < K; ++c)
          out.payload[base * K + c] += weight * payload(it.p.index, c);
        out.alpha[base] += weight;
        out.depth_num[base] += weight * it.p.depth;
        out.depth_den[base] += weight;
        transmittance *= 1.0 - a;
      }
      if (mode == BlendMode::Color)
        for (int c = 0; c < 3; ++c)
          out.color[base * 3 + c] = out.payload[base * 3 + c] +
                                    (1.0 - out.alpha[base]) * scene.background[c];
    }
  return out;
}

// ---- independent metric references ------------------------------------------

inline double psnr_direct(const Image& a, const Image& b) {
  double mse = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = a.raw()[i] - b.raw()[i];
    mse += d * d;
  }
  mse /= double(a.size());
  return 10.0 * std::log10(1.0 / mse);
}

// Direct SSIM transcription: for every valid 11x11 window compute gaussian-
// weighted means, variances, and covariance from scratch, then average the
// per-window scores over windows and channels.
inline double ssim_direct(const Image& a, const Image& b) {
  const int win = 11;
  const double sigma = 1.5, c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double wsum = 0;
  double kernel[11][11];
  for (int y = 0; y < win; ++y)
    for (int x = 0; x < win; ++x) {
      double dx = x - 5, dy = y - 5;
      kernel[y][x] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
      wsum += kernel[y][x];
    }
  for (int y = 0; y < win; ++y)
    for (int x = 0; x < win; ++x) kernel[y][x] /= wsum;

  double total = 0;
  int count = 0;
  for (int ch = 0; ch < a.channels(); ++ch)
    for (int wy = 0; wy + win <= a.height(); ++wy)
      for (int wx = 0; wx + win <= a.width(); ++wx) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int y = 0; y < win; ++y)
          for (int x = 0; x < win; ++x) {
            double va = a.at(wx + x, wy + y, ch);
            double vb = b.at(wx + x, wy + y, ch);
            double k = kernel[y][x];
            ma += k * va;
            mb += k * vb;
            saa += k * va * va;
            sbb += k * vb * vb;
            sab += k * va * vb;
          }
        double var_a = saa - ma * ma, var_b = sbb - mb * mb;
        double cov = sab - ma * mb;
        double s = ((2 * ma * mb + c1) * (2 * cov + c2)) /
                   ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        total += s;
        ++count;
      }
  return total / count;
}

// ---- finite differences ------------------------------------------------------

// Central difference of a scalar functional along one mutable coordinate.
template <class F>
double central_diff(F&& f, double& slot, double h) {
  const double x0 = slot;
  slot = x0 + h;
  const double fp = f();
  slot = x0 - h;
  const double fm = f();
  slot = x0;
  return (fp - fm) / (2.0 * h);
}

// Per-coordinate comparison ledger. The denominator floor absorbs finite-
// difference round-off on near-zero gradients (absolute FD noise is ~1e-10
// at h = 1e-5 on O(1) losses).
struct GradCheck {
  int total = 0, passed = 0;
  double worst = 0.0;
  std::string worst_label;
  double tol = 1e-4;

  void add(const std::string& label, double analytic, double fd) {
    double rel = std::abs(analytic - fd) /
                 std::max({std::abs(analytic), std::abs(fd), 1e-6});
    ++total;
    if (rel < tol) ++passed;
    if (rel > worst) {
      worst = rel;
      worst_label = label;
    }
  }
  double pass_fraction() const {
    return total == 0 ? 1.0 : double(passed) / total;
  }
};

}  // namespace relight::testing
