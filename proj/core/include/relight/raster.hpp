#pragma once

#include <vector>

#include "relight/image.hpp"
#include "relight/scene.hpp"

namespace relight {

struct RasterOptions {
  ProjectionOptions proj;
  // Blending along a ray stops once transmittance drops below this.
  double term_transmittance = 1e-4;
  int tile_size = 16;
};

// Ascending camera-space depth, ties broken by ascending Gaussian index.
// Returns positions into `projected`.
std::vector<int> sort_visible(const std::vector<ProjectedGaussian>& projected);

enum class BlendMode { Color, Feature };

// One blended contribution. weight = alpha * transmittance at blend time;
// per pixel the weights sum to the accumulated alpha.
struct ContribEntry {
  int32_t proj;   // position in SplatFrame::projected
  double alpha;   // opacity * gaussian_weight_2d
  double weight;
};

// Per-pixel accumulation buffers of one splatting pass, plus everything the
// backward pass needs to replay the blend (projection results, contribution
// records in blend order, camera).
struct SplatFrame {
  int width = 0, height = 0, payload_dim = 0;
  std::vector<double> payload;  // H*W*K, raw weighted sums
  Image alpha;                  // accumulated opacity in [0,1]
  Image depth_num, depth_den;   // sum(w_i z_i), sum(w_i)
  Image color;                  // color mode only: payload + (1-alpha)*bg

  // contribution records, CSR over pixels in scan order
  std::vector<uint32_t> offsets;  // H*W+1
  std::vector<ContribEntry> entries;

  std::vector<ProjectedGaussian> projected;  // visible set, blend order
  std::vector<double> footprint;             // screen-space radius per entry
  MatX payload_rows;                         // input payload, n x K
  Camera cam;
  RasterOptions opts;
  BlendMode mode = BlendMode::Feature;
  Vec3 background = Vec3::Zero();

  double* payload_at(int x, int y) {
    return payload.data() + (size_t(y) * width + x) * payload_dim;
  }
  const double* payload_at(int x, int y) const {
    return payload.data() + (size_t(y) * width + x) * payload_dim;
  }
};

// Sorted alpha blending of an arbitrary per-Gaussian payload (rows of
// `payload`, one per Gaussian in `scene`). A Gaussian contributes to a pixel
// when the pixel center lies inside its cull_sigma screen-space box. Color
// mode additionally composites scene background into `frame.color`.
SplatFrame splat_blend(const Scene& scene, const Camera& cam,
                       const MatX& payload, BlendMode mode,
                       const RasterOptions& opts = {});

// Gradients of the blend outputs with respect to every Gaussian parameter
// and payload row. Entries for non-contributing Gaussians stay zero.
struct SplatGrads {
  MatX d_payload;                      // n x K
  std::vector<Vec3> d_mu;
  std::vector<Vec4> d_rot;
  std::vector<Vec3> d_log_scale;
  std::vector<double> d_opacity_logit;
  std::vector<double> d_mean2d_norm;   // |dL/dmean2d| per Gaussian, for density control
};

// Exact reverse-mode pass. Upstream gradients arrive per pixel for the raw
// buffers: payload (H*W*K), alpha, depth_num, depth_den. Pass empty images
// for terms that receive no gradient.
SplatGrads splat_blend_backward(const Scene& scene, const SplatFrame& frame,
                                const std::vector<double>& d_payload,
                                const Image& d_alpha, const Image& d_depth_num,
                                const Image& d_depth_den);

// Eq-style normalized depth: sum(w z)/sum(w); pixels with denominator below
// 1e-6 are background (mask cleared).
MaskedImage weighted_depth(const SplatFrame& frame);

// Backward helper for project_gaussian, shared by the blend backward and
// tested against finite differences on its own.
struct ProjectionGrads {
  Vec3 d_mu;
  Vec4 d_rot;
  Vec3 d_log_scale;
};
ProjectionGrads project_gaussian_backward(const NeuralGaussian& g,
                                          const Camera& cam,
                                          const Vec2& d_mean2d,
                                          const Mat2& d_cov2d, double d_depth);

}  // namespace relight
