#pragma once

#include "relight/mlp.hpp"
#include "relight/raster.hpp"
#include "relight/shadow.hpp"

namespace relight {

// Consolidated per-parameter gradients of one rendered view. Geometry rows
// align with scene.gaussians; d_phi is empty for the forward-shading path.
struct RenderGrads {
  std::vector<Vec3> d_mu;
  std::vector<Vec4> d_rot;
  std::vector<Vec3> d_log_scale;
  std::vector<double> d_opacity_logit;
  MatX d_feature;  // n x 16
  VecX d_theta;    // decoder parameters
  VecX d_phi;      // depth-refinement parameters
  std::vector<double> d_mean2d_norm;  // screen-space grad magnitude, for
                                      // density control bookkeeping
};

// ---- Stage 1: forward shading --------------------------------------------
// Decode radiance per Gaussian (latent + directions at the Gaussian mean,
// inverse-square falloff), then alpha-blend colors.

struct ForwardRender {
  Image image;       // composited H x W x 3
  SplatFrame frame;  // color-mode splat of per-Gaussian radiance
  std::vector<int> vis;  // Gaussians that survived projection culling
  MatX rho;              // |vis| x 3 decoded reflectance
  MatX wo, wi;           // |vis| x 3 unit directions at the means
  VecX falloff;          // |vis|, 1/|light - mu|^2
  DecoderCache decoder_cache;
};

ForwardRender render_forward(const Scene& scene, const Camera& cam,
                             const PointLight& light, const Decoder& theta,
                             const RasterOptions& opts = {});

RenderGrads render_forward_backward(const Scene& scene,
                                    const ForwardRender& fr,
                                    const PointLight& light,
                                    const Decoder& theta,
                                    const Image& d_image);

// ---- Stage 2: deferred shading --------------------------------------------
// Blend 16-dim latents per pixel, lift a shading point from refined depth,
// decode once per foreground pixel with the shadow cue, then composite:
//   pixel = rho * intensity/|light-P|^2 * alpha + (1-alpha) * background.
// Pixels whose blended weight stays under the depth threshold render as pure
// background. The cue values are normalized by scene_units before encoding;
// pass cue = nullptr to decode with a zero cue (and when the decoder's cue
// input is disabled).

struct DeferredRender {
  Image image;
  SplatFrame frame;  // feature-mode splat, K = 16
  MaskedImage zbar;  // weighted-sum depth
  std::vector<std::pair<int, int>> fg;  // foreground pixels, scan order
  MatX pix_feat;     // F x 16 blended latents
  MatX pix_wo;       // F x 3 (negated unit pixel rays)
  MatX pix_wi;       // F x 3
  VecX pix_cue;      // F, normalized to [0,1]
  VecX pix_alpha;    // F
  VecX pix_falloff;  // F
  VecX pix_scale;    // F, depth-refinement output
  std::vector<Vec3> pix_point;  // F shading points P
  MatX rho;                     // F x 3
  DecoderCache decoder_cache;
  DepthRefineCache phi_cache;
};

DeferredRender render_deferred(const Scene& scene, const Camera& cam,
                               const PointLight& light, const Decoder& theta,
                               const DepthRefine& phi,
                               const ShadowCueMap* cue,
                               const RasterOptions& opts = {});

RenderGrads render_deferred_backward(const Scene& scene,
                                     const DeferredRender& dr,
                                     const PointLight& light,
                                     const Decoder& theta,
                                     const DepthRefine& phi,
                                     const Image& d_image);

}  // namespace relight
