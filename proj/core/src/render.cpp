#include "relight/render.hpp"

#include <cmath>

namespace relight {
namespace {

std::vector<int> visible_set(const Scene& scene, const Camera& cam,
                             const ProjectionOptions& proj) {
  std::vector<int> vis;
  for (size_t i = 0; i < scene.gaussians.size(); ++i)
    if (project_gaussian(scene.gaussians[i], cam, int(i), proj))
      vis.push_back(int(i));
  return vis;
}

// Gradient of dir = (target - p)/dist with respect to p, chained with d_dir.
Vec3 unit_dir_backward(const Vec3& dir, double dist, const Vec3& d_dir) {
  return -(d_dir - dir * dir.dot(d_dir)) / dist;
}

}  // namespace

// ---- Forward shading -------------------------------------------------------

ForwardRender render_forward(const Scene& scene, const Camera& cam,
                             const PointLight& light, const Decoder& theta,
                             const RasterOptions& opts) {
  ForwardRender fr;
  const int n = int(scene.gaussians.size());
  fr.vis = visible_set(scene, cam, opts.proj);
  const int nv = int(fr.vis.size());

  MatX feat(nv, kFeatureDim);
  fr.wo.resize(nv, 3);
  fr.wi.resize(nv, 3);
  fr.falloff.resize(nv);
  for (int r = 0; r < nv; ++r) {
    const NeuralGaussian& g = scene.gaussians[fr.vis[r]];
    feat.row(r) = g.feature.transpose();
    Vec3 to_cam = cam.position - g.mu;
    Vec3 to_light = light.position - g.mu;
    double rc = std::max(to_cam.norm(), 1e-9);
    double rl = std::max(to_light.norm(), 1e-9);
    fr.wo.row(r) = (to_cam / rc).transpose();
    fr.wi.row(r) = (to_light / rl).transpose();
    fr.falloff[r] = 1.0 / (rl * rl);
  }
  fr.rho =
      theta.forward(feat, fr.wo, fr.wi, VecX::Zero(nv), &fr.decoder_cache);

  MatX payload = MatX::Zero(n, 3);
  for (int r = 0; r < nv; ++r)
    payload.row(fr.vis[r]) =
        fr.rho.row(r).cwiseProduct(light.intensity.transpose()) *
        fr.falloff[r];
  fr.frame = splat_blend(scene, cam, payload, BlendMode::Color, opts);
  fr.image = fr.frame.color;
  return fr;
}

RenderGrads render_forward_backward(const Scene& scene,
                                    const ForwardRender& fr,
                                    const PointLight& light,
                                    const Decoder& theta,
                                    const Image& d_image) {
  const int n = int(scene.gaussians.size());
  const int w = fr.frame.width, h = fr.frame.height;
  const Camera& cam = fr.frame.cam;

  // Composite: color = blended payload + (1 - alpha) * background.
  std::vector<double> d_payload_px(size_t(w) * h * 3);
  Image d_alpha(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double da = 0.0;
      for (int ch = 0; ch < 3; ++ch) {
        double g = d_image.at(x, y, ch);
        d_payload_px[(size_t(y) * w + x) * 3 + ch] = g;
        da -= g * fr.frame.background[ch];
      }
      d_alpha.at(x, y) = da;
    }

  SplatGrads sg = splat_blend_backward(scene, fr.frame, d_payload_px, d_alpha,
                                       Image(), Image());

  // Payload rows were radiance c = rho * intensity * falloff.
  const int nv = int(fr.vis.size());
  MatX d_rho = MatX::Zero(nv, 3);
  VecX d_falloff = VecX::Zero(nv);
  for (int r = 0; r < nv; ++r) {
    Eigen::RowVector3d d_c = sg.d_payload.row(fr.vis[r]);
    Eigen::RowVector3d ci = d_c.cwiseProduct(light.intensity.transpose());
    d_rho.row(r) = ci * fr.falloff[r];
    d_falloff[r] = ci.dot(fr.rho.row(r));
  }

  RenderGrads out;
  out.d_theta = VecX::Zero(theta.mlp().num_params());
  Decoder::InputGrads ig =
      theta.backward(fr.decoder_cache, d_rho, &out.d_theta);

  out.d_feature = MatX::Zero(n, kFeatureDim);
  out.d_mu = std::move(sg.d_mu);
  out.d_rot = std::move(sg.d_rot);
  out.d_log_scale = std::move(sg.d_log_scale);
  out.d_opacity_logit = std::move(sg.d_opacity_logit);
  out.d_mean2d_norm = std::move(sg.d_mean2d_norm);
  out.d_phi = VecX();

  // Position gradients through the decode inputs: directions are functions
  // of the mean, and so is the inverse-square falloff.
  for (int r = 0; r < nv; ++r) {
    int gi = fr.vis[r];
    const NeuralGaussian& g = scene.gaussians[gi];
    out.d_feature.row(gi) += ig.d_feat.row(r);

    Vec3 wo = fr.wo.row(r).transpose();
    Vec3 wi = fr.wi.row(r).transpose();
    double rc = std::max((cam.position - g.mu).norm(), 1e-9);
    double rl = std::max((light.position - g.mu).norm(), 1e-9);
    Vec3 d_mu = unit_dir_backward(wo, rc, ig.d_wo.row(r).transpose());
    d_mu += unit_dir_backward(wi, rl, ig.d_wi.row(r).transpose());
    // falloff = 1/rl^2, d(falloff)/d(mu) = 2 (light - mu) * falloff^2
    d_mu += d_falloff[r] * 2.0 * (light.position - g.mu) * fr.falloff[r] *
            fr.falloff[r];
    out.d_mu[gi] += d_mu;
  }
  return out;
}

// ---- Deferred shading ------------------------------------------------------

DeferredRender render_deferred(const Scene& scene, const Camera& cam,
                               const PointLight& light, const Decoder& theta,
                               const DepthRefine& phi,
                               const ShadowCueMap* cue,
                               const RasterOptions& opts) {
  DeferredRender dr;
  const int n = int(scene.gaussians.size());

  MatX payload(n, kFeatureDim);
  for (int i = 0; i < n; ++i)
    payload.row(i) = scene.gaussians[i].feature.transpose();
  dr.frame = splat_blend(scene, cam, payload, BlendMode::Feature, opts);
  dr.zbar = weighted_depth(dr.frame);

  const int w = dr.frame.width, h = dr.frame.height;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (dr.zbar.valid(x, y)) dr.fg.emplace_back(x, y);
  const int F = int(dr.fg.size());

  dr.pix_feat.resize(F, kFeatureDim);
  dr.pix_wo.resize(F, 3);
  dr.pix_cue = VecX::Zero(F);
  dr.pix_alpha.resize(F);
  for (int i = 0; i < F; ++i) {
    auto [x, y] = dr.fg[i];
    const double* p = dr.frame.payload_at(x, y);
    for (int k = 0; k < kFeatureDim; ++k) dr.pix_feat(i, k) = p[k];
    Vec3 ray = cam.ray_unit_z(x + 0.5, y + 0.5);
    dr.pix_wo.row(i) = (-ray.normalized()).transpose();
    dr.pix_alpha[i] = dr.frame.alpha.at(x, y);
    if (cue != nullptr)
      dr.pix_cue[i] = std::clamp(
          cue->values.at(x, y) / std::max(scene.scene_units, 1e-12), 0.0, 1.0);
  }

  dr.pix_scale = phi.forward(dr.pix_wo, &dr.phi_cache);

  dr.pix_wi.resize(F, 3);
  dr.pix_falloff.resize(F);
  dr.pix_point.resize(F);
  for (int i = 0; i < F; ++i) {
    auto [x, y] = dr.fg[i];
    Vec3 ray = cam.ray_unit_z(x + 0.5, y + 0.5);
    double z = dr.zbar.values.at(x, y) * dr.pix_scale[i];
    Vec3 P = cam.position + z * ray;
    dr.pix_point[i] = P;
    Vec3 to_light = light.position - P;
    double rl = std::max(to_light.norm(), 1e-9);
    dr.pix_wi.row(i) = (to_light / rl).transpose();
    dr.pix_falloff[i] = 1.0 / (rl * rl);
  }

  dr.rho = theta.forward(dr.pix_feat, dr.pix_wo, dr.pix_wi, dr.pix_cue,
                         &dr.decoder_cache);

  dr.image = Image(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < 3; ++ch)
        dr.image.at(x, y, ch) = scene.background[ch];
  for (int i = 0; i < F; ++i) {
    auto [x, y] = dr.fg[i];
    double a = dr.pix_alpha[i];
    for (int ch = 0; ch < 3; ++ch) {
      double lit =
          dr.rho(i, ch) * light.intensity[ch] * dr.pix_falloff[i];
      dr.image.at(x, y, ch) = lit * a + (1.0 - a) * scene.background[ch];
    }
  }
  return dr;
}

RenderGrads render_deferred_backward(const Scene& scene,
                                     const DeferredRender& dr,
                                     const PointLight& light,
                                     const Decoder& theta,
                                     const DepthRefine& phi,
                                     const Image& d_image) {
  const int n = int(scene.gaussians.size());
  const int w = dr.frame.width, h = dr.frame.height;
  const int F = int(dr.fg.size());
  const Camera& cam = dr.frame.cam;

  // Per-pixel composite and shading chain. The shadow cue is a detached
  // conditioning input, so its gradient is dropped by design.
  MatX d_rho = MatX::Zero(F, 3);
  VecX d_falloff = VecX::Zero(F);
  Image d_alpha(w, h, 1);
  for (int i = 0; i < F; ++i) {
    auto [x, y] = dr.fg[i];
    double a = dr.pix_alpha[i];
    double da = 0.0;
    for (int ch = 0; ch < 3; ++ch) {
      double g = d_image.at(x, y, ch);
      double lit = dr.rho(i, ch) * light.intensity[ch] * dr.pix_falloff[i];
      da += g * (lit - scene.background[ch]);
      double d_lit = g * a;
      d_rho(i, ch) = d_lit * light.intensity[ch] * dr.pix_falloff[i];
      d_falloff[i] += d_lit * dr.rho(i, ch) * light.intensity[ch];
    }
    d_alpha.at(x, y) = da;
  }

  RenderGrads out;
  out.d_theta = VecX::Zero(theta.mlp().num_params());
  Decoder::InputGrads ig =
      theta.backward(dr.decoder_cache, d_rho, &out.d_theta);

  // d_wi and d_falloff reach the shading point P; wo is fixed per pixel.
  // P = cam.position + zbar * scale * ray.
  std::vector<double> d_payload_px(size_t(w) * h * kFeatureDim, 0.0);
  Image d_num(w, h, 1), d_den(w, h, 1);
  VecX d_scale = VecX::Zero(F);
  for (int i = 0; i < F; ++i) {
    auto [x, y] = dr.fg[i];
    Vec3 wi = dr.pix_wi.row(i).transpose();
    Vec3 to_light = light.position - dr.pix_point[i];
    double rl = std::max(to_light.norm(), 1e-9);
    Vec3 d_P = unit_dir_backward(wi, rl, ig.d_wi.row(i).transpose());
    d_P += d_falloff[i] * 2.0 * to_light * dr.pix_falloff[i] *
           dr.pix_falloff[i];

    Vec3 ray = cam.ray_unit_z(x + 0.5, y + 0.5);
    double d_z = d_P.dot(ray);  // z = zbar * scale
    double zb = dr.zbar.values.at(x, y);
    d_scale[i] = d_z * zb;
    double d_zbar = d_z * dr.pix_scale[i];

    // zbar = num/den
    double den = dr.frame.depth_den.at(x, y);
    double num = dr.frame.depth_num.at(x, y);
    d_num.at(x, y) = d_zbar / den;
    d_den.at(x, y) = -d_zbar * num / (den * den);

    double* dp = d_payload_px.data() + (size_t(y) * w + x) * kFeatureDim;
    for (int k = 0; k < kFeatureDim; ++k) dp[k] = ig.d_feat(i, k);
  }

  out.d_phi = VecX::Zero(phi.mlp().num_params());
  phi.backward(dr.phi_cache, d_scale, &out.d_phi);

  SplatGrads sg = splat_blend_backward(scene, dr.frame, d_payload_px, d_alpha,
                                       d_num, d_den);
  out.d_feature = std::move(sg.d_payload);
  out.d_mu = std::move(sg.d_mu);
  out.d_rot = std::move(sg.d_rot);
  out.d_log_scale = std::move(sg.d_log_scale);
  out.d_opacity_logit = std::move(sg.d_opacity_logit);
  out.d_mean2d_norm = std::move(sg.d_mean2d_norm);
  (void)n;
  return out;
}

}  // namespace relight
