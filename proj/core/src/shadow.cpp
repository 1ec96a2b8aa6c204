#include "relight/shadow.hpp"

#include <algorithm>
#include <cmath>

namespace relight {

BoundingSphere scene_bounds(const Scene& scene) {
  BoundingSphere b;
  b.center = scene.center;
  b.radius = std::max(scene.scene_units, 1e-6);
  return b;
}

Camera make_shadow_camera(const PointLight& light, const BoundingSphere& bounds,
                          int width, int height) {
  Camera cam;
  cam.position = light.position;
  cam.width = width;
  cam.height = height;

  Vec3 to_center = bounds.center - light.position;
  double dist = to_center.norm();
  Vec3 target = bounds.center;
  if (dist < 1e-9) {
    // Light sits on the centroid; aim is arbitrary but must be well defined.
    target = light.position + Vec3(0, 0, 1);
    dist = 1e-9;
  }
  cam.orientation = look_at(light.position, target);

  double ratio = std::min(bounds.radius / dist, 0.999);
  cam.fov_y = std::min(2.0 * std::asin(ratio) * 1.1, M_PI * 0.95);
  cam.near = std::max(dist - 1.2 * bounds.radius, 1e-3 * bounds.radius);
  cam.far = dist + 1.2 * bounds.radius;
  return cam;
}

PointMap lift_shading_points(const MaskedImage& depth, const Camera& cam) {
  PointMap out(depth.values.width(), depth.values.height());
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      if (!depth.valid(x, y)) continue;
      Vec3 ray = cam.ray_unit_z(x + 0.5, y + 0.5);
      size_t i = size_t(y) * out.width + x;
      out.points[i] = cam.position + depth.values.at(x, y) * ray;
      out.mask[i] = 1;
    }
  }
  return out;
}

MaskedImage refine_depth(const MaskedImage& zbar, const Camera& cam,
                         const DepthRefine& phi) {
  MaskedImage out = zbar;
  const int w = zbar.values.width(), h = zbar.values.height();

  std::vector<std::pair<int, int>> px;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (zbar.valid(x, y)) px.emplace_back(x, y);
  if (px.empty()) return out;

  MatX wo(px.size(), 3);
  for (size_t i = 0; i < px.size(); ++i) {
    Vec3 ray = cam.ray_unit_z(px[i].first + 0.5, px[i].second + 0.5);
    wo.row(i) = (-ray.normalized()).transpose();
  }
  VecX scale = phi.forward(wo);
  for (size_t i = 0; i < px.size(); ++i) {
    auto [x, y] = px[i];
    out.values.at(x, y) = zbar.values.at(x, y) * scale[Eigen::Index(i)];
  }
  return out;
}

MaskedImage shadow_depth_pass(const Scene& scene, const PointLight& light,
                              const Camera& main_cam,
                              const RasterOptions& opts) {
  Camera shadow_cam = make_shadow_camera(light, scene_bounds(scene),
                                         main_cam.width, main_cam.height);
  MatX empty(Eigen::Index(scene.gaussians.size()), 0);
  SplatFrame frame =
      splat_blend(scene, shadow_cam, empty, BlendMode::Feature, opts);
  return weighted_depth(frame);
}

ShadowCueMap compute_shadow_cue(const PointMap& shading_points,
                                const MaskedImage& shadow_depth,
                                const Camera& shadow_cam, double scene_units) {
  const int w = shading_points.width, h = shading_points.height;
  ShadowCueMap cue;
  cue.values = Image(w, h, 1);
  cue.mask.assign(size_t(w) * h, 0);

  const int sw = shadow_cam.width, sh = shadow_cam.height;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!shading_points.valid(x, y)) continue;
      cue.mask[size_t(y) * w + x] = 1;  // value stays 0 unless occluded

      Vec3 p_cam = shadow_cam.to_camera(shading_points.at(x, y));
      if (p_cam.z() <= shadow_cam.near || p_cam.z() >= shadow_cam.far) continue;
      Vec2 uv = shadow_cam.project(p_cam);
      int ix = int(std::floor(uv.x()));
      int iy = int(std::floor(uv.y()));
      if (ix < 0 || ix >= sw || iy < 0 || iy >= sh) continue;
      if (!shadow_depth.valid(ix, iy)) continue;  // nothing splatted: lit

      // Q lies on P's own projection ray, so |PQ| measures the along-ray
      // depth gap rather than folding in shadow-pixel quantization.
      Vec3 ray = shadow_cam.ray_unit_z(uv.x(), uv.y());
      Vec3 q = shadow_cam.position + shadow_depth.values.at(ix, iy) * ray;
      double d = (shading_points.at(x, y) - q).norm();
      cue.values.at(x, y) = std::clamp(d, 0.0, scene_units);
    }
  }
  return cue;
}

ShadowCueMap compute_view_cue(const Scene& scene, const Camera& cam,
                              const PointLight& light, const DepthRefine* phi,
                              const RasterOptions& opts) {
  MatX empty(Eigen::Index(scene.gaussians.size()), 0);
  SplatFrame frame = splat_blend(scene, cam, empty, BlendMode::Feature, opts);
  MaskedImage zbar = weighted_depth(frame);
  if (phi != nullptr) zbar = refine_depth(zbar, cam, *phi);

  PointMap points = lift_shading_points(zbar, cam);
  Camera shadow_cam =
      make_shadow_camera(light, scene_bounds(scene), cam.width, cam.height);
  MaskedImage sdepth = shadow_depth_pass(scene, light, cam, opts);
  return compute_shadow_cue(points, sdepth, shadow_cam, scene.scene_units);
}

const ShadowCueMap& CueCache::get(
    int view_id, int64_t iteration, int refresh_every,
    const std::function<ShadowCueMap()>& compute) {
  auto it = entries_.find(view_id);
  bool stale = it == entries_.end() ||
               iteration - it->second.last_update >= refresh_every;
  if (stale) {
    Entry e;
    e.last_update = iteration;
    e.cue = compute();
    it = entries_.insert_or_assign(view_id, std::move(e)).first;
  }
  return it->second.cue;
}

}  // namespace relight
