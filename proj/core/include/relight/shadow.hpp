#pragma once

#include <cstdint>
#include <functional>
#include <map>

#include "relight/mlp.hpp"
#include "relight/raster.hpp"

namespace relight {

// 1-channel screen-space map of clamped occluder distances |PQ|, with the
// main view's foreground mask. 0 means fully lit; values never exceed the
// scene units.
using ShadowCueMap = MaskedImage;

// The scene's declared normalization sphere (center, scene_units). Framing
// the shadow camera on the declared sphere keeps the shadow-map footprint
// tight regardless of stray low-impact Gaussians; anything drifting outside
// the padded frustum simply casts no shadow.
BoundingSphere scene_bounds(const Scene& scene);

// Virtual camera at the light position, aimed at the scene center, fov
// covering the bounding sphere (padded 10%), resolution of the main camera.
Camera make_shadow_camera(const PointLight& light, const BoundingSphere& bounds,
                          int width, int height);

// Per-pixel world points lifted from a depth map.
struct PointMap {
  int width = 0, height = 0;
  std::vector<Vec3> points;
  std::vector<uint8_t> mask;

  PointMap() = default;
  PointMap(int w, int h)
      : width(w), height(h), points(size_t(w) * h, Vec3::Zero()),
        mask(size_t(w) * h, 0) {}
  bool valid(int x, int y) const { return mask[size_t(y) * width + x] != 0; }
  const Vec3& at(int x, int y) const { return points[size_t(y) * width + x]; }
};

// P = camera position + depth * ray (ray scaled to unit camera-z), for
// foreground pixels only.
PointMap lift_shading_points(const MaskedImage& depth, const Camera& cam);

// Multiplies each foreground depth by the learned view-direction scale.
// Background pixels pass through untouched.
MaskedImage refine_depth(const MaskedImage& zbar, const Camera& cam,
                         const DepthRefine& phi);

// Weighted-sum depth splatted from the shadow camera; depth refinement is
// deliberately not applied on this pass.
MaskedImage shadow_depth_pass(const Scene& scene, const PointLight& light,
                              const Camera& main_cam,
                              const RasterOptions& opts = {});

// For each lifted point P: project into the shadow camera, reconstruct the
// first-visible point Q on the same shadow ray from the stored depth, record
// clamp(|P-Q|, 0, scene_units). Outside-frustum and shadow-background pixels
// are treated as fully lit (cue 0).
ShadowCueMap compute_shadow_cue(const PointMap& shading_points,
                                const MaskedImage& shadow_depth,
                                const Camera& shadow_cam, double scene_units);

// Full cue pipeline for one view. Pass phi = nullptr to skip refinement.
ShadowCueMap compute_view_cue(const Scene& scene, const Camera& cam,
                              const PointLight& light, const DepthRefine* phi,
                              const RasterOptions& opts = {});

// Keyed per-view cue store refreshed every `refresh_every` iterations. The
// cue is a conditioning input computed out-of-graph, so serving a few
// iterations from cache is exact with respect to the training contract.
class CueCache {
 public:
  struct Entry {
    int64_t last_update = -1;
    ShadowCueMap cue;
  };

  const ShadowCueMap& get(int view_id, int64_t iteration, int refresh_every,
                          const std::function<ShadowCueMap()>& compute);

  void clear() { entries_.clear(); }
  const std::map<int, Entry>& entries() const { return entries_; }
  std::map<int, Entry>& entries() { return entries_; }

 private:
  std::map<int, Entry> entries_;
};

}  // namespace relight
