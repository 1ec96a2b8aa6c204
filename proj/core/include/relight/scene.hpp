#pragma once

#include <optional>
#include <string>
#include <vector>

#include "relight/types.hpp"

namespace relight {

// One splatting primitive. Scale is stored in the log domain so that
// exp(log_scale) is positive by construction; opacity is stored as a logit
// so alpha0 = sigmoid(opacity_logit) stays in (0,1) without clamping.
struct NeuralGaussian {
  Vec3 mu = Vec3::Zero();            // world-space position
  Vec4 rot{1, 0, 0, 0};              // quaternion (w,x,y,z), kept near unit
  Vec3 log_scale = Vec3::Zero();     // per-axis log stddev
  double opacity_logit = 0.0;
  Feature feature = Feature::Zero(); // 16-channel latent reflectance code

  double opacity() const { return sigmoid(opacity_logit); }
};

// Pinhole camera, world->camera rotation, looking down +z with x right and
// y down (image rows grow downward). fov_y spans the image height.
struct Camera {
  Vec3 position = Vec3::Zero();
  Mat3 orientation = Mat3::Identity();  // world -> camera
  double fov_y = 1.0;                   // radians
  int width = 0, height = 0;
  double near = 0.01, far = 100.0;

  bool valid() const {
    return near > 0 && near < far && width >= 1 && height >= 1 && fov_y > 0 &&
           fov_y < M_PI;
  }

  double focal() const { return 0.5 * height / std::tan(0.5 * fov_y); }
  double cx() const { return 0.5 * width; }
  double cy() const { return 0.5 * height; }

  Vec3 to_camera(const Vec3& p_world) const {
    return orientation * (p_world - position);
  }
  Vec3 to_world(const Vec3& p_cam) const {
    return orientation.transpose() * p_cam + position;
  }

  // World-space ray through the pixel-grid coordinate (px,py), scaled so its
  // camera-z component is 1: point_at_depth(z) = position + z * ray.
  Vec3 ray_unit_z(double px, double py) const {
    Vec3 d_cam((px - cx()) / focal(), (py - cy()) / focal(), 1.0);
    return orientation.transpose() * d_cam;
  }

  // Projects a camera-space point to pixel coordinates.
  Vec2 project(const Vec3& p_cam) const {
    return {focal() * p_cam.x() / p_cam.z() + cx(),
            focal() * p_cam.y() / p_cam.z() + cy()};
  }
};

// Builds the world->camera rotation for a camera at `position` looking at
// `target`. The up hint is orthogonalized against the view direction; when
// they are near collinear a fallback axis is substituted.
Mat3 look_at(const Vec3& position, const Vec3& target,
             const Vec3& up_hint = Vec3(0, 0, 1));

// Isotropic point emitter.
struct PointLight {
  Vec3 position = Vec3::Zero();
  Vec3 intensity = Vec3::Ones();  // RGB radiant intensity, >= 0

  bool valid() const { return intensity.minCoeff() >= 0.0; }
};

struct Scene {
  std::vector<NeuralGaussian> gaussians;
  // Declared normalization sphere: `center` + `scene_units` (radius). Frames
  // the shadow camera and bounds the shadow cue; initialization scatters
  // Gaussians inside it.
  double scene_units = 1.0;
  Vec3 center = Vec3::Zero();
  Vec3 background = Vec3::Zero(); // RGB in [0,1]
};

// Covariance factorization Sigma = R * S * S^T * R^T with S = diag(exp(ls)).
Mat3 build_rotation(const Vec4& q);
Mat3 build_covariance(const NeuralGaussian& g);

// A Gaussian after perspective projection. cov2d already includes the
// isotropic pixel floor, so it is always invertible.
struct ProjectedGaussian {
  Vec2 mean2d;     // pixels
  Mat2 cov2d;
  double depth;    // camera-space z of mu
  int index;       // position in Scene::gaussians
};

struct ProjectionOptions {
  double cov2d_floor = 0.3;    // px^2, added to both cov2d diagonals
  double cull_sigma = 3.0;     // screen-extent multiplier for frustum culling
};

// First-order (Jacobian) perspective projection of the 3D covariance.
// Returns nullopt when the Gaussian is depth- or extent-culled.
std::optional<ProjectedGaussian> project_gaussian(
    const NeuralGaussian& g, const Camera& cam, int index = 0,
    const ProjectionOptions& opts = {});

// Unnormalized 2D Gaussian falloff exp(-0.5 d^T cov^-1 d); 1 at the mean.
double gaussian_weight_2d(const Vec2& mean2d, const Mat2& cov2d,
                          const Vec2& pixel);

// Scene container I/O: versioned binary layout documented in the README
// (attribute arrays in field order mu/rot/log_scale/opacity_logit/feature,
// then scene_units, center, and background).
void save_scene(const std::string& path, const Scene& scene);
Scene load_scene(const std::string& path);

}  // namespace relight
