#pragma once

#include <optional>
#include <string>
#include <vector>

#include "relight/image.hpp"
#include "relight/scene.hpp"

namespace relight {

// ---- Analytic scenes ------------------------------------------------------

struct SpecularLobe {
  double exponent = 0.0;
  double strength = 0.0;  // 0 disables the lobe
};

struct Primitive {
  enum class Kind { Sphere, Box, Triangle };
  Kind kind = Kind::Sphere;

  Vec3 center = Vec3::Zero();  // sphere
  double radius = 1.0;
  Vec3 box_min = Vec3::Zero(), box_max = Vec3::Ones();  // axis-aligned box
  Vec3 a = Vec3::Zero(), b = Vec3::Zero(), c = Vec3::Zero();  // triangle

  Vec3 albedo = Vec3(0.7, 0.7, 0.7);
  SpecularLobe spec;
};

struct AnalyticScene {
  std::vector<Primitive> primitives;
  BoundingSphere bounds;
  Vec3 background = Vec3::Zero();
};

AnalyticScene make_sphere_plate();
AnalyticScene make_boxes();
AnalyticScene make_fuzz_proxy(uint64_t seed = 7);
// Lookup by name ("sphere-plate" | "boxes" | "fuzz-proxy").
AnalyticScene make_scene(const std::string& name, uint64_t seed = 7);

// Recomputes `bounds` from primitive extents.
void finalize_bounds(AnalyticScene& scene);

// ---- Ray tracing ----------------------------------------------------------

struct Hit {
  double t = 0.0;
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::Zero();  // geometric, flipped toward the ray origin
  int prim = -1;
};

// Nearest intersection with t in (t_min, t_max).
std::optional<Hit> trace_ray(const AnalyticScene& scene, const Vec3& origin,
                             const Vec3& dir, double t_min = 1e-9,
                             double t_max = 1e30);

// Direct point-light shading, one center ray per pixel (supersample > 1
// averages a supersample^2 grid). Returns linear radiance; not clamped.
Image raytrace_reference(const AnalyticScene& scene, const Camera& cam,
                         const PointLight& light, int supersample = 1);

// Exact shadow test along the light->point segment. `occluder_distance` is
// the distance from the point to the first surface the light sees on that
// ray: 0 when the point itself is first (lit).
struct VisibilityProbe {
  bool lit = true;
  double occluder_distance = 0.0;
};
VisibilityProbe visibility_oracle(const AnalyticScene& scene,
                                  const Vec3& point, const PointLight& light);

// ---- Dataset generation ---------------------------------------------------

struct DatasetRecord {
  std::string image;  // path relative to the manifest
  Camera cam;
  PointLight light;
  std::string split = "train";  // "train" | "test"
  int view_id = 0;
};

struct DatasetManifest {
  int width = 0, height = 0;
  int bit_depth = 16;
  double scene_units = 1.0;
  Vec3 center = Vec3::Zero();  // scene bounds center, used for model init
  Vec3 background = Vec3::Zero();
  double intensity_scale = 1.0;  // calibration applied to unit intensities
  bool clamped = true;           // stored images are clamped to [0,1]
  std::vector<DatasetRecord> records;
};

struct DatasetSpec {
  int n_views = 24;
  int n_lights = 1;       // lights per view; records = n_views * n_lights
  int n_test_views = 4;   // extra held-out view/light pairs
  int width = 64, height = 64;
  int supersample = 1;
  uint64_t seed = 1;
  double cam_radius_factor = 2.8;   // camera distance / bounds radius
  double light_radius_factor = 2.2;
  std::string out_dir;
};

// Renders all records, calibrates intensity so the brightest pixel is ~0.9,
// writes images + manifest.json under spec.out_dir, returns the manifest.
DatasetManifest generate_dataset(const AnalyticScene& scene,
                                 const DatasetSpec& spec);

void save_manifest(const std::string& path, const DatasetManifest& m);
DatasetManifest load_manifest(const std::string& path);

// Manifest plus eagerly loaded images (indexed like manifest.records).
struct LoadedDataset {
  DatasetManifest manifest;
  std::vector<Image> images;
};
LoadedDataset load_dataset(const std::string& manifest_path);

}  // namespace relight
