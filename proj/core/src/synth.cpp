#include "relight/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "relight/rng.hpp"

#include <json.hpp>

namespace relight {
namespace {

using nlohmann::json;

std::optional<double> ray_sphere(const Vec3& o, const Vec3& d, const Vec3& c,
                                 double r, double t_min, double t_max) {
  Vec3 oc = o - c;
  double b = oc.dot(d);
  double disc = b * b - (oc.squaredNorm() - r * r);
  if (disc < 0.0) return std::nullopt;
  double s = std::sqrt(disc);
  double t = -b - s;
  if (t <= t_min) t = -b + s;
  if (t <= t_min || t >= t_max) return std::nullopt;
  return t;
}

std::optional<double> ray_box(const Vec3& o, const Vec3& d, const Vec3& lo,
                              const Vec3& hi, double t_min, double t_max) {
  double t0 = t_min, t1 = t_max;
  for (int i = 0; i < 3; ++i) {
    double inv = 1.0 / d[i];  // IEEE inf handles axis-parallel rays
    double ta = (lo[i] - o[i]) * inv;
    double tb = (hi[i] - o[i]) * inv;
    if (inv < 0.0) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 >= t1) return std::nullopt;
  }
  // Entry point if outside the box, exit point if inside.
  double t = t0 > t_min ? t0 : t1;
  if (t <= t_min || t >= t_max) return std::nullopt;
  return t;
}

std::optional<double> ray_triangle(const Vec3& o, const Vec3& d, const Vec3& a,
                                   const Vec3& b, const Vec3& c, double t_min,
                                   double t_max) {
  // Moller-Trumbore
  Vec3 e1 = b - a, e2 = c - a;
  Vec3 p = d.cross(e2);
  double det = e1.dot(p);
  if (std::abs(det) < 1e-14) return std::nullopt;
  double inv = 1.0 / det;
  Vec3 tv = o - a;
  double u = tv.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  Vec3 q = tv.cross(e1);
  double v = d.dot(q) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  double t = e2.dot(q) * inv;
  if (t <= t_min || t >= t_max) return std::nullopt;
  return t;
}

Vec3 box_normal(const Primitive& prim, const Vec3& p) {
  Vec3 c = 0.5 * (prim.box_min + prim.box_max);
  Vec3 half = 0.5 * (prim.box_max - prim.box_min);
  Vec3 rel = p - c;
  int axis = 0;
  double best = -1.0;
  for (int i = 0; i < 3; ++i) {
    double f = std::abs(rel[i]) / std::max(half[i], 1e-12);
    if (f > best) {
      best = f;
      axis = i;
    }
  }
  Vec3 n = Vec3::Zero();
  n[axis] = rel[axis] >= 0.0 ? 1.0 : -1.0;
  return n;
}

}  // namespace

std::optional<Hit> trace_ray(const AnalyticScene& scene, const Vec3& origin,
                             const Vec3& dir, double t_min, double t_max) {
  std::optional<Hit> best;
  double closest = t_max;
  for (size_t i = 0; i < scene.primitives.size(); ++i) {
    const Primitive& prim = scene.primitives[i];
    std::optional<double> t;
    switch (prim.kind) {
      case Primitive::Kind::Sphere:
        t = ray_sphere(origin, dir, prim.center, prim.radius, t_min, closest);
        break;
      case Primitive::Kind::Box:
        t = ray_box(origin, dir, prim.box_min, prim.box_max, t_min, closest);
        break;
      case Primitive::Kind::Triangle:
        t = ray_triangle(origin, dir, prim.a, prim.b, prim.c, t_min, closest);
        break;
    }
    if (!t) continue;
    Hit h;
    h.t = *t;
    h.point = origin + *t * dir;
    h.prim = int(i);
    switch (prim.kind) {
      case Primitive::Kind::Sphere:
        h.normal = (h.point - prim.center) / prim.radius;
        break;
      case Primitive::Kind::Box:
        h.normal = box_normal(prim, h.point);
        break;
      case Primitive::Kind::Triangle:
        h.normal = (prim.b - prim.a).cross(prim.c - prim.a).normalized();
        break;
    }
    if (h.normal.dot(dir) > 0.0) h.normal = -h.normal;  // double-sided
    best = h;
    closest = h.t;
  }
  return best;
}

namespace {

Vec3 shade_hit(const AnalyticScene& scene, const Hit& hit, const Vec3& ray_dir,
               const PointLight& light) {
  const Primitive& prim = scene.primitives[hit.prim];
  Vec3 to_light = light.position - hit.point;
  double dl = to_light.norm();
  if (dl < 1e-12) return Vec3::Zero();
  Vec3 wi = to_light / dl;
  double ndl = hit.normal.dot(wi);
  if (ndl <= 0.0) return Vec3::Zero();

  // Shadow ray, offset along the normal to dodge self-intersection.
  double eps = 1e-6 * (1.0 + hit.point.norm());
  Vec3 so = hit.point + eps * hit.normal;
  double smax = (light.position - so).norm() - eps;
  if (trace_ray(scene, so, (light.position - so).normalized(), 1e-9, smax))
    return Vec3::Zero();

  double falloff = 1.0 / (dl * dl);
  Vec3 out = (prim.albedo / M_PI) * ndl * falloff;
  if (prim.spec.strength > 0.0) {
    Vec3 wo = -ray_dir;
    Vec3 refl = 2.0 * ndl * hit.normal - wi;
    double rdo = refl.dot(wo);
    if (rdo > 0.0)
      out.array() +=
          prim.spec.strength * std::pow(rdo, prim.spec.exponent) * falloff;
  }
  return out.cwiseProduct(light.intensity);
}

}  // namespace

Image raytrace_reference(const AnalyticScene& scene, const Camera& cam,
                         const PointLight& light, int supersample) {
  Image img(cam.width, cam.height, 3);
  int ss = std::max(1, supersample);
  double inv = 1.0 / ss;
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      Vec3 acc = Vec3::Zero();
      for (int sy = 0; sy < ss; ++sy) {
        for (int sx = 0; sx < ss; ++sx) {
          double px = x + (sx + 0.5) * inv;
          double py = y + (sy + 0.5) * inv;
          Vec3 dir = cam.ray_unit_z(px, py).normalized();
          auto hit = trace_ray(scene, cam.position, dir, 1e-9, 1e30);
          acc += hit ? shade_hit(scene, *hit, dir, light) : scene.background;
        }
      }
      acc /= double(ss) * ss;
      for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = acc[ch];
    }
  }
  return img;
}

VisibilityProbe visibility_oracle(const AnalyticScene& scene,
                                  const Vec3& point, const PointLight& light) {
  VisibilityProbe probe;
  Vec3 d = point - light.position;
  double dl = d.norm();
  if (dl < 1e-12) return probe;
  Vec3 dir = d / dl;
  // Anything the light sees strictly before the point occludes it; hits
  // within a relative band of the point are the point's own surface.
  double band = std::max(1e-9, 1e-6 * dl);
  auto hit = trace_ray(scene, light.position, dir, 1e-9, dl - band);
  if (hit) {
    probe.lit = false;
    probe.occluder_distance = dl - hit->t;
  }
  return probe;
}

// ---- Scene constructors ---------------------------------------------------

void finalize_bounds(AnalyticScene& scene) {
  if (scene.primitives.empty()) {
    scene.bounds = BoundingSphere{};
    return;
  }
  Vec3 lo = Vec3::Constant(1e30), hi = Vec3::Constant(-1e30);
  auto grow = [&](const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  };
  for (const auto& prim : scene.primitives) {
    switch (prim.kind) {
      case Primitive::Kind::Sphere:
        grow(prim.center - Vec3::Constant(prim.radius));
        grow(prim.center + Vec3::Constant(prim.radius));
        break;
      case Primitive::Kind::Box:
        grow(prim.box_min);
        grow(prim.box_max);
        break;
      case Primitive::Kind::Triangle:
        grow(prim.a);
        grow(prim.b);
        grow(prim.c);
        break;
    }
  }
  scene.bounds.center = 0.5 * (lo + hi);
  scene.bounds.radius = 0.5 * (hi - lo).norm() * 1.02;
}

namespace {

Primitive plate(double half, double thick) {
  Primitive p;
  p.kind = Primitive::Kind::Box;
  p.box_min = Vec3(-half, -half, -thick);
  p.box_max = Vec3(half, half, 0.0);
  p.albedo = Vec3(0.62, 0.62, 0.66);
  return p;
}

}  // namespace

AnalyticScene make_sphere_plate() {
  AnalyticScene s;
  s.primitives.push_back(plate(0.9, 0.06));
  Primitive ball;
  ball.kind = Primitive::Kind::Sphere;
  ball.center = Vec3(0.0, 0.0, 0.38);
  ball.radius = 0.38;
  ball.albedo = Vec3(0.85, 0.35, 0.28);
  s.primitives.push_back(ball);
  finalize_bounds(s);
  return s;
}

AnalyticScene make_boxes() {
  AnalyticScene s;
  s.primitives.push_back(plate(0.9, 0.06));
  Primitive b1;
  b1.kind = Primitive::Kind::Box;
  b1.box_min = Vec3(-0.50, -0.30, 0.0);
  b1.box_max = Vec3(-0.08, 0.12, 0.55);
  b1.albedo = Vec3(0.30, 0.50, 0.80);
  s.primitives.push_back(b1);
  Primitive b2;
  b2.kind = Primitive::Kind::Box;
  b2.box_min = Vec3(0.08, -0.12, 0.0);
  b2.box_max = Vec3(0.52, 0.40, 0.30);
  b2.albedo = Vec3(0.80, 0.70, 0.30);
  b2.spec = SpecularLobe{16.0, 0.10};
  s.primitives.push_back(b2);
  finalize_bounds(s);
  return s;
}

AnalyticScene make_fuzz_proxy(uint64_t seed) {
  AnalyticScene s;
  s.primitives.push_back(plate(0.9, 0.06));
  Rng rng(seed, rng_stream::kDataset);
  const Vec3 core(0.0, 0.0, 0.42);
  const Vec3 spread(0.32, 0.32, 0.30);
  for (int i = 0; i < 140; ++i) {
    Primitive p;
    p.kind = Primitive::Kind::Sphere;
    Vec3 off = rng.in_ball(1.0).cwiseProduct(spread);
    p.radius = rng.uniform(0.025, 0.060);
    p.center = core + off;
    if (p.center.z() - p.radius < 0.02)
      p.center.z() = 0.02 + p.radius;  // keep strands above the plate
    double tint = rng.uniform(-0.08, 0.08);
    p.albedo = (Vec3(0.75, 0.55, 0.35) + Vec3::Constant(tint))
                   .cwiseMax(0.0)
                   .cwiseMin(1.0);
    s.primitives.push_back(p);
  }
  finalize_bounds(s);
  return s;
}

AnalyticScene make_scene(const std::string& name, uint64_t seed) {
  if (name == "sphere-plate") return make_sphere_plate();
  if (name == "boxes") return make_boxes();
  if (name == "fuzz-proxy") return make_fuzz_proxy(seed);
  throw std::invalid_argument("unknown scene: " + name);
}

// ---- Dataset generation ---------------------------------------------------

namespace {

json camera_to_json(const Camera& cam) {
  json j;
  j["position"] = {cam.position.x(), cam.position.y(), cam.position.z()};
  std::vector<double> rot(9);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot[r * 3 + c] = cam.orientation(r, c);
  j["orientation"] = rot;  // world-to-camera, row-major
  j["fov_y"] = cam.fov_y;
  j["width"] = cam.width;
  j["height"] = cam.height;
  j["near"] = cam.near;
  j["far"] = cam.far;
  return j;
}

Camera camera_from_json(const json& j) {
  Camera cam;
  for (int i = 0; i < 3; ++i) cam.position[i] = j.at("position").at(i);
  const auto& rot = j.at("orientation");
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) cam.orientation(r, c) = rot.at(r * 3 + c);
  cam.fov_y = j.at("fov_y");
  cam.width = j.at("width");
  cam.height = j.at("height");
  cam.near = j.at("near");
  cam.far = j.at("far");
  return cam;
}

Vec3 vec3_from_json(const json& j) {
  return Vec3(j.at(0), j.at(1), j.at(2));
}

}  // namespace

DatasetManifest generate_dataset(const AnalyticScene& scene,
                                 const DatasetSpec& spec) {
  if (spec.n_views < 1) throw std::invalid_argument("need n_views >= 1");
  if (spec.out_dir.empty()) throw std::invalid_argument("out_dir required");
  std::filesystem::create_directories(spec.out_dir);

  const Vec3 center = scene.bounds.center;
  const double r = scene.bounds.radius;
  Rng rng(spec.seed, rng_stream::kDataset);

  DatasetManifest m;
  m.width = spec.width;
  m.height = spec.height;
  m.scene_units = r;
  m.center = center;
  m.background = scene.background;

  auto hemi_dir = [&](double z_lo, double z_hi) {
    double z = rng.uniform(z_lo, z_hi);
    double az = rng.uniform(0.0, 2.0 * M_PI);
    double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    return Vec3(s * std::cos(az), s * std::sin(az), z);
  };

  int total_views = spec.n_views + spec.n_test_views;
  double cam_dist = spec.cam_radius_factor * r;
  double fov = 2.0 * std::atan(1.15 / spec.cam_radius_factor);
  for (int v = 0; v < total_views; ++v) {
    Camera cam;
    cam.position = center + cam_dist * hemi_dir(0.25, 0.90);
    cam.orientation = look_at(cam.position, center);
    cam.fov_y = fov;
    cam.width = spec.width;
    cam.height = spec.height;
    cam.near = 0.05 * r;
    cam.far = (spec.cam_radius_factor + 3.0) * r;
    for (int l = 0; l < spec.n_lights; ++l) {
      DatasetRecord rec;
      rec.cam = cam;
      rec.light.position =
          center + spec.light_radius_factor * r * hemi_dir(0.20, 0.95);
      rec.light.intensity = Vec3::Ones();  // calibrated below
      rec.split = v < spec.n_views ? "train" : "test";
      rec.view_id = int(m.records.size());
      char name[64];
      std::snprintf(name, sizeof(name), "view_%04d.ppm", rec.view_id);
      rec.image = name;
      m.records.push_back(rec);
    }
  }

  // Render at unit intensity, then scale everything so the global peak
  // lands at 0.9 (radiance is linear in light intensity).
  std::vector<Image> images;
  images.reserve(m.records.size());
  double peak = 0.0;
  for (const auto& rec : m.records) {
    Image img =
        raytrace_reference(scene, rec.cam, rec.light, spec.supersample);
    for (size_t i = 0; i < img.size(); ++i) peak = std::max(peak, img.raw()[i]);
    images.push_back(std::move(img));
  }
  double scale = peak > 1e-12 ? 0.9 / peak : 1.0;
  m.intensity_scale = scale;
  for (auto& rec : m.records) rec.light.intensity = Vec3::Constant(scale);
  for (size_t i = 0; i < images.size(); ++i) {
    for (auto& v : images[i].raw()) v = std::clamp(v * scale, 0.0, 1.0);
    write_pnm((std::filesystem::path(spec.out_dir) / m.records[i].image)
                  .string(),
              images[i], m.bit_depth);
  }

  save_manifest(
      (std::filesystem::path(spec.out_dir) / "manifest.json").string(), m);
  return m;
}

void save_manifest(const std::string& path, const DatasetManifest& m) {
  json j;
  j["resolution"] = {m.width, m.height};
  j["bit_depth"] = m.bit_depth;
  j["scene_units"] = m.scene_units;
  j["center"] = {m.center.x(), m.center.y(), m.center.z()};
  j["background"] = {m.background.x(), m.background.y(), m.background.z()};
  j["intensity_scale"] = m.intensity_scale;
  j["clamped"] = m.clamped;
  j["format"] = "pnm";
  json recs = json::array();
  for (const auto& rec : m.records) {
    json rj;
    rj["image"] = rec.image;
    rj["camera"] = camera_to_json(rec.cam);
    rj["light"]["position"] = {rec.light.position.x(), rec.light.position.y(),
                               rec.light.position.z()};
    rj["light"]["intensity"] = {rec.light.intensity.x(),
                                rec.light.intensity.y(),
                                rec.light.intensity.z()};
    rj["split"] = rec.split;
    rj["view_id"] = rec.view_id;
    recs.push_back(rj);
  }
  j["records"] = recs;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

DatasetManifest load_manifest(const std::string& path_in) {
  std::string path = path_in;
  if (std::filesystem::is_directory(path))
    path = (std::filesystem::path(path) / "manifest.json").string();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  json j = json::parse(in);
  DatasetManifest m;
  m.width = j.at("resolution").at(0);
  m.height = j.at("resolution").at(1);
  m.bit_depth = j.at("bit_depth");
  m.scene_units = j.at("scene_units");
  m.center = vec3_from_json(j.at("center"));
  m.background = vec3_from_json(j.at("background"));
  m.intensity_scale = j.at("intensity_scale");
  m.clamped = j.at("clamped");
  for (const auto& rj : j.at("records")) {
    DatasetRecord rec;
    rec.image = rj.at("image");
    rec.cam = camera_from_json(rj.at("camera"));
    rec.light.position = vec3_from_json(rj.at("light").at("position"));
    rec.light.intensity = vec3_from_json(rj.at("light").at("intensity"));
    rec.split = rj.at("split");
    rec.view_id = rj.at("view_id");
    m.records.push_back(rec);
  }
  return m;
}

LoadedDataset load_dataset(const std::string& manifest_path) {
  LoadedDataset d;
  d.manifest = load_manifest(manifest_path);
  auto dir = std::filesystem::path(manifest_path);
  if (!std::filesystem::is_directory(dir)) dir = dir.parent_path();
  for (const auto& rec : d.manifest.records) {
    Image img = read_pnm((dir / rec.image).string());
    if (img.width() != d.manifest.width || img.height() != d.manifest.height)
      throw std::runtime_error("image size mismatches manifest: " + rec.image);
    d.images.push_back(std::move(img));
  }
  return d;
}

}  // namespace relight
