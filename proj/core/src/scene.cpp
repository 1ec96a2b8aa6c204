#include "relight/scene.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace relight {

Mat3 look_at(const Vec3& position, const Vec3& target, const Vec3& up_hint) {
  Vec3 forward = target - position;
  double len = forward.norm();
  if (len < 1e-12) throw std::runtime_error("look_at: target equals position");
  forward /= len;

  Vec3 up = up_hint;
  if (forward.cross(up).norm() < 1e-6) up = Vec3(0, 1, 0);
  if (forward.cross(up).norm() < 1e-6) up = Vec3(1, 0, 0);

  Vec3 right = forward.cross(up).normalized();
  Vec3 down = forward.cross(right);  // y axis points down in image space

  Mat3 world_to_cam;
  world_to_cam.row(0) = right.transpose();
  world_to_cam.row(1) = down.transpose();
  world_to_cam.row(2) = forward.transpose();
  return world_to_cam;
}

Mat3 build_rotation(const Vec4& q) {
  // (w,x,y,z), assumed near unit; the formula is applied verbatim so the
  // operation stays differentiable in all four components.
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Mat3 build_covariance(const NeuralGaussian& g) {
  Mat3 r = build_rotation(g.rot);
  Vec3 s2 = (2.0 * g.log_scale).array().exp();  // diag of S S^T
  return r * s2.asDiagonal() * r.transpose();
}

std::optional<ProjectedGaussian> project_gaussian(const NeuralGaussian& g,
                                                  const Camera& cam, int index,
                                                  const ProjectionOptions& opts) {
  const Vec3 p = cam.to_camera(g.mu);
  if (p.z() <= cam.near || p.z() >= cam.far) return std::nullopt;

  const double f = cam.focal();
  const double inv_z = 1.0 / p.z();

  ProjectedGaussian out;
  out.index = index;
  out.depth = p.z();
  out.mean2d = cam.project(p);

  // cov2d = J W Sigma W^T J^T with J the perspective Jacobian at mu.
  Eigen::Matrix<double, 2, 3> jac;
  jac << f * inv_z, 0, -f * p.x() * inv_z * inv_z,
      0, f * inv_z, -f * p.y() * inv_z * inv_z;
  Eigen::Matrix<double, 2, 3> t = jac * cam.orientation;
  out.cov2d = t * build_covariance(g) * t.transpose();
  out.cov2d(0, 0) += opts.cov2d_floor;
  out.cov2d(1, 1) += opts.cov2d_floor;

  // cull when the cull_sigma screen extent misses the viewport entirely
  double mid = 0.5 * (out.cov2d(0, 0) + out.cov2d(1, 1));
  double det = out.cov2d.determinant();
  double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
  double radius = opts.cull_sigma * std::sqrt(lambda_max);
  if (out.mean2d.x() + radius < 0 || out.mean2d.x() - radius > cam.width ||
      out.mean2d.y() + radius < 0 || out.mean2d.y() - radius > cam.height)
    return std::nullopt;

  return out;
}

double gaussian_weight_2d(const Vec2& mean2d, const Mat2& cov2d,
                          const Vec2& pixel) {
  const Vec2 d = pixel - mean2d;
  const double det = cov2d(0, 0) * cov2d(1, 1) - cov2d(0, 1) * cov2d(1, 0);
  const double inv_det = 1.0 / det;
  const double quad = inv_det * (cov2d(1, 1) * d.x() * d.x() -
                                 2.0 * cov2d(0, 1) * d.x() * d.y() +
                                 cov2d(0, 0) * d.y() * d.y());
  return std::exp(-0.5 * quad);
}

namespace {

constexpr char kSceneMagic[4] = {'R', 'L', 'S', 'C'};
constexpr uint32_t kSceneVersion = 2;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void save_scene(const std::string& path, const Scene& scene) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_scene: cannot open " + path);

  out.write(kSceneMagic, 4);
  put<uint32_t>(out, kSceneVersion);
  put<uint64_t>(out, scene.gaussians.size());
  for (const auto& g : scene.gaussians) {
    out.write(reinterpret_cast<const char*>(g.mu.data()), 3 * sizeof(double));
    out.write(reinterpret_cast<const char*>(g.rot.data()), 4 * sizeof(double));
    out.write(reinterpret_cast<const char*>(g.log_scale.data()),
              3 * sizeof(double));
    put<double>(out, g.opacity_logit);
    out.write(reinterpret_cast<const char*>(g.feature.data()),
              kFeatureDim * sizeof(double));
  }
  put<double>(out, scene.scene_units);
  out.write(reinterpret_cast<const char*>(scene.center.data()),
            3 * sizeof(double));
  out.write(reinterpret_cast<const char*>(scene.background.data()),
            3 * sizeof(double));
  if (!out) throw std::runtime_error("save_scene: write failed for " + path);
}

Scene load_scene(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_scene: cannot open " + path);

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kSceneMagic, 4) != 0)
    throw std::runtime_error("load_scene: bad magic in " + path);
  uint32_t version = get<uint32_t>(in);
  if (version != kSceneVersion)
    throw std::runtime_error("load_scene: unsupported version in " + path);

  Scene scene;
  uint64_t count = get<uint64_t>(in);
  scene.gaussians.resize(count);
  for (auto& g : scene.gaussians) {
    in.read(reinterpret_cast<char*>(g.mu.data()), 3 * sizeof(double));
    in.read(reinterpret_cast<char*>(g.rot.data()), 4 * sizeof(double));
    in.read(reinterpret_cast<char*>(g.log_scale.data()), 3 * sizeof(double));
    g.opacity_logit = get<double>(in);
    in.read(reinterpret_cast<char*>(g.feature.data()),
            kFeatureDim * sizeof(double));
  }
  scene.scene_units = get<double>(in);
  in.read(reinterpret_cast<char*>(scene.center.data()), 3 * sizeof(double));
  in.read(reinterpret_cast<char*>(scene.background.data()), 3 * sizeof(double));
  if (!in) throw std::runtime_error("load_scene: truncated file " + path);
  return scene;
}

}  // namespace relight
