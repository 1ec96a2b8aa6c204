#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cstdio>
#include <filesystem>

#include "helpers.hpp"
#include "relight/scene.hpp"

using namespace relight;
using namespace relight::testing;

TEST_CASE("scene: quaternion rotation is orthonormal") {
  Rng rng(2, 1);
  for (int t = 0; t < 50; ++t) {
    Vec4 q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    q.normalize();
    Mat3 r = build_rotation(q);
    CHECK((r * r.transpose() - Mat3::Identity()).norm() < 1e-12);
    CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("scene: covariance is PSD with exp(2 log_scale) spectrum") {
  Rng rng(3, 1);
  for (int t = 0; t < 50; ++t) {
    NeuralGaussian g;
    Vec4 q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    g.rot = q.normalized();
    for (int a = 0; a < 3; ++a) g.log_scale[a] = rng.uniform(-3.0, 0.5);
    Mat3 cov = build_covariance(g);
    CHECK((cov - cov.transpose()).norm() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    Vec3 expect = (2.0 * g.log_scale).array().exp();
    std::sort(expect.data(), expect.data() + 3);
    for (int a = 0; a < 3; ++a) {
      CHECK(eig.eigenvalues()[a] >= -1e-14);
      CHECK(eig.eigenvalues()[a] == doctest::Approx(expect[a]).epsilon(1e-9));
    }
  }
}

TEST_CASE("scene: look_at aims the camera z axis at the target") {
  Rng rng(4, 1);
  for (int t = 0; t < 20; ++t) {
    Vec3 pos = 3.0 * rng.unit_vector();
    Vec3 target = rng.in_ball(0.5);
    Camera cam;
    cam.position = pos;
    cam.orientation = look_at(pos, target);
    cam.width = cam.height = 8;
    Vec3 tc = cam.to_camera(target);
    CHECK(tc.x() == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(tc.y() == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(tc.z() == doctest::Approx((target - pos).norm()).epsilon(1e-10));
    CHECK((cam.orientation * cam.orientation.transpose() - Mat3::Identity())
              .norm() < 1e-12);
  }
}

TEST_CASE("scene: camera transforms invert and rays hit projections") {
  Rng rng(5, 1);
  Camera cam = random_camera(rng, 33);
  for (int t = 0; t < 30; ++t) {
    Vec3 p = rng.in_ball(0.6);
    CHECK((cam.to_world(cam.to_camera(p)) - p).norm() < 1e-12);
    Vec3 pc = cam.to_camera(p);
    if (pc.z() <= 0) continue;
    Vec2 pix = cam.project(pc);
    Vec3 again = cam.position + pc.z() * cam.ray_unit_z(pix.x(), pix.y());
    CHECK((again - p).norm() < 1e-9);
  }
}

TEST_CASE("scene: on-axis gaussian projects to the principal point") {
  Camera cam;
  cam.position = Vec3(0, 0, -2);
  cam.orientation = look_at(cam.position, Vec3::Zero(), Vec3(0, 1, 0));
  cam.fov_y = 0.8;
  cam.width = cam.height = 32;
  NeuralGaussian g;
  g.mu = Vec3::Zero();
  g.log_scale = Vec3::Constant(std::log(0.1));
  auto p = project_gaussian(g, cam);
  REQUIRE(p.has_value());
  CHECK(p->mean2d.x() == doctest::Approx(cam.cx()).epsilon(1e-10));
  CHECK(p->mean2d.y() == doctest::Approx(cam.cy()).epsilon(1e-10));
  CHECK(p->depth == doctest::Approx(2.0).epsilon(1e-12));
  // isotropic gaussian on axis: cov2d = (f * s / z)^2 I + floor I
  double expect = std::pow(cam.focal() * 0.1 / 2.0, 2) + 0.3;
  CHECK(p->cov2d(0, 0) == doctest::Approx(expect).epsilon(1e-9));
  CHECK(p->cov2d(1, 1) == doctest::Approx(expect).epsilon(1e-9));
  CHECK(std::abs(p->cov2d(0, 1)) < 1e-9);
}

TEST_CASE("scene: projection culls behind-camera and far off-axis gaussians") {
  Camera cam;
  cam.position = Vec3(0, 0, -2);
  cam.orientation = look_at(cam.position, Vec3::Zero(), Vec3(0, 1, 0));
  cam.fov_y = 0.5;
  cam.width = cam.height = 16;
  NeuralGaussian g;
  g.log_scale = Vec3::Constant(std::log(0.05));
  g.mu = Vec3(0, 0, -3);  // behind
  CHECK_FALSE(project_gaussian(g, cam).has_value());
  g.mu = Vec3(50, 0, 0);  // far outside the frustum
  CHECK_FALSE(project_gaussian(g, cam).has_value());
  g.mu = Vec3(0, 0, 0);
  CHECK(project_gaussian(g, cam).has_value());
}

TEST_CASE("scene: cov2d floor keeps tiny gaussians invertible") {
  Rng rng(6, 1);
  Camera cam = random_camera(rng, 24);
  NeuralGaussian g;
  g.mu = Vec3::Zero();
  g.log_scale = Vec3::Constant(std::log(1e-5));
  auto p = project_gaussian(g, cam);
  REQUIRE(p.has_value());
  CHECK(p->cov2d(0, 0) >= 0.3);
  CHECK(p->cov2d(1, 1) >= 0.3);
  CHECK(p->cov2d.determinant() > 0.0);
}

TEST_CASE("scene: gaussian_weight_2d peaks at one") {
  Mat2 cov;
  cov << 2.0, 0.3, 0.3, 1.0;
  Vec2 mean(4.0, 5.0);
  CHECK(gaussian_weight_2d(mean, cov, mean) == 1.0);
  Vec2 off(5.0, 5.0);
  Vec2 d = off - mean;
  double expect = std::exp(-0.5 * d.dot(cov.inverse() * d));
  CHECK(gaussian_weight_2d(mean, cov, off) == doctest::Approx(expect));
}

TEST_CASE("scene: container io round trips") {
  Rng rng(7, 1);
  Scene s = random_scene(rng, 9);
  s.center = Vec3(0.4, -0.1, 0.25);
  auto path =
      (std::filesystem::temp_directory_path() / "relight_scene_rt.bin").string();
  save_scene(path, s);
  Scene back = load_scene(path);
  REQUIRE(back.gaussians.size() == s.gaussians.size());
  CHECK(back.scene_units == s.scene_units);
  CHECK((back.center - s.center).norm() == 0.0);
  CHECK((back.background - s.background).norm() == 0.0);
  for (size_t i = 0; i < s.gaussians.size(); ++i) {
    CHECK((back.gaussians[i].mu - s.gaussians[i].mu).norm() == 0.0);
    CHECK((back.gaussians[i].rot - s.gaussians[i].rot).norm() == 0.0);
    CHECK((back.gaussians[i].log_scale - s.gaussians[i].log_scale).norm() == 0.0);
    CHECK(back.gaussians[i].opacity_logit == s.gaussians[i].opacity_logit);
    CHECK((back.gaussians[i].feature - s.gaussians[i].feature).norm() == 0.0);
  }
  std::remove(path.c_str());
}
