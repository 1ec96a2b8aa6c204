#include "relight/raster.hpp"

#include <algorithm>
#include <cassert>
#include <numeric>

namespace relight {

std::vector<int> sort_visible(const std::vector<ProjectedGaussian>& projected) {
  std::vector<int> order(projected.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (projected[a].depth != projected[b].depth)
      return projected[a].depth < projected[b].depth;
    return projected[a].index < projected[b].index;
  });
  return order;
}

namespace {

double screen_radius(const Mat2& cov2d, double sigma) {
  double mid = 0.5 * (cov2d(0, 0) + cov2d(1, 1));
  double det = cov2d.determinant();
  double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
  return sigma * std::sqrt(lambda_max);
}

struct TileBins {
  int tiles_x = 0, tiles_y = 0, tile = 16;
  std::vector<std::vector<int>> lists;  // blend-order positions per tile

  void build(const std::vector<ProjectedGaussian>& proj,
             const std::vector<double>& radius, int width, int height,
             int tile_size) {
    tile = tile_size;
    tiles_x = (width + tile - 1) / tile;
    tiles_y = (height + tile - 1) / tile;
    lists.assign(size_t(tiles_x) * tiles_y, {});
    for (int i = 0; i < int(proj.size()); ++i) {
      const auto& p = proj[i];
      double r = radius[i];
      int x0 = std::max(0, int(std::floor((p.mean2d.x() - r) / tile)));
      int x1 = std::min(tiles_x - 1, int(std::floor((p.mean2d.x() + r) / tile)));
      int y0 = std::max(0, int(std::floor((p.mean2d.y() - r) / tile)));
      int y1 = std::min(tiles_y - 1, int(std::floor((p.mean2d.y() + r) / tile)));
      for (int ty = y0; ty <= y1; ++ty)
        for (int tx = x0; tx <= x1; ++tx)
          lists[size_t(ty) * tiles_x + tx].push_back(i);
    }
  }

  const std::vector<int>& at(int px, int py) const {
    return lists[size_t(py / tile) * tiles_x + px / tile];
  }
};

}  // namespace

SplatFrame splat_blend(const Scene& scene, const Camera& cam,
                       const MatX& payload, BlendMode mode,
                       const RasterOptions& opts) {
  assert(payload.rows() == Eigen::Index(scene.gaussians.size()));
  const int w = cam.width, h = cam.height;
  const int K = int(payload.cols());

  SplatFrame frame;
  frame.width = w;
  frame.height = h;
  frame.payload_dim = K;
  frame.payload.assign(size_t(w) * h * K, 0.0);
  frame.alpha = Image(w, h, 1);
  frame.depth_num = Image(w, h, 1);
  frame.depth_den = Image(w, h, 1);
  frame.offsets.assign(size_t(w) * h + 1, 0);
  frame.payload_rows = payload;
  frame.cam = cam;
  frame.opts = opts;
  frame.mode = mode;
  frame.background = scene.background;

  // project + cull, then depth-sort into blend order
  std::vector<ProjectedGaussian> visible;
  visible.reserve(scene.gaussians.size());
  for (int i = 0; i < int(scene.gaussians.size()); ++i)
    if (auto p = project_gaussian(scene.gaussians[i], cam, i, opts.proj))
      visible.push_back(*p);
  std::vector<int> order = sort_visible(visible);
  frame.projected.reserve(visible.size());
  for (int pos : order) frame.projected.push_back(visible[pos]);

  frame.footprint.resize(frame.projected.size());
  std::vector<double> opacity(frame.projected.size());
  std::vector<Mat2> inv_cov(frame.projected.size());
  for (size_t i = 0; i < frame.projected.size(); ++i) {
    frame.footprint[i] = screen_radius(frame.projected[i].cov2d,
                                       opts.proj.cull_sigma);
    opacity[i] = scene.gaussians[frame.projected[i].index].opacity();
    inv_cov[i] = frame.projected[i].cov2d.inverse();
  }

  TileBins bins;
  bins.build(frame.projected, frame.footprint, w, h, opts.tile_size);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Vec2 pix(x + 0.5, y + 0.5);
      double transmittance = 1.0;
      double acc_alpha = 0.0, acc_num = 0.0, acc_den = 0.0;
      double* acc_payload = frame.payload_at(x, y);

      for (int i : bins.at(x, y)) {
        if (transmittance < opts.term_transmittance) break;
        const auto& p = frame.projected[i];
        if (std::abs(pix.x() - p.mean2d.x()) > frame.footprint[i] ||
            std::abs(pix.y() - p.mean2d.y()) > frame.footprint[i])
          continue;

        const Vec2 d = pix - p.mean2d;
        double quad = d.dot(inv_cov[i] * d);
        double gw = std::exp(-0.5 * quad);
        double a = opacity[i] * gw;
        double wi = a * transmittance;

        for (int k = 0; k < K; ++k) acc_payload[k] += wi * payload(p.index, k);
        acc_alpha += wi;
        acc_num += wi * p.depth;
        acc_den += wi;

        frame.entries.push_back({int32_t(i), a, wi});
        transmittance *= (1.0 - a);
      }

      frame.alpha.at(x, y) = acc_alpha;
      frame.depth_num.at(x, y) = acc_num;
      frame.depth_den.at(x, y) = acc_den;
      frame.offsets[size_t(y) * w + x + 1] = uint32_t(frame.entries.size());
    }
  }

  if (mode == BlendMode::Color) {
    assert(K == 3);
    frame.color = Image(w, h, 3);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double* pl = frame.payload_at(x, y);
        double rest = 1.0 - frame.alpha.at(x, y);
        for (int c = 0; c < 3; ++c)
          frame.color.at(x, y, c) = pl[c] + rest * scene.background[c];
      }
  }
  return frame;
}

MaskedImage weighted_depth(const SplatFrame& frame) {
  MaskedImage depth(frame.width, frame.height);
  for (int y = 0; y < frame.height; ++y)
    for (int x = 0; x < frame.width; ++x) {
      double den = frame.depth_den.at(x, y);
      if (den >= 1e-6) depth.set(x, y, frame.depth_num.at(x, y) / den);
    }
  return depth;
}

ProjectionGrads project_gaussian_backward(const NeuralGaussian& g,
                                          const Camera& cam,
                                          const Vec2& d_mean2d,
                                          const Mat2& d_cov2d, double d_depth) {
  const Vec3 p = cam.to_camera(g.mu);
  const double f = cam.focal();
  const double iz = 1.0 / p.z();

  Eigen::Matrix<double, 2, 3> jac;
  jac << f * iz, 0, -f * p.x() * iz * iz,
      0, f * iz, -f * p.y() * iz * iz;
  const Eigen::Matrix<double, 2, 3> t = jac * cam.orientation;

  const Mat3 rot = build_rotation(g.rot);
  const Vec3 s2 = (2.0 * g.log_scale).array().exp();
  const Mat3 sigma = rot * s2.asDiagonal() * rot.transpose();

  // mean2d and depth paths straight into camera-space position
  Vec3 d_p = jac.transpose() * d_mean2d;
  d_p.z() += d_depth;

  // cov2d = T Sigma T^T
  const Mat3 d_sigma = t.transpose() * d_cov2d * t;
  const Eigen::Matrix<double, 2, 3> d_t =
      (d_cov2d + d_cov2d.transpose()) * t * sigma;
  const Eigen::Matrix<double, 2, 3> d_jac = d_t * cam.orientation.transpose();

  // jac's dependence on camera-space position
  const double iz2 = iz * iz, iz3 = iz2 * iz;
  d_p.x() += d_jac(0, 2) * (-f * iz2);
  d_p.y() += d_jac(1, 2) * (-f * iz2);
  d_p.z() += d_jac(0, 0) * (-f * iz2) + d_jac(1, 1) * (-f * iz2) +
             d_jac(0, 2) * (2 * f * p.x() * iz3) +
             d_jac(1, 2) * (2 * f * p.y() * iz3);

  ProjectionGrads out;
  out.d_mu = cam.orientation.transpose() * d_p;

  // Sigma = R diag(s2) R^T
  const Mat3 d_rot_mat = (d_sigma + d_sigma.transpose()) * rot * s2.asDiagonal();
  const Vec3 d_s2 = (rot.transpose() * d_sigma * rot).diagonal();
  out.d_log_scale = d_s2.array() * 2.0 * s2.array();

  const double qw = g.rot[0], qx = g.rot[1], qy = g.rot[2], qz = g.rot[3];
  Mat3 dR[4];
  dR[0] << 0, -2 * qz, 2 * qy, 2 * qz, 0, -2 * qx, -2 * qy, 2 * qx, 0;
  dR[1] << 0, 2 * qy, 2 * qz, 2 * qy, -4 * qx, -2 * qw, 2 * qz, 2 * qw, -4 * qx;
  dR[2] << -4 * qy, 2 * qx, 2 * qw, 2 * qx, 0, 2 * qz, -2 * qw, 2 * qz, -4 * qy;
  dR[3] << -4 * qz, -2 * qw, 2 * qx, 2 * qw, -4 * qz, 2 * qy, 2 * qx, 2 * qy, 0;
  for (int k = 0; k < 4; ++k)
    out.d_rot[k] = (d_rot_mat.array() * dR[k].array()).sum();

  return out;
}

SplatGrads splat_blend_backward(const Scene& scene, const SplatFrame& frame,
                                const std::vector<double>& d_payload,
                                const Image& d_alpha, const Image& d_depth_num,
                                const Image& d_depth_den) {
  const int w = frame.width, h = frame.height, K = frame.payload_dim;
  const size_t n = scene.gaussians.size();
  const bool has_payload = !d_payload.empty();
  const bool has_alpha = !d_alpha.empty();
  const bool has_num = !d_depth_num.empty();
  const bool has_den = !d_depth_den.empty();
  assert(!has_payload || d_payload.size() == size_t(w) * h * K);

  SplatGrads grads;
  grads.d_payload = MatX::Zero(n, K);
  grads.d_mu.assign(n, Vec3::Zero());
  grads.d_rot.assign(n, Vec4::Zero());
  grads.d_log_scale.assign(n, Vec3::Zero());
  grads.d_opacity_logit.assign(n, 0.0);
  grads.d_mean2d_norm.assign(n, 0.0);

  // per visible Gaussian, accumulated over pixels
  const size_t nv = frame.projected.size();
  std::vector<Vec2> acc_mean2d(nv, Vec2::Zero());
  std::vector<Mat2> acc_cov2d(nv, Mat2::Zero());
  std::vector<double> acc_depth(nv, 0.0);

  std::vector<Mat2> inv_cov(nv);
  std::vector<double> opacity(nv);
  for (size_t i = 0; i < nv; ++i) {
    inv_cov[i] = frame.projected[i].cov2d.inverse();
    opacity[i] = scene.gaussians[frame.projected[i].index].opacity();
  }

  std::vector<double> trans;  // transmittance before each contribution
  std::vector<double> gval;

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const size_t pix_id = size_t(y) * w + x;
      const uint32_t begin = frame.offsets[pix_id];
      const uint32_t end = frame.offsets[pix_id + 1];
      if (begin == end) continue;

      const double* dP = has_payload ? d_payload.data() + pix_id * K : nullptr;
      const double dA = has_alpha ? d_alpha.at(x, y) : 0.0;
      const double dN = has_num ? d_depth_num.at(x, y) : 0.0;
      const double dD = has_den ? d_depth_den.at(x, y) : 0.0;

      const uint32_t m = end - begin;
      trans.resize(m);
      gval.resize(m);
      double t_run = 1.0;
      for (uint32_t j = 0; j < m; ++j) {
        const ContribEntry& e = frame.entries[begin + j];
        trans[j] = t_run;
        t_run *= (1.0 - e.alpha);
        // d(blend outputs)/d(w_j)
        double gv = dA + dD + dN * frame.projected[e.proj].depth;
        if (dP) {
          const int gi = frame.projected[e.proj].index;
          for (int k = 0; k < K; ++k) gv += dP[k] * frame.payload_rows(gi, k);
        }
        gval[j] = gv;
      }

      const Vec2 pix(x + 0.5, y + 0.5);
      double suffix = 0.0;
      for (int j = int(m) - 1; j >= 0; --j) {
        const ContribEntry& e = frame.entries[begin + j];
        const auto& p = frame.projected[e.proj];
        const int gi = p.index;

        double g_j = gval[j];
        // gradient into this contribution's alpha
        double d_a = g_j * trans[j] - suffix / std::max(1.0 - e.alpha, 1e-12);
        suffix += g_j * e.weight;

        // payload gradient: dL/dp_j = w_j * dP
        if (dP)
          for (int k = 0; k < K; ++k) grads.d_payload(gi, k) += e.weight * dP[k];
        // depth gradient: z_j appears in depth_num with weight w_j
        acc_depth[e.proj] += e.weight * dN;

        // alpha = opacity * gw
        const double gw = e.alpha / opacity[e.proj];
        const double d_opacity = d_a * gw;
        const double d_gw = d_a * opacity[e.proj];
        const double op = opacity[e.proj];
        grads.d_opacity_logit[gi] += d_opacity * op * (1.0 - op);

        // gw = exp(-0.5 d^T M d), M = cov2d^-1
        const Vec2 diff = pix - p.mean2d;
        const Vec2 md = inv_cov[e.proj] * diff;
        acc_mean2d[e.proj] += d_gw * gw * md;
        acc_cov2d[e.proj] += d_gw * 0.5 * gw * (md * md.transpose());
      }
    }
  }

  // chain per-Gaussian screen-space gradients through the projection
  for (size_t i = 0; i < nv; ++i) {
    const int gi = frame.projected[i].index;
    grads.d_mean2d_norm[gi] = acc_mean2d[i].norm();
    if (acc_mean2d[i].isZero() && acc_cov2d[i].isZero() && acc_depth[i] == 0.0)
      continue;
    ProjectionGrads pg = project_gaussian_backward(
        scene.gaussians[gi], frame.cam, acc_mean2d[i], acc_cov2d[i],
        acc_depth[i]);
    grads.d_mu[gi] += pg.d_mu;
    grads.d_rot[gi] += pg.d_rot;
    grads.d_log_scale[gi] += pg.d_log_scale;
  }
  return grads;
}

}  // namespace relight
