#include "relight/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "relight/checkpoint.hpp"
#include "relight/rng.hpp"

namespace relight {

DecoderConfig decoder_config(const RunConfig& cfg) {
  DecoderConfig dc;
  dc.hidden = cfg.decoder_hidden;
  dc.hidden_layers = cfg.decoder_layers;
  dc.cue_enabled = cfg.cue_enabled;
  return dc;
}

DepthRefineConfig phi_config(const RunConfig& cfg) {
  DepthRefineConfig pc;
  pc.hidden = cfg.phi_hidden;
  pc.hidden_layers = cfg.phi_layers;
  return pc;
}

RasterOptions raster_options(const RunConfig& cfg) {
  RasterOptions ro;
  ro.proj.cov2d_floor = cfg.cov2d_floor;
  ro.proj.cull_sigma = cfg.cull_sigma;
  ro.term_transmittance = cfg.term_transmittance;
  return ro;
}

namespace {

void reset_gaussian_moments(TrainState& s) {
  const int n = s.num_gaussians();
  s.m_mu = MatX::Zero(n, 3);
  s.v_mu = MatX::Zero(n, 3);
  s.m_rot = MatX::Zero(n, 4);
  s.v_rot = MatX::Zero(n, 4);
  s.m_scale = MatX::Zero(n, 3);
  s.v_scale = MatX::Zero(n, 3);
  s.m_op = VecX::Zero(n);
  s.v_op = VecX::Zero(n);
  s.m_feat = MatX::Zero(n, kFeatureDim);
  s.v_feat = MatX::Zero(n, kFeatureDim);
  s.grad_accum = VecX::Zero(n);
  s.grad_count = VecX::Zero(n);
}

}  // namespace

TrainState init_train_state(const RunConfig& cfg,
                            const DatasetManifest& manifest) {
  validate(cfg);
  TrainState s;
  s.cfg = cfg;
  s.seed = cfg.seed;

  s.scene.scene_units = manifest.scene_units;
  s.scene.center = manifest.center;
  s.scene.background = manifest.background;

  Rng rng(cfg.seed, rng_stream::kInit);
  const double r = manifest.scene_units;
  // Expected nearest-neighbor spacing of uniform points in a ball.
  const double spacing =
      r * std::cbrt(1.0 / std::max(1, cfg.init_gaussians));
  const double opacity_logit = std::log(0.1 / 0.9);
  s.scene.gaussians.reserve(cfg.init_gaussians);
  for (int i = 0; i < cfg.init_gaussians; ++i) {
    NeuralGaussian g;
    g.mu = manifest.center + rng.in_ball(r);
    g.log_scale = Vec3::Constant(std::log(spacing));
    g.opacity_logit = opacity_logit;
    for (int k = 0; k < kFeatureDim; ++k) g.feature[k] = 0.1 * rng.normal();
    s.scene.gaussians.push_back(g);
  }

  s.theta = Decoder(decoder_config(cfg));
  s.theta.init(rng);
  s.phi = DepthRefine(phi_config(cfg));
  s.phi.init(rng);  // zero head: refinement starts as the identity

  s.adam_theta.reset(s.theta.mlp().num_params());
  s.adam_phi.reset(s.phi.mlp().num_params());
  reset_gaussian_moments(s);
  return s;
}

LossResult photometric_loss(const Image& pred, const Image& target,
                            double lambda) {
  LossResult out;
  Image d_l1, d_ssim;
  out.l1 = l1(pred, target, &d_l1);
  out.ssim = ssim(pred, target, &d_ssim);
  out.total = (1.0 - lambda) * out.l1 + lambda * (1.0 - out.ssim);
  out.d_image = Image(pred.width(), pred.height(), pred.channels());
  for (size_t i = 0; i < out.d_image.size(); ++i)
    out.d_image.raw()[i] =
        (1.0 - lambda) * d_l1.raw()[i] - lambda * d_ssim.raw()[i];
  return out;
}

namespace {

void switch_to_deferred(TrainState& s) {
  s.stage = Stage::Deferred;
  // Fresh decoder weights for the deferred formulation; the learned latents
  // stay in place as initialization.
  Rng rng(s.seed, rng_stream::kStage2);
  s.theta.init(rng);
  s.adam_theta.reset(s.theta.mlp().num_params());
}

void adam_vec(VecX& param, const VecX& grad, AdamState& a, double lr,
              const OptimConfig& o) {
  a.t += 1;
  double bc1 = 1.0 - std::pow(o.beta1, double(a.t));
  double bc2 = 1.0 - std::pow(o.beta2, double(a.t));
  a.m = o.beta1 * a.m + (1.0 - o.beta1) * grad;
  a.v = o.beta2 * a.v + (1.0 - o.beta2) * grad.cwiseProduct(grad);
  param -= lr * (a.m / bc1).cwiseQuotient(
                    ((a.v / bc2).cwiseSqrt().array() + o.eps).matrix());
}

// One scalar Adam update against stored moment cells; bias corrections are
// precomputed by the caller from the shared step count.
inline void adam_cell(double& p, double& m, double& v, double g, double lr,
                      double bc1, double bc2, const OptimConfig& o) {
  m = o.beta1 * m + (1.0 - o.beta1) * g;
  v = o.beta2 * v + (1.0 - o.beta2) * g * g;
  p -= lr * (m / bc1) / (std::sqrt(v / bc2) + o.eps);
}

double position_lr(const TrainState& s) {
  const OptimConfig& o = s.cfg.optim;
  double frac = double(s.iteration) / double(s.cfg.total_iterations);
  return o.lr_position * s.scene.scene_units *
         std::pow(o.lr_position_final, frac);
}

void abort_dump(const TrainState& s, const StepStats& st) {
  if (s.cfg.run_dir.empty()) return;
  std::filesystem::create_directories(s.cfg.run_dir);
  std::ofstream out(std::filesystem::path(s.cfg.run_dir) / "abort_state.txt");
  out << "non-finite loss at iteration " << st.iteration << "\n"
      << "stage " << (st.stage == Stage::Forward ? "forward" : "deferred")
      << "\nloss " << st.loss << " l1 " << st.l1 << " ssim " << st.ssim
      << "\ngaussians " << s.num_gaussians() << "\n";
  checkpoint_save(s, (std::filesystem::path(s.cfg.run_dir) / "abort_dump.ckpt")
                         .string());
}

}  // namespace

StepStats train_step(TrainState& state, const TrainView& view) {
  const RunConfig& cfg = state.cfg;
  Stage desired =
      (cfg.deferred_enabled && state.iteration >= cfg.stage_switch)
          ? Stage::Deferred
          : Stage::Forward;
  if (desired == Stage::Deferred && state.stage == Stage::Forward)
    switch_to_deferred(state);

  RasterOptions ro = raster_options(cfg);
  StepStats st;
  st.iteration = state.iteration;
  st.stage = state.stage;
  st.n_gaussians = state.num_gaussians();

  RenderGrads rg;
  LossResult loss;
  if (state.stage == Stage::Forward) {
    ForwardRender fr =
        render_forward(state.scene, view.cam, view.light, state.theta, ro);
    loss = photometric_loss(fr.image, view.image, cfg.loss_lambda);
    st.loss = loss.total;
    st.l1 = loss.l1;
    st.ssim = loss.ssim;
    if (!std::isfinite(loss.total)) {
      abort_dump(state, st);
      throw std::runtime_error("non-finite loss in forward stage");
    }
    rg = render_forward_backward(state.scene, fr, view.light, state.theta,
                                 loss.d_image);
  } else {
    const ShadowCueMap* cuep = nullptr;
    if (cfg.cue_enabled) {
      const DepthRefine* phi_for_cue =
          cfg.refine_enabled ? &state.phi : nullptr;
      cuep = &state.cue_cache.get(
          view.view_id, state.iteration, cfg.cue_refresh_every, [&] {
            return compute_view_cue(state.scene, view.cam, view.light,
                                    phi_for_cue, ro);
          });
    }
    DeferredRender dr = render_deferred(state.scene, view.cam, view.light,
                                        state.theta, state.phi, cuep, ro);
    loss = photometric_loss(dr.image, view.image, cfg.loss_lambda);
    st.loss = loss.total;
    st.l1 = loss.l1;
    st.ssim = loss.ssim;
    if (!std::isfinite(loss.total)) {
      abort_dump(state, st);
      throw std::runtime_error("non-finite loss in deferred stage");
    }
    rg = render_deferred_backward(state.scene, dr, view.light, state.theta,
                                  state.phi, loss.d_image);
  }

  const OptimConfig& o = cfg.optim;
  adam_vec(state.theta.mlp().params(), rg.d_theta, state.adam_theta,
           o.lr_theta, o);
  if (state.stage == Stage::Deferred && cfg.refine_enabled)
    adam_vec(state.phi.mlp().params(), rg.d_phi, state.adam_phi, o.lr_phi, o);

  const double lr_pos = position_lr(state);
  state.geom_t += 1;
  const double bc1 = 1.0 - std::pow(o.beta1, double(state.geom_t));
  const double bc2 = 1.0 - std::pow(o.beta2, double(state.geom_t));
  const int n = state.num_gaussians();
  const double ndc_scale = 0.5 * view.cam.width;  // pixel grads -> NDC grads
  for (int i = 0; i < n; ++i) {
    NeuralGaussian& g = state.scene.gaussians[i];
    for (int k = 0; k < 3; ++k) {
      adam_cell(g.mu[k], state.m_mu(i, k), state.v_mu(i, k), rg.d_mu[i][k],
                lr_pos, bc1, bc2, o);
      adam_cell(g.log_scale[k], state.m_scale(i, k), state.v_scale(i, k),
                rg.d_log_scale[i][k], o.lr_scale, bc1, bc2, o);
    }
    for (int k = 0; k < 4; ++k)
      adam_cell(g.rot[k], state.m_rot(i, k), state.v_rot(i, k),
                rg.d_rot[i][k], o.lr_rotation, bc1, bc2, o);
    adam_cell(g.opacity_logit, state.m_op[i], state.v_op[i],
              rg.d_opacity_logit[i], o.lr_opacity, bc1, bc2, o);
    for (int k = 0; k < kFeatureDim; ++k)
      adam_cell(g.feature[k], state.m_feat(i, k), state.v_feat(i, k),
                rg.d_feature(i, k), o.lr_feature, bc1, bc2, o);
    g.rot.normalize();

    double gn = rg.d_mean2d_norm[i] * ndc_scale;
    if (gn > 0.0) {
      state.grad_accum[i] += gn;
      state.grad_count[i] += 1.0;
    }
  }

  state.iteration += 1;
  return st;
}

void density_control(TrainState& state) {
  const DensifyConfig& dc = state.cfg.densify;
  const double su = state.scene.scene_units;
  const int n = state.num_gaussians();
  Rng rng(state.seed + uint64_t(state.iteration), rng_stream::kDensify);

  // Survivors first, then hand the remaining capacity to the candidates with
  // the largest averaged screen-space gradients; each densified gaussian
  // costs one net slot (clone adds a copy, split swaps one for two).
  std::vector<char> keep(n, 0), grow(n, 0);
  std::vector<std::pair<double, int>> cand;
  int survivors = 0;
  for (int i = 0; i < n; ++i) {
    if (state.scene.gaussians[i].opacity() < dc.opacity_floor) continue;
    keep[i] = 1;
    ++survivors;
    double avg = state.grad_count[i] > 0.0
                     ? state.grad_accum[i] / state.grad_count[i]
                     : 0.0;
    if (avg > dc.grad_threshold) cand.emplace_back(avg, i);
  }
  std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  int budget = std::max(0, dc.max_gaussians - survivors);
  for (size_t c = 0; c < cand.size() && int(c) < budget; ++c)
    grow[cand[c].second] = 1;

  std::vector<NeuralGaussian> out;
  std::vector<int> parent;  // source moment row, -1 = fresh
  out.reserve(size_t(n) + 64);
  parent.reserve(size_t(n) + 64);

  for (int i = 0; i < n; ++i) {
    const NeuralGaussian& g = state.scene.gaussians[i];
    if (!keep[i]) continue;  // prune
    if (!grow[i]) {
      out.push_back(g);
      parent.push_back(i);
      continue;
    }
    double smax = std::exp(g.log_scale.maxCoeff());
    if (smax <= dc.clone_scale_limit * su) {
      // Clone: exact duplicate; the pair separates through optimization.
      out.push_back(g);
      parent.push_back(i);
      out.push_back(g);
      parent.push_back(-1);
    } else {
      // Split into two children sampled inside the parent footprint.
      Mat3 R = build_rotation(g.rot);
      Vec3 sc = g.log_scale.array().exp();
      for (int c = 0; c < 2; ++c) {
        NeuralGaussian child = g;
        Vec3 local(rng.normal(), rng.normal(), rng.normal());
        child.mu = g.mu + R * local.cwiseProduct(sc);
        child.log_scale = g.log_scale - Vec3::Constant(std::log(1.6));
        out.push_back(child);
        parent.push_back(-1);
      }
    }
  }

  const int m = int(out.size());
  MatX m_mu = MatX::Zero(m, 3), v_mu = MatX::Zero(m, 3);
  MatX m_rot = MatX::Zero(m, 4), v_rot = MatX::Zero(m, 4);
  MatX m_scale = MatX::Zero(m, 3), v_scale = MatX::Zero(m, 3);
  VecX m_op = VecX::Zero(m), v_op = VecX::Zero(m);
  MatX m_feat = MatX::Zero(m, kFeatureDim), v_feat = MatX::Zero(m, kFeatureDim);
  for (int i = 0; i < m; ++i) {
    int p = parent[i];
    if (p < 0) continue;
    m_mu.row(i) = state.m_mu.row(p);
    v_mu.row(i) = state.v_mu.row(p);
    m_rot.row(i) = state.m_rot.row(p);
    v_rot.row(i) = state.v_rot.row(p);
    m_scale.row(i) = state.m_scale.row(p);
    v_scale.row(i) = state.v_scale.row(p);
    m_op[i] = state.m_op[p];
    v_op[i] = state.v_op[p];
    m_feat.row(i) = state.m_feat.row(p);
    v_feat.row(i) = state.v_feat.row(p);
  }
  state.scene.gaussians = std::move(out);
  state.m_mu = std::move(m_mu);
  state.v_mu = std::move(v_mu);
  state.m_rot = std::move(m_rot);
  state.v_rot = std::move(v_rot);
  state.m_scale = std::move(m_scale);
  state.v_scale = std::move(v_scale);
  state.m_op = std::move(m_op);
  state.v_op = std::move(v_op);
  state.m_feat = std::move(m_feat);
  state.v_feat = std::move(v_feat);
  state.grad_accum = VecX::Zero(m);
  state.grad_count = VecX::Zero(m);
}

void run_training(TrainState& state, const std::vector<TrainView>& views,
                  const TrainCallbacks& cb) {
  if (views.empty()) throw std::invalid_argument("no training views");
  const RunConfig& cfg = state.cfg;
  const int nv = int(views.size());

  std::vector<uint32_t> order;
  int64_t order_epoch = -1;
  while (state.iteration < cfg.total_iterations) {
    int64_t epoch = state.iteration / nv;
    int pos = int(state.iteration % nv);
    if (epoch != order_epoch) {
      Rng rng(state.seed + uint64_t(epoch), rng_stream::kEpoch);
      order = rng.permutation(nv);
      order_epoch = epoch;
    }
    StepStats st = train_step(state, views[order[pos]]);

    int64_t effective_stop = std::min(
        cfg.densify.stop,
        cfg.deferred_enabled ? cfg.stage_switch - 1 : cfg.total_iterations);
    if (st.stage == Stage::Forward && st.iteration >= cfg.densify.start &&
        st.iteration <= effective_stop &&
        st.iteration % cfg.densify.interval == 0)
      density_control(state);

    if ((st.iteration + 1) % cfg.log_every == 0 && cb.on_log) cb.on_log(st);
    if ((st.iteration + 1) % cfg.checkpoint_every == 0 &&
        state.iteration < cfg.total_iterations && cb.on_checkpoint)
      cb.on_checkpoint(state, false);
  }
  if (cb.on_checkpoint) cb.on_checkpoint(state, true);
}

std::vector<TrainView> make_train_views(const LoadedDataset& ds,
                                        const std::string& split) {
  std::vector<TrainView> views;
  for (size_t i = 0; i < ds.manifest.records.size(); ++i) {
    const DatasetRecord& rec = ds.manifest.records[i];
    if (rec.split != split) continue;
    TrainView v;
    v.image = ds.images[i];
    v.cam = rec.cam;
    v.light = rec.light;
    v.view_id = rec.view_id;
    views.push_back(std::move(v));
  }
  return views;
}

}  // namespace relight
