// Acceptance gate: ten numbered end-to-end criteria, printed one pass/fail
// line each. Heavy artifacts (synthetic datasets, trained runs) are cached
// under a work directory (--work-dir, or RELIGHT_ACCEPT_DIR, default
// ./acceptance_work) and reused when the stored config still matches, so
// reruns are cheap; the determinism criterion always retrains from scratch.
//
// Exit code 0 iff every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "relight/checkpoint.hpp"
#include "relight/metrics.hpp"
#include "relight/render.hpp"
#include "relight/synth.hpp"
#include "relight/train.hpp"

namespace fs = std::filesystem;
using namespace relight;
using namespace relight::testing;

namespace {

fs::path g_work;

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  }
};

std::string fmt(double v, int prec = 2) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(prec) << v;
  return o.str();
}

std::string sci(double v) {
  std::ostringstream o;
  o << std::scientific << std::setprecision(2) << v;
  return o.str();
}

struct Result {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0;       // criterion's own work
  double prep_seconds = 0;  // shared-artifact builds it had to trigger
};

void print_result(const Result& r) {
  std::cout << "criterion " << r.id << " (" << r.name
            << "): " << (r.pass ? "PASS" : "FAIL") << " - " << r.detail << " ["
            << fmt(r.seconds, 1) << "s";
  if (r.prep_seconds > 0.5)
    std::cout << " + " << fmt(r.prep_seconds, 1) << "s shared prep";
  std::cout << "]" << std::endl;
}

// ---- shared artifacts -------------------------------------------------------

// Path fields don't affect training math; ignore them when deciding whether a
// cached run still matches the requested configuration.
std::string cfg_fingerprint(RunConfig c) {
  c.preset.clear();
  c.dataset.clear();
  c.run_dir.clear();
  return to_json_string(c);
}

LoadedDataset ensure_dataset(const std::string& tag, double* prep_seconds) {
  fs::path dir = g_work / ("ds_" + tag);
  if (fs::exists(dir / "manifest.json")) return load_dataset(dir.string());
  Timer t;
  DatasetSpec spec;
  spec.n_views = 50;
  spec.n_test_views = 10;
  spec.width = spec.height = 64;
  spec.seed = 11;
  spec.out_dir = dir.string();
  AnalyticScene scene =
      make_scene(tag == "sp" ? "sphere-plate" : "fuzz-proxy", spec.seed);
  generate_dataset(scene, spec);
  if (prep_seconds) *prep_seconds += t.seconds();
  return load_dataset(dir.string());
}

struct RunArtifact {
  TrainState state;
  fs::path dir;
  double train_seconds = 0;  // 0 when served from the cache
};

RunArtifact ensure_run(const std::string& name, RunConfig want,
                       const LoadedDataset& ds) {
  RunArtifact out;
  out.dir = g_work / name;
  want.run_dir = out.dir.string();
  fs::path fin = out.dir / "final.ckpt";
  if (fs::exists(fin)) {
    TrainState st = checkpoint_load(fin.string());
    if (cfg_fingerprint(st.cfg) == cfg_fingerprint(want) &&
        st.iteration == want.total_iterations) {
      out.state = std::move(st);
      return out;
    }
  }
  fs::create_directories(out.dir);
  Timer t;
  TrainState st = init_train_state(want, ds.manifest);
  std::vector<TrainView> views = make_train_views(ds, "train");
  TrainCallbacks cb;
  cb.on_checkpoint = [&](const TrainState& s, bool final) {
    char fname[64];
    std::snprintf(fname, sizeof(fname), "ckpt_%07lld.ckpt",
                  (long long)s.iteration);
    checkpoint_save(s, (out.dir / fname).string());
    if (final) checkpoint_save(s, fin.string());
  };
  run_training(st, views, cb);
  out.train_seconds = t.seconds();
  out.state = std::move(st);
  return out;
}

// Continue a run from a mid-training checkpoint under a mutated config. Used
// by the ablation criterion: branching at the stage boundary gives every arm
// the identical stage-1 geometry, isolating the ablated component.
RunArtifact ensure_branch(const std::string& name, const fs::path& base_ckpt,
                          const std::function<void(RunConfig&)>& mutate,
                          const LoadedDataset& ds) {
  RunArtifact out;
  out.dir = g_work / name;
  fs::path fin = out.dir / "final.ckpt";

  TrainState st = checkpoint_load(base_ckpt.string());
  RunConfig want = st.cfg;
  mutate(want);
  want.run_dir = out.dir.string();

  if (fs::exists(fin)) {
    TrainState cached = checkpoint_load(fin.string());
    if (cfg_fingerprint(cached.cfg) == cfg_fingerprint(want) &&
        cached.iteration == want.total_iterations) {
      out.state = std::move(cached);
      return out;
    }
  }
  fs::create_directories(out.dir);
  Timer t;
  bool cue_flip = want.cue_enabled != st.cfg.cue_enabled;
  st.cfg = want;
  if (cue_flip) {
    // The decoder input width changes with the cue flag; the stage switch
    // re-initializes the weights anyway, so only the shape matters here.
    st.theta = Decoder(decoder_config(st.cfg));
    st.adam_theta.reset(st.theta.mlp().num_params());
    st.cue_cache.clear();
  }
  std::vector<TrainView> views = make_train_views(ds, "train");
  run_training(st, views, {});
  checkpoint_save(st, fin.string());
  out.train_seconds = t.seconds();
  out.state = std::move(st);
  return out;
}

// ---- evaluation (mirrors the CLI's auto-mode rendering) ---------------------

Image render_auto(const TrainState& s, const Camera& cam,
                  const PointLight& light) {
  RasterOptions ro = raster_options(s.cfg);
  if (s.stage == Stage::Forward)
    return render_forward(s.scene, cam, light, s.theta, ro).image;
  ShadowCueMap cue;
  const ShadowCueMap* cuep = nullptr;
  if (s.cfg.cue_enabled) {
    cue = compute_view_cue(s.scene, cam, light,
                           s.cfg.refine_enabled ? &s.phi : nullptr, ro);
    cuep = &cue;
  }
  return render_deferred(s.scene, cam, light, s.theta, s.phi, cuep, ro).image;
}

struct SplitScore {
  double psnr = 0, ssim = 0;
  int views = 0;
};

SplitScore eval_split(const TrainState& s, const LoadedDataset& ds,
                      const std::string& split) {
  std::vector<ViewMetrics> vm;
  for (size_t i = 0; i < ds.manifest.records.size(); ++i) {
    const DatasetRecord& rec = ds.manifest.records[i];
    if (rec.split != split) continue;
    Image img = render_auto(s, rec.cam, rec.light);
    vm.push_back({rec.view_id, psnr(img, ds.images[i]), ssim(img, ds.images[i])});
  }
  MetricReport rep = aggregate_metrics(std::move(vm));
  return {rep.psnr, rep.ssim, int(rep.views.size())};
}

// ---- criterion 1: gradient correctness --------------------------------------

Result crit_gradients() {
  Result r{1, "gradient correctness"};
  Timer timer;
  Rng rng(7101, 1);
  GradCheck gc;
  const double h = 1e-5;

  auto check_scene = [&](int n, bool deferred, bool cue_on, uint64_t salt) {
    Scene scene = random_scene(rng, n);
    Camera cam = random_camera(rng, 16);
    PointLight light = random_light(rng);
    RasterOptions ro;

    DecoderConfig dc;
    dc.hidden = 8;
    dc.hidden_layers = 1;
    dc.cue_enabled = cue_on;
    Decoder theta(dc);
    {
      Rng ri(7110 + salt, 2);
      theta.init(ri);
    }
    DepthRefineConfig pc;
    pc.hidden = 8;
    pc.hidden_layers = 1;
    DepthRefine phi(pc);
    {
      Rng ri(7130 + salt, 3);
      phi.init(ri);
      // the zero output head would hide the hidden layers from both the
      // analytic and the numeric gradient; perturb everything
      for (Eigen::Index j = 0; j < phi.mlp().params().size(); ++j)
        phi.mlp().params()[j] += 0.05 * ri.normal();
    }

    ShadowCueMap cue;
    const ShadowCueMap* cuep = nullptr;
    if (deferred && cue_on) {
      cue = compute_view_cue(scene, cam, light, &phi, ro);
      cuep = &cue;  // held fixed: the cue is out-of-graph conditioning
    }

    Image weights(16, 16, 3);
    for (double& v : weights.raw()) v = rng.uniform();
    auto loss = [&]() {
      Image img = deferred
                      ? render_deferred(scene, cam, light, theta, phi, cuep, ro)
                            .image
                      : render_forward(scene, cam, light, theta, ro).image;
      double s = 0;
      for (size_t i = 0; i < img.size(); ++i) s += img.raw()[i] * weights.raw()[i];
      return s;
    };

    RenderGrads rg;
    if (deferred) {
      DeferredRender dr = render_deferred(scene, cam, light, theta, phi, cuep, ro);
      rg = render_deferred_backward(scene, dr, light, theta, phi, weights);
    } else {
      ForwardRender fr = render_forward(scene, cam, light, theta, ro);
      rg = render_forward_backward(scene, fr, light, theta, weights);
    }

    const std::string tag = deferred ? "def/" : "fwd/";
    for (int i = 0; i < n; ++i) {
      NeuralGaussian& g = scene.gaussians[i];
      for (int k = 0; k < 3; ++k)
        gc.add(tag + "mu", rg.d_mu[i][k], central_diff(loss, g.mu[k], h));
      for (int k = 0; k < 4; ++k)
        gc.add(tag + "rot", rg.d_rot[i][k], central_diff(loss, g.rot[k], h));
      for (int k = 0; k < 3; ++k)
        gc.add(tag + "log_scale", rg.d_log_scale[i][k],
               central_diff(loss, g.log_scale[k], h));
      gc.add(tag + "opacity", rg.d_opacity_logit[i],
             central_diff(loss, g.opacity_logit, h));
      for (int k = 0; k < kFeatureDim; ++k)
        gc.add(tag + "feature", rg.d_feature(i, k),
               central_diff(loss, g.feature[k], h));
    }
    VecX& tp = theta.mlp().params();
    for (Eigen::Index j = 0; j < tp.size(); ++j)
      gc.add(tag + "theta", rg.d_theta[j], central_diff(loss, tp[j], h));
    if (deferred) {
      VecX& pp = phi.mlp().params();
      for (Eigen::Index j = 0; j < pp.size(); ++j)
        gc.add(tag + "phi", rg.d_phi[j], central_diff(loss, pp[j], h));
    }
  };

  check_scene(6, false, false, 1);
  check_scene(18, false, true, 2);
  check_scene(6, true, false, 3);
  check_scene(18, true, true, 4);
  check_scene(6, true, true, 5);

  r.seconds = timer.seconds();
  double frac = gc.pass_fraction();
  r.pass = frac >= 0.99 && r.seconds < 120.0;
  r.detail = std::to_string(gc.total) + " coords across 5 scenes, " +
             fmt(100.0 * frac, 3) + "% within rel 1e-4 (need >=99%), worst " +
             sci(gc.worst) + " on " + gc.worst_label;
  return r;
}

// ---- criterion 2: blending oracle equivalence -------------------------------

Result crit_blend() {
  Result r{2, "blending oracle equivalence"};
  Timer timer;
  Rng rng(7201, 1);
  double worst = 0;
  long compared = 0;
  for (int t = 0; t < 100; ++t) {
    int n = 1 + int(rng.below(24));
    Scene scene = random_scene(rng, n);
    Camera cam = random_camera(rng, 12 + int(rng.below(9)));
    BlendMode mode = (t % 3 == 0) ? BlendMode::Color : BlendMode::Feature;
    int K = (t % 3 == 0) ? 3 : (t % 3 == 1 ? 16 : 8);
    MatX payload = random_payload(rng, n, K);
    RasterOptions ro;

    SplatFrame f = splat_blend(scene, cam, payload, mode, ro);
    RefBlend ref = reference_blend(scene, cam, payload, mode, ro);

    for (int y = 0; y < cam.height; ++y)
      for (int x = 0; x < cam.width; ++x) {
        const double* p = f.payload_at(x, y);
        for (int c = 0; c < K; ++c)
          worst = std::max(worst, std::abs(p[c] - ref.pay(x, y, c)));
        worst = std::max(worst, std::abs(f.alpha.at(x, y) - ref.at(ref.alpha, x, y)));
        worst = std::max(worst,
                         std::abs(f.depth_num.at(x, y) - ref.at(ref.depth_num, x, y)));
        worst = std::max(worst,
                         std::abs(f.depth_den.at(x, y) - ref.at(ref.depth_den, x, y)));
        if (mode == BlendMode::Color)
          for (int c = 0; c < 3; ++c)
            worst = std::max(worst, std::abs(f.color.at(x, y, c) -
                                             ref.color[(size_t(y) * cam.width + x) * 3 + c]));
        compared += K + 3 + (mode == BlendMode::Color ? 3 : 0);
      }
  }
  r.seconds = timer.seconds();
  r.pass = worst <= 1e-6 && r.seconds < 60.0;
  r.detail = "100 scenes, " + std::to_string(compared) +
             " values, max |diff| " + sci(worst) + " (need <=1e-6)";
  return r;
}

// ---- criterion 3: shadow-cue fidelity ---------------------------------------

Result crit_shadow_cue() {
  Result r{3, "shadow-cue fidelity"};
  double prep = 0;
  LoadedDataset sp = ensure_dataset("sp", &prep);
  RunConfig cfg = toy_preset();
  cfg.dataset = (g_work / "ds_sp" / "manifest.json").string();
  RunArtifact run = ensure_run("run_sp", cfg, sp);
  prep += run.train_seconds;
  r.prep_seconds = prep;

  Timer timer;
  const TrainState& s = run.state;
  AnalyticScene an = make_scene("sphere-plate");
  RasterOptions ro = raster_options(s.cfg);
  const double su = s.scene.scene_units;
  const double tau = 0.02 * su;

  long agree = 0, checked = 0, clamp_viol = 0, fg = 0, no_oracle = 0;
  for (size_t i = 0; i < sp.manifest.records.size(); ++i) {
    const DatasetRecord& rec = sp.manifest.records[i];
    if (rec.split != "test") continue;
    ShadowCueMap cue = compute_view_cue(
        s.scene, rec.cam, rec.light, s.cfg.refine_enabled ? &s.phi : nullptr, ro);
    for (const double v : cue.values.raw())
      if (v < 0.0 || v > su) ++clamp_viol;
    for (int y = 0; y < cue.height(); ++y)
      for (int x = 0; x < cue.width(); ++x) {
        if (!cue.valid(x, y)) continue;
        ++fg;
        Vec3 dir = rec.cam.ray_unit_z(x + 0.5, y + 0.5).normalized();
        auto hit = trace_ray(an, rec.cam.position, dir);
        if (!hit) {  // model foreground over analytic background; no oracle
          ++no_oracle;
          continue;
        }
        VisibilityProbe probe = visibility_oracle(an, hit->point, rec.light);
        bool pred_shadow = cue.values.at(x, y) > tau;
        if (pred_shadow == !probe.lit) ++agree;
        ++checked;
      }
  }
  r.seconds = timer.seconds();
  double frac = checked > 0 ? double(agree) / double(checked) : 0.0;
  r.pass = frac >= 0.95 && clamp_viol == 0 && checked > 0 && r.seconds < 300.0;
  r.detail = "10 held-out views, agreement " + fmt(100.0 * frac, 2) +
             "% of " + std::to_string(checked) +
             " oracle-covered foreground px (need >=95%), clamp violations " +
             std::to_string(clamp_viol) + "/" + std::to_string(fg) +
             ", tau=" + fmt(tau, 4);
  if (no_oracle > 0)
    r.detail += ", " + std::to_string(no_oracle) + " px skipped (no surface hit)";
  return r;
}

// ---- criterion 4: depth-refinement recovery ---------------------------------

Result crit_depth_refine() {
  Result r{4, "depth-refinement recovery"};
  Timer timer;
  Rng rng(7401, 1);
  Scene scene = random_scene(rng, 40, 0.5);
  RasterOptions ro;
  const double target = 1.1;

  // Per-view splats are fixed (geometry never moves); precompute the
  // direction rows and weighted-sum depths once.
  auto view_rows = [&](const Camera& cam, MatX& dirs, VecX& z) {
    MatX empty(int(scene.gaussians.size()), 0);
    SplatFrame frame = splat_blend(scene, cam, empty, BlendMode::Feature, ro);
    MaskedImage zbar = weighted_depth(frame);
    std::vector<std::pair<int, int>> px;
    for (int y = 0; y < zbar.height(); ++y)
      for (int x = 0; x < zbar.width(); ++x)
        if (zbar.valid(x, y)) px.emplace_back(x, y);
    dirs.resize(Eigen::Index(px.size()), 3);
    z.resize(Eigen::Index(px.size()));
    for (size_t i = 0; i < px.size(); ++i) {
      Vec3 ray = cam.ray_unit_z(px[i].first + 0.5, px[i].second + 0.5);
      dirs.row(Eigen::Index(i)) = (-ray.normalized()).transpose();
      z[Eigen::Index(i)] = zbar.values.at(px[i].first, px[i].second);
    }
  };

  std::vector<MatX> dir_blocks;
  std::vector<VecX> z_blocks;
  Eigen::Index rows = 0;
  for (int v = 0; v < 24; ++v) {
    Camera cam = random_camera(rng, 24);
    MatX d;
    VecX z;
    view_rows(cam, d, z);
    rows += d.rows();
    dir_blocks.push_back(std::move(d));
    z_blocks.push_back(std::move(z));
  }
  MatX dirs(rows, 3);
  VecX z(rows);
  Eigen::Index at = 0;
  for (size_t b = 0; b < dir_blocks.size(); ++b) {
    dirs.middleRows(at, dir_blocks[b].rows()) = dir_blocks[b];
    z.segment(at, z_blocks[b].size()) = z_blocks[b];
    at += dir_blocks[b].rows();
  }

  // Ground truth: 1.1x the weighted-sum depth. Train phi alone (full batch
  // Adam) on the squared depth error; geometry and all other modules fixed.
  DepthRefineConfig pc;
  pc.hidden = 16;
  pc.hidden_layers = 2;
  DepthRefine phi(pc);
  {
    Rng ri(7402, 2);
    phi.init(ri);
  }
  const Eigen::Index np = phi.mlp().num_params();
  VecX m = VecX::Zero(np), v = VecX::Zero(np);
  const double lr = 5e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double nrm = 1.0 / double(rows);
  VecX z2 = z.array().square();
  for (int it = 1; it <= 600; ++it) {
    DepthRefineCache cache;
    VecX s = phi.forward(dirs, &cache);
    VecX d_scale = 2.0 * nrm * (z2.array() * (s.array() - target)).matrix();
    VecX d_params = VecX::Zero(np);
    phi.backward(cache, d_scale, &d_params);
    m = b1 * m + (1.0 - b1) * d_params;
    v = b2 * v + (1.0 - b2) * d_params.array().square().matrix();
    double bc1 = 1.0 - std::pow(b1, it), bc2 = 1.0 - std::pow(b2, it);
    phi.mlp().params().array() -=
        lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
  }

  // Held-out view directions: fresh cameras, checked through the public
  // refine_depth seam.
  double worst = 0;
  long held_px = 0;
  for (int hv = 0; hv < 8; ++hv) {
    Camera cam = random_camera(rng, 24);
    MatX empty(int(scene.gaussians.size()), 0);
    SplatFrame frame = splat_blend(scene, cam, empty, BlendMode::Feature, ro);
    MaskedImage zbar = weighted_depth(frame);
    MaskedImage refined = refine_depth(zbar, cam, phi);
    for (int y = 0; y < zbar.height(); ++y)
      for (int x = 0; x < zbar.width(); ++x) {
        if (!zbar.valid(x, y)) continue;
        double ratio = refined.values.at(x, y) / zbar.values.at(x, y);
        worst = std::max(worst, std::abs(ratio - target) / target);
        ++held_px;
      }
  }
  r.seconds = timer.seconds();
  r.pass = held_px > 0 && worst <= 0.05 && r.seconds < 120.0;
  r.detail = "trained on " + std::to_string(rows) + " px / 24 views; " +
             std::to_string(held_px) +
             " held-out px across 8 fresh views, worst |scale-1.1|/1.1 " +
             fmt(100.0 * worst, 3) + "% (need <=5%)";
  return r;
}

// ---- criterion 5: encoding dimensions ---------------------------------------

Result crit_encoding() {
  Result r{5, "encoding dimensions"};
  Timer timer;
  VecX v3(3);
  v3 << -0.3, 0.8, 0.51;
  VecX v1(1);
  v1 << 0.42;
  int dir_dims = int(freq_encode(v3, 2).size());
  int cue_dims = int(freq_encode(v1, 8).size());
  DecoderConfig plain, cued;
  cued.cue_enabled = true;
  r.pass = dir_dims == 15 && cue_dims == 17 && freq_encode_dim(3, 2) == 15 &&
           freq_encode_dim(1, 8) == 17 && plain.input_dim() == 16 + 2 * 15 &&
           cued.input_dim() == 16 + 2 * 15 + 17;
  r.seconds = timer.seconds();
  r.detail = "direction encode " + std::to_string(dir_dims) +
             " dims (need 15), cue encode " + std::to_string(cue_dims) +
             " dims (need 17); decoder input " + std::to_string(plain.input_dim()) +
             "/" + std::to_string(cued.input_dim()) + " without/with cue";
  return r;
}

// ---- criterion 6: end-to-end toy relighting ---------------------------------

Result crit_end_to_end() {
  Result r{6, "end-to-end toy relighting"};
  Timer timer;
  LoadedDataset sp = ensure_dataset("sp", nullptr);
  LoadedDataset fz = ensure_dataset("fz", nullptr);

  RunConfig cfg_sp = toy_preset();
  cfg_sp.dataset = (g_work / "ds_sp" / "manifest.json").string();
  RunArtifact run_sp = ensure_run("run_sp", cfg_sp, sp);

  RunConfig cfg_fz = toy_preset();
  cfg_fz.dataset = (g_work / "ds_fz" / "manifest.json").string();
  RunArtifact run_fz = ensure_run("run_fz", cfg_fz, fz);

  SplitScore ssp = eval_split(run_sp.state, sp, "test");
  SplitScore sfz = eval_split(run_fz.state, fz, "test");

  r.seconds = timer.seconds();
  r.pass = ssp.psnr >= 25.0 && ssp.ssim >= 0.90 && sfz.psnr >= 22.0 &&
           r.seconds < 1800.0;
  r.detail = "held-out sphere-plate " + fmt(ssp.psnr) + " dB / ssim " +
             fmt(ssp.ssim, 3) + " (need >=25 / >=0.90), fuzz-proxy " +
             fmt(sfz.psnr) + " dB (need >=22), " + std::to_string(ssp.views) +
             "+" + std::to_string(sfz.views) + " novel-light views";
  if (run_sp.train_seconds + run_fz.train_seconds > 0.5)
    r.detail += ", trained " + fmt(run_sp.train_seconds, 0) + "s+" +
                fmt(run_fz.train_seconds, 0) + "s";
  else
    r.detail += ", cached runs";
  return r;
}

// ---- criterion 7: ablation direction ----------------------------------------

Result crit_ablations() {
  Result r{7, "ablation direction"};
  double prep = 0;
  LoadedDataset sp = ensure_dataset("sp", &prep);
  RunConfig cfg = toy_preset();
  cfg.dataset = (g_work / "ds_sp" / "manifest.json").string();
  RunArtifact full = ensure_run("run_sp", cfg, sp);
  prep += full.train_seconds;
  r.prep_seconds = prep;

  Timer timer;
  fs::path base_ckpt = g_work / "run_sp" /
                       []() {
                         char buf[64];
                         std::snprintf(buf, sizeof(buf), "ckpt_%07lld.ckpt",
                                       (long long)toy_preset().stage_switch);
                         return std::string(buf);
                       }();
  if (!fs::exists(base_ckpt)) {
    r.seconds = timer.seconds();
    r.detail = "missing stage-boundary checkpoint " + base_ckpt.string();
    return r;
  }

  RunArtifact norefine = ensure_branch(
      "run_sp_norefine", base_ckpt,
      [](RunConfig& c) { c.refine_enabled = false; }, sp);
  RunArtifact nocue = ensure_branch(
      "run_sp_nocue", base_ckpt, [](RunConfig& c) { c.cue_enabled = false; },
      sp);
  RunArtifact fwd = ensure_branch(
      "run_sp_fwd", base_ckpt,
      [](RunConfig& c) { c.deferred_enabled = false; }, sp);

  double p_full = eval_split(full.state, sp, "test").psnr;
  double p_nr = eval_split(norefine.state, sp, "test").psnr;
  double p_nc = eval_split(nocue.state, sp, "test").psnr;
  double p_fw = eval_split(fwd.state, sp, "test").psnr;

  double g_nr = p_full - p_nr, g_nc = p_full - p_nc, g_fw = p_full - p_fw;
  r.seconds = timer.seconds();
  r.pass = g_nr >= 0.2 && g_nc >= 0.2 && g_fw >= 0.2 && r.seconds < 7200.0;
  r.detail = "full " + fmt(p_full) + " dB vs no-refine " + fmt(p_nr) + " (+" +
             fmt(g_nr) + "), no-cue " + fmt(p_nc) + " (+" + fmt(g_nc) +
             "), forward-only " + fmt(p_fw) + " (+" + fmt(g_fw) +
             ") dB; every gap needs >=0.2";
  return r;
}

// ---- criterion 8: two-stage bookkeeping -------------------------------------

Result crit_bookkeeping() {
  Result r{8, "two-stage bookkeeping"};
  Timer timer;

  DatasetManifest man;
  man.width = man.height = 12;
  man.scene_units = 1.0;
  man.center = Vec3::Zero();
  man.background = Vec3(0.05, 0.08, 0.1);

  RunConfig cfg = toy_preset();
  cfg.total_iterations = 14;
  cfg.stage_switch = 4;
  cfg.checkpoint_every = 1000;
  cfg.log_every = 1000;
  cfg.init_gaussians = 10;
  cfg.decoder_hidden = 8;
  cfg.decoder_layers = 1;
  cfg.phi_hidden = 8;
  cfg.phi_layers = 1;
  cfg.densify.start = 1000;
  cfg.densify.stop = 2000;
  cfg.cue_refresh_every = 5;
  cfg.seed = 33;
  validate(cfg);

  Rng vr(801, 77);
  TrainView view;
  view.cam = random_camera(vr, 12);
  view.light = random_light(vr);
  view.image = Image(12, 12, 3);
  for (double& p : view.image.raw()) p = vr.uniform(0.05, 0.95);
  view.view_id = 3;

  TrainState st = init_train_state(cfg, man);
  bool cache_idle = true;
  for (int i = 0; i < 4; ++i) {
    StepStats ss = train_step(st, view);
    cache_idle = cache_idle && st.cue_cache.entries().empty() &&
                 ss.stage == Stage::Forward;
  }
  TrainState pre = st;  // snapshot right before the boundary step

  StepStats s5 = train_step(st, view);

  // Replaying the boundary step from the snapshot with a freshly seeded
  // decoder must hit the same loss bit-for-bit: that simultaneously proves
  // the latents (and all geometry) crossed untouched and that theta was
  // re-initialized from the stage-2 stream.
  Decoder fresh(decoder_config(cfg));
  {
    Rng r2(cfg.seed, rng_stream::kStage2);
    fresh.init(r2);
  }
  RasterOptions ro = raster_options(cfg);
  ShadowCueMap cue = compute_view_cue(
      pre.scene, view.cam, view.light, cfg.refine_enabled ? &pre.phi : nullptr,
      ro);
  DeferredRender dr =
      render_deferred(pre.scene, view.cam, view.light, fresh, pre.phi, &cue, ro);
  LossResult replay = photometric_loss(dr.image, view.image, cfg.loss_lambda);

  bool replay_exact = replay.total == s5.loss && s5.stage == Stage::Deferred;
  const int64_t boundary_theta_t = st.adam_theta.t;
  const int64_t boundary_geom_t = st.geom_t;
  bool optimizer_reset =
      st.adam_theta.t == 1 && st.adam_phi.t == 1 && st.geom_t == 5;
  auto& ents = st.cue_cache.entries();
  bool cache_entry =
      ents.size() == 1 && ents.count(3) == 1 && ents.at(3).last_update == 4;

  std::vector<int64_t> updates{ents.at(3).last_update};
  for (int i = 5; i < 14; ++i) {
    train_step(st, view);
    updates.push_back(st.cue_cache.entries().at(3).last_update);
  }
  const std::vector<int64_t> want{4, 4, 4, 4, 4, 9, 9, 9, 9, 9};
  bool cadence = updates == want;
  bool preset_refresh = toy_preset().cue_refresh_every == 5 &&
                        paper_preset().cue_refresh_every == 5;

  r.seconds = timer.seconds();
  r.pass = cache_idle && replay_exact && optimizer_reset && cache_entry &&
           cadence && preset_refresh;
  std::ostringstream d;
  d << "boundary replay " << (replay_exact ? "bit-exact" : "DIVERGED")
    << "; post-switch adam theta t=" << boundary_theta_t
    << " geom t=" << boundary_geom_t << "; stage-1 cache "
    << (cache_idle ? "idle" : "TOUCHED")
    << "; refresh updates at iters {4,9} under refresh_every=5 "
    << (cadence ? "ok" : "WRONG") << "; presets refresh=5 "
    << (preset_refresh ? "ok" : "WRONG");
  r.detail = d.str();
  return r;
}

// ---- criterion 9: metrics oracles -------------------------------------------

Result crit_metrics() {
  Result r{9, "metrics oracles"};
  Timer timer;
  Rng rng(7901, 1);
  double worst_p = 0, worst_s = 0;
  for (int t = 0; t < 50; ++t) {
    int w = 12 + int(rng.below(10)), h = 12 + int(rng.below(10));
    Image a(w, h, 3), b(w, h, 3);
    for (double& v : a.raw()) v = rng.uniform();
    b = a;
    double amp = rng.uniform(0.01, 0.4);
    for (double& v : b.raw())
      v = std::min(1.0, std::max(0.0, v + amp * rng.normal()));
    worst_p = std::max(worst_p, std::abs(psnr(a, b) - psnr_direct(a, b)));
    worst_s = std::max(worst_s, std::abs(ssim(a, b) - ssim_direct(a, b)));
  }
  Image self(16, 14, 3);
  for (double& v : self.raw()) v = rng.uniform();
  double self_err = std::abs(ssim(self, self) - 1.0);
  Image ca(13, 13, 3, 0.45), cb(13, 13, 3, 0.55);
  double off_err = std::abs(psnr(ca, cb) - 20.0);

  r.seconds = timer.seconds();
  r.pass = worst_p < 1e-9 && worst_s < 1e-9 && self_err < 1e-12 &&
           off_err < 1e-9;
  r.detail = "50 pairs: max |psnr diff| " + sci(worst_p) +
             ", max |ssim diff| " + sci(worst_s) +
             " (need <1e-9); |ssim(a,a)-1| " + sci(self_err) +
             ", |psnr(0.1 offset)-20dB| " + sci(off_err);
  return r;
}

// ---- criterion 10: determinism ----------------------------------------------

bool file_bytes_equal(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  std::ostringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  return sa.str() == sb.str() && !sa.str().empty();
}

Result crit_determinism() {
  Result r{10, "determinism"};
  double prep = 0;
  LoadedDataset sp = ensure_dataset("sp", &prep);
  r.prep_seconds = prep;

  Timer timer;
  RunConfig cfg = toy_preset();
  cfg.dataset = (g_work / "ds_sp" / "manifest.json").string();
  cfg.run_dir.clear();
  std::vector<TrainView> views = make_train_views(sp, "train");
  auto train_once = [&]() {
    TrainState st = init_train_state(cfg, sp.manifest);
    run_training(st, views, {});
    return st;
  };
  TrainState a = train_once();
  TrainState b = train_once();

  fs::path pa = g_work / "c10_a.ckpt", pb = g_work / "c10_b.ckpt";
  checkpoint_save(a, pa.string());
  checkpoint_save(b, pb.string());
  bool ckpt_eq = file_bytes_equal(pa, pb);

  int imgs = 0, imgs_eq = 0;
  for (size_t i = 0; i < sp.manifest.records.size() && imgs < 3; ++i) {
    const DatasetRecord& rec = sp.manifest.records[i];
    if (rec.split != "test") continue;
    Image ia = render_auto(a, rec.cam, rec.light);
    Image ib = render_auto(b, rec.cam, rec.light);
    ++imgs;
    if (ia.size() == ib.size() &&
        std::memcmp(ia.raw().data(), ib.raw().data(),
                    sizeof(double) * ia.size()) == 0)
      ++imgs_eq;
  }

  r.seconds = timer.seconds();
  r.pass = ckpt_eq && imgs == 3 && imgs_eq == imgs && r.seconds < 3600.0;
  r.detail = std::string("two fresh runs: final checkpoints ") +
             (ckpt_eq ? "bit-identical" : "DIFFER") + ", " +
             std::to_string(imgs_eq) + "/" + std::to_string(imgs) +
             " rendered views bit-identical";
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> selected;
  std::string work;
  if (const char* env = std::getenv("RELIGHT_ACCEPT_DIR")) work = env;
  if (work.empty()) work = "acceptance_work";

  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    auto next = [&]() -> std::string {
      if (i + 1 >= argc) {
        std::cerr << "missing value for " << arg << "\n";
        std::exit(2);
      }
      return argv[++i];
    };
    if (arg == "--criterion" || arg == "-c") {
      selected.push_back(std::stoi(next()));
    } else if (arg == "--work-dir") {
      work = next();
    } else if (arg == "--help" || arg == "-h") {
      std::cout << "usage: relight_acceptance [--criterion N]... [--work-dir DIR]\n"
                   "runs all ten acceptance criteria by default; heavy\n"
                   "artifacts are cached under the work directory\n"
                   "(RELIGHT_ACCEPT_DIR overrides the default ./acceptance_work)\n";
      return 0;
    } else {
      std::cerr << "unknown argument " << arg << "\n";
      return 2;
    }
  }

  g_work = fs::absolute(work);
  fs::create_directories(g_work);

  struct Entry {
    int id;
    Result (*fn)();
  };
  // cheap checks first; criterion 6 owns the shared training budget, so it
  // runs before the criteria that reuse its artifacts
  const std::vector<Entry> order = {
      {5, crit_encoding},  {9, crit_metrics},      {2, crit_blend},
      {8, crit_bookkeeping}, {1, crit_gradients},  {4, crit_depth_refine},
      {6, crit_end_to_end},  {3, crit_shadow_cue}, {7, crit_ablations},
      {10, crit_determinism}};

  auto wanted = [&](int id) {
    return selected.empty() ||
           std::find(selected.begin(), selected.end(), id) != selected.end();
  };

  int ran = 0, passed = 0;
  for (const Entry& e : order) {
    if (!wanted(e.id)) continue;
    Result r;
    try {
      r = e.fn();
    } catch (const std::exception& ex) {
      r.id = e.id;
      r.pass = false;
      r.detail = std::string("exception: ") + ex.what();
    }
    if (r.name.empty() || r.id == 0) {
      r.id = e.id;
      static const char* names[] = {
          "",  "gradient correctness", "blending oracle equivalence",
          "shadow-cue fidelity", "depth-refinement recovery",
          "encoding dimensions", "end-to-end toy relighting",
          "ablation direction",  "two-stage bookkeeping", "metrics oracles",
          "determinism"};
      r.name = names[e.id];
    }
    print_result(r);
    ++ran;
    if (r.pass) ++passed;
  }

  std::cout << "acceptance: " << passed << "/" << ran << " criteria passed"
            << std::endl;
  return passed == ran ? 0 : 1;
}
