// relight: dataset generation, two-stage training, rendering, evaluation,
// and diagnostic dumps for the relightable-Gaussian pipeline.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "relight/checkpoint.hpp"
#include "relight/metrics.hpp"
#include "relight/render.hpp"
#include "relight/synth.hpp"
#include "relight/train.hpp"

namespace fs = std::filesystem;
using namespace relight;
using nlohmann::json;

namespace {

Vec3 parse_vec3(const std::string& s, const char* what) {
  Vec3 v;
  if (std::sscanf(s.c_str(), "%lf,%lf,%lf", &v.x(), &v.y(), &v.z()) != 3)
    throw CLI::ValidationError(std::string(what) +
                               ": expected three comma-separated numbers");
  return v;
}

void apply_thread_env() {
  // Sequential kernels by design; the env var only controls Eigen's
  // internal parallelism, the sole threaded component.
  if (const char* env = std::getenv("RELIGHT_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) Eigen::setNbThreads(n);
  }
}

// Camera/light selection shared by render and dump: either a manifest view
// index or a fully inline specification.
struct ViewSpecOpts {
  int view = -1;
  std::string dataset;
  std::string cam_pos, cam_target, light_pos;
  std::string light_intensity = "1,1,1";
  double fov = 0.8;
  int width = 64, height = 64;

  void attach(CLI::App* cmd) {
    cmd->add_option("--view", view, "manifest record index");
    cmd->add_option("--dataset", dataset, "manifest path (with --view)");
    cmd->add_option("--cam-pos", cam_pos, "camera position x,y,z");
    cmd->add_option("--cam-target", cam_target, "camera look-at x,y,z");
    cmd->add_option("--fov", fov, "vertical field of view (radians)");
    cmd->add_option("--width", width, "image width");
    cmd->add_option("--height", height, "image height");
    cmd->add_option("--light-pos", light_pos, "light position x,y,z");
    cmd->add_option("--light-intensity", light_intensity,
                    "light intensity r,g,b");
  }

  std::pair<Camera, PointLight> resolve() const {
    if (view >= 0) {
      if (dataset.empty())
        throw CLI::ValidationError("--view requires --dataset");
      DatasetManifest m = load_manifest(dataset);
      if (view >= int(m.records.size()))
        throw CLI::ValidationError("--view out of range");
      return {m.records[view].cam, m.records[view].light};
    }
    if (cam_pos.empty() || cam_target.empty() || light_pos.empty())
      throw CLI::ValidationError(
          "need --view or --cam-pos/--cam-target/--light-pos");
    Camera cam;
    cam.position = parse_vec3(cam_pos, "--cam-pos");
    cam.orientation = look_at(cam.position, parse_vec3(cam_target,
                                                       "--cam-target"));
    cam.fov_y = fov;
    cam.width = width;
    cam.height = height;
    PointLight light;
    light.position = parse_vec3(light_pos, "--light-pos");
    light.intensity = parse_vec3(light_intensity, "--light-intensity");
    return {cam, light};
  }
};

Image render_with_state(const TrainState& s, const Camera& cam,
                        const PointLight& light, const std::string& mode) {
  RasterOptions ro = raster_options(s.cfg);
  bool deferred = mode == "deferred" ||
                  (mode == "auto" && s.stage == Stage::Deferred);
  if (!deferred)
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

void write_normalized(const std::string& path, const MaskedImage& m) {
  // Valid pixels normalized to [0.05, 1], background stays 0 as the marker.
  double lo = 1e300, hi = -1e300;
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m.valid(x, y)) {
        lo = std::min(lo, m.values.at(x, y));
        hi = std::max(hi, m.values.at(x, y));
      }
  Image img(m.width(), m.height(), 1);
  double span = hi > lo ? hi - lo : 1.0;
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m.valid(x, y))
        img.at(x, y) = 0.05 + 0.95 * (m.values.at(x, y) - lo) / span;
  write_pnm(path, img);
}

int cmd_gen_data(const std::string& scene_name, DatasetSpec spec) {
  AnalyticScene scene = make_scene(scene_name, spec.seed);
  DatasetManifest m = generate_dataset(scene, spec);
  std::cout << "wrote " << m.records.size() << " views ("
            << (spec.n_views * spec.n_lights) << " train) to " << spec.out_dir
            << "\n";
  return 0;
}

int cmd_train(RunConfig cfg, const std::string& resume) {
  validate(cfg);
  if (cfg.dataset.empty()) throw CLI::ValidationError("--dataset required");
  if (cfg.run_dir.empty()) throw CLI::ValidationError("--run-dir required");
  fs::create_directories(cfg.run_dir);

  LoadedDataset ds = load_dataset(cfg.dataset);
  TrainState state;
  if (!resume.empty()) {
    state = checkpoint_load(resume);
    state.cfg.run_dir = cfg.run_dir;  // the only override honored on resume
  } else {
    state = init_train_state(cfg, ds.manifest);
  }
  save_config((fs::path(state.cfg.run_dir) / "config.json").string(),
              state.cfg);

  std::vector<TrainView> views = make_train_views(ds, "train");
  if (views.empty()) throw std::runtime_error("dataset has no train views");
  const TrainView& probe = views.front();

  std::ofstream log((fs::path(state.cfg.run_dir) / "progress.jsonl").string(),
                    std::ios::app);
  TrainCallbacks cb;
  cb.on_log = [&](const StepStats& st) {
    Image img = render_with_state(state, probe.cam, probe.light, "auto");
    json line;
    line["iteration"] = st.iteration;
    line["stage"] = st.stage == Stage::Forward ? "forward" : "deferred";
    line["loss"] = st.loss;
    line["l1"] = st.l1;
    line["ssim"] = st.ssim;
    line["psnr_probe"] = psnr(img, probe.image);
    line["n_gaussians"] = st.n_gaussians;
    log << line.dump() << "\n" << std::flush;
    std::cout << "iter " << st.iteration << " loss " << st.loss << " probe "
              << line["psnr_probe"].get<double>() << " dB, "
              << st.n_gaussians << " gaussians\n";
  };
  cb.on_checkpoint = [&](const TrainState& s, bool final) {
    fs::path p = fs::path(s.cfg.run_dir);
    char name[64];
    std::snprintf(name, sizeof(name), "ckpt_%07lld.ckpt",
                  (long long)s.iteration);
    checkpoint_save(s, (p / name).string());
    if (final) checkpoint_save(s, (p / "final.ckpt").string());
  };

  run_training(state, views, cb);
  std::cout << "training complete at iteration " << state.iteration << "\n";
  return 0;
}

int cmd_render(const std::string& ckpt, const ViewSpecOpts& vs,
               const std::string& mode, const std::string& out) {
  TrainState s = checkpoint_load(ckpt);
  auto [cam, light] = vs.resolve();
  Image img = render_with_state(s, cam, light, mode);
  write_pnm(out, img);
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& dataset,
             const std::string& split, const std::string& out,
             const std::string& mode) {
  TrainState s = checkpoint_load(ckpt);
  LoadedDataset ds = load_dataset(dataset);
  std::vector<ViewMetrics> views;
  for (size_t i = 0; i < ds.manifest.records.size(); ++i) {
    const DatasetRecord& rec = ds.manifest.records[i];
    if (rec.split != split) continue;
    Image img = render_with_state(s, rec.cam, rec.light, mode);
    ViewMetrics vm;
    vm.view = rec.view_id;
    vm.psnr = psnr(img, ds.images[i]);
    vm.ssim = ssim(img, ds.images[i]);
    views.push_back(vm);
  }
  if (views.empty())
    throw std::runtime_error("no records with split '" + split + "'");
  MetricReport rep = aggregate_metrics(std::move(views));

  std::ostringstream text;
  text << "eval checkpoint=" << ckpt << " split=" << split
       << " views=" << rep.views.size() << "\n";
  for (const auto& v : rep.views)
    text << "view " << v.view << " psnr " << v.psnr << " ssim " << v.ssim
         << "\n";
  text << "mean psnr " << rep.psnr << " ssim " << rep.ssim << "\n";
  text << "note: LPIPS not reported (requires pretrained perceptual "
          "weights; out of scope)\n";
  std::cout << text.str();
  if (!out.empty()) {
    std::ofstream f(out);
    f << text.str();
  }
  return 0;
}

int cmd_dump(const std::string& ckpt, const ViewSpecOpts& vs,
             const std::string& what, const std::string& out) {
  TrainState s = checkpoint_load(ckpt);
  auto [cam, light] = vs.resolve();
  RasterOptions ro = raster_options(s.cfg);

  MatX feat(s.num_gaussians(), kFeatureDim);
  for (int i = 0; i < s.num_gaussians(); ++i)
    feat.row(i) = s.scene.gaussians[i].feature.transpose();

  if (what == "depth" || what == "refined-depth") {
    MatX empty(s.num_gaussians(), 0);
    SplatFrame frame =
        splat_blend(s.scene, cam, empty, BlendMode::Feature, ro);
    MaskedImage z = weighted_depth(frame);
    if (what == "refined-depth") z = refine_depth(z, cam, s.phi);
    write_normalized(out, z);
  } else if (what == "cue") {
    ShadowCueMap cue = compute_view_cue(
        s.scene, cam, light, s.cfg.refine_enabled ? &s.phi : nullptr, ro);
    Image img(cue.width(), cue.height(), 1);
    for (int y = 0; y < cue.height(); ++y)
      for (int x = 0; x < cue.width(); ++x)
        img.at(x, y) = cue.valid(x, y)
                           ? cue.values.at(x, y) / s.scene.scene_units
                           : 0.0;
    write_pnm(out, img);
  } else if (what == "alpha") {
    MatX empty(s.num_gaussians(), 0);
    SplatFrame frame =
        splat_blend(s.scene, cam, empty, BlendMode::Feature, ro);
    write_pnm(out, frame.alpha);
  } else if (what == "features-pca") {
    SplatFrame frame =
        splat_blend(s.scene, cam, feat, BlendMode::Feature, ro);
    // PCA of foreground per-pixel features, mapped to RGB.
    std::vector<std::pair<int, int>> fg;
    for (int y = 0; y < frame.height; ++y)
      for (int x = 0; x < frame.width; ++x)
        if (frame.alpha.at(x, y) > 1e-6) fg.emplace_back(x, y);
    Image img(frame.width, frame.height, 3);
    if (!fg.empty()) {
      MatX rows(fg.size(), kFeatureDim);
      for (size_t i = 0; i < fg.size(); ++i) {
        const double* p = frame.payload_at(fg[i].first, fg[i].second);
        for (int k = 0; k < kFeatureDim; ++k) rows(Eigen::Index(i), k) = p[k];
      }
      MatX centered = rows.rowwise() - rows.colwise().mean();
      Eigen::SelfAdjointEigenSolver<MatX> eig(centered.transpose() *
                                              centered);
      MatX basis = eig.eigenvectors().rightCols(3);  // top-3 components
      MatX proj = centered * basis;                  // F x 3
      Eigen::RowVector3d lo = proj.colwise().minCoeff();
      Eigen::RowVector3d hi = proj.colwise().maxCoeff();
      for (size_t i = 0; i < fg.size(); ++i)
        for (int c = 0; c < 3; ++c) {
          double span = std::max(hi[c] - lo[c], 1e-12);
          img.at(fg[i].first, fg[i].second, c) =
              (proj(Eigen::Index(i), c) - lo[c]) / span;
        }
    }
    write_pnm(out, img);
  } else {
    throw CLI::ValidationError("unknown dump kind: " + what);
  }
  std::cout << "wrote " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_env();
  CLI::App app{"relightable neural Gaussians pipeline"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  std::string scene_name;
  DatasetSpec dspec;
  gen->add_option("scene", scene_name, "sphere-plate | boxes | fuzz-proxy")
      ->required();
  gen->add_option("--views", dspec.n_views, "training views")
      ->check(CLI::PositiveNumber);
  gen->add_option("--lights", dspec.n_lights, "lights per view");
  gen->add_option("--test-views", dspec.n_test_views, "held-out views");
  gen->add_option("--res", dspec.width, "image width and height");
  gen->add_option("--seed", dspec.seed, "rng seed");
  gen->add_option("--supersample", dspec.supersample, "rays per pixel axis");
  gen->add_option("--out", dspec.out_dir, "output directory")->required();

  // train
  auto* tr = app.add_subcommand("train", "run the two-stage optimization");
  std::string cfg_path, preset = "toy", resume;
  std::string tr_dataset, tr_run_dir;
  int64_t tr_iters = -1, tr_switch = -1;
  uint64_t tr_seed = 0;
  bool tr_seed_set = false, no_cue = false, no_refine = false,
       forward_only = false;
  tr->add_option("--config", cfg_path, "config JSON (preset + overrides)");
  tr->add_option("--preset", preset, "toy | paper");
  tr->add_option("--dataset", tr_dataset, "dataset manifest");
  tr->add_option("--run-dir", tr_run_dir, "output directory");
  tr->add_option("--iters", tr_iters, "total iterations");
  tr->add_option("--stage-switch", tr_switch, "forward->deferred iteration");
  tr->add_option("--seed", tr_seed, "rng seed")
      ->each([&](const std::string&) { tr_seed_set = true; });
  tr->add_flag("--no-cue", no_cue, "ablation: disable the shadow cue");
  tr->add_flag("--no-refine", no_refine, "ablation: freeze depth refinement");
  tr->add_flag("--forward-only", forward_only,
               "ablation: never switch to deferred shading");
  tr->add_option("--resume", resume, "checkpoint to continue from");

  // render
  auto* rd = app.add_subcommand("render", "render a view from a checkpoint");
  std::string rd_ckpt, rd_out, rd_mode = "auto";
  ViewSpecOpts rd_vs;
  rd->add_option("--checkpoint", rd_ckpt)->required();
  rd->add_option("--out", rd_out, "output image (.ppm)")->required();
  rd->add_option("--mode", rd_mode, "forward | deferred | auto");
  rd_vs.attach(rd);

  // eval
  auto* ev = app.add_subcommand("eval", "metrics on a dataset split");
  std::string ev_ckpt, ev_dataset, ev_split = "test", ev_out,
              ev_mode = "auto";
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--dataset", ev_dataset)->required();
  ev->add_option("--split", ev_split, "train | test");
  ev->add_option("--mode", ev_mode, "forward | deferred | auto");
  ev->add_option("--out", ev_out, "also write the report here");

  // dump (alias dump-cues)
  auto* dp = app.add_subcommand("dump", "write diagnostic maps");
  std::string dp_ckpt, dp_out, dp_what = "cue";
  ViewSpecOpts dp_vs;
  dp->add_option("--checkpoint", dp_ckpt)->required();
  dp->add_option("--what", dp_what,
                 "depth | refined-depth | cue | alpha | features-pca");
  dp->add_option("--out", dp_out, "output image")->required();
  dp_vs.attach(dp);
  auto* dpc = app.add_subcommand("dump-cues", "write the shadow-cue map");
  std::string dpc_ckpt, dpc_out;
  ViewSpecOpts dpc_vs;
  dpc->add_option("--checkpoint", dpc_ckpt)->required();
  dpc->add_option("--out", dpc_out, "output image")->required();
  dpc_vs.attach(dpc);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      dspec.height = dspec.width;
      return cmd_gen_data(scene_name, dspec);
    }
    if (tr->parsed()) {
      RunConfig cfg =
          cfg_path.empty() ? preset_by_name(preset) : load_config(cfg_path);
      if (!tr_dataset.empty()) cfg.dataset = tr_dataset;
      if (!tr_run_dir.empty()) cfg.run_dir = tr_run_dir;
      if (tr_iters > 0) cfg.total_iterations = tr_iters;
      if (tr_switch >= 0) cfg.stage_switch = tr_switch;
      if (tr_seed_set) cfg.seed = tr_seed;
      if (no_cue) cfg.cue_enabled = false;
      if (no_refine) cfg.refine_enabled = false;
      if (forward_only) cfg.deferred_enabled = false;
      return cmd_train(cfg, resume);
    }
    if (rd->parsed()) return cmd_render(rd_ckpt, rd_vs, rd_mode, rd_out);
    if (ev->parsed())
      return cmd_eval(ev_ckpt, ev_dataset, ev_split, ev_out, ev_mode);
    if (dp->parsed()) return cmd_dump(dp_ckpt, dp_vs, dp_what, dp_out);
    if (dpc->parsed()) return cmd_dump(dpc_ckpt, dpc_vs, "cue", dpc_out);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
