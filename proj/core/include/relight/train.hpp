#pragma once

#include <functional>
#include <string>
#include <vector>

#include "relight/config.hpp"
#include "relight/metrics.hpp"
#include "relight/render.hpp"
#include "relight/synth.hpp"

namespace relight {

enum class Stage { Forward, Deferred };

struct TrainView {
  Image image;  // H x W x 3 target in [0,1]
  Camera cam;
  PointLight light;
  int view_id = 0;  // cue-cache key; manifest record index
};

struct AdamState {
  VecX m, v;
  int64_t t = 0;
  void reset(Eigen::Index n) {
    m = VecX::Zero(n);
    v = VecX::Zero(n);
    t = 0;
  }
};

// Everything the optimizer owns. Per-Gaussian moment rows stay aligned with
// scene.gaussians through density-control edits.
struct TrainState {
  RunConfig cfg;
  Scene scene;
  Decoder theta;
  DepthRefine phi;

  AdamState adam_theta, adam_phi;
  MatX m_mu, v_mu;        // n x 3
  MatX m_rot, v_rot;      // n x 4
  MatX m_scale, v_scale;  // n x 3
  VecX m_op, v_op;        // n
  MatX m_feat, v_feat;    // n x 16
  int64_t geom_t = 0;     // shared Adam step count of the Gaussian groups

  int64_t iteration = 0;
  Stage stage = Stage::Forward;
  CueCache cue_cache;
  uint64_t seed = 1;

  // Screen-space gradient statistics since the last density-control event.
  VecX grad_accum;  // sum of NDC-space |dL/dmean2d|
  VecX grad_count;  // number of renders the Gaussian contributed to

  int num_gaussians() const { return int(scene.gaussians.size()); }
};

DecoderConfig decoder_config(const RunConfig& cfg);
DepthRefineConfig phi_config(const RunConfig& cfg);
RasterOptions raster_options(const RunConfig& cfg);

// Random initialization inside the dataset's bounding sphere: isotropic
// scales from the expected nearest-neighbor distance, opacity 0.1, small
// random latents, identity rotations.
TrainState init_train_state(const RunConfig& cfg,
                            const DatasetManifest& manifest);

// (1-lambda) * L1 + lambda * (1 - SSIM), with the exact image gradient.
struct LossResult {
  double total = 0.0, l1 = 0.0, ssim = 0.0;
  Image d_image;
};
LossResult photometric_loss(const Image& pred, const Image& target,
                            double lambda);

struct StepStats {
  int64_t iteration = 0;
  Stage stage = Stage::Forward;
  double loss = 0.0, l1 = 0.0, ssim = 0.0;
  int n_gaussians = 0;
};

// One optimization step on one view: renders by stage (flipping the stage and
// re-initializing the decoder when the schedule says so), backpropagates the
// photometric loss, applies per-group Adam updates, renormalizes quaternions,
// and advances the iteration counter. Throws on non-finite loss after writing
// a diagnostic dump when cfg.run_dir is set.
StepStats train_step(TrainState& state, const TrainView& view);

// Clone/split Gaussians whose averaged screen-space gradient exceeds the
// threshold, prune low-opacity ones, keep optimizer rows aligned, reset the
// gradient statistics. Stage-1 only; callers own the cadence.
void density_control(TrainState& state);

struct TrainCallbacks {
  std::function<void(const StepStats&)> on_log;  // every log_every steps
  std::function<void(const TrainState&, bool /*final*/)> on_checkpoint;
};

// Full loop: seeded per-epoch view permutations, train_step, density-control
// cadence, callbacks. Resumable: everything is derived from state.iteration
// and state.seed, so a reloaded checkpoint continues bit-identically.
void run_training(TrainState& state, const std::vector<TrainView>& views,
                  const TrainCallbacks& cb = {});

std::vector<TrainView> make_train_views(const LoadedDataset& ds,
                                        const std::string& split);

}  // namespace relight
