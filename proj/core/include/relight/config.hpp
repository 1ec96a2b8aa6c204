#pragma once

#include <cstdint>
#include <string>

namespace relight {

struct OptimConfig {
  double lr_theta = 1e-3;
  double lr_phi = 3e-4;
  double lr_feature = 2.5e-3;
  double lr_position = 1.6e-4;  // multiplied by scene_units, decays
  double lr_position_final = 0.01;  // decay target as a fraction of initial
  double lr_rotation = 1e-3;
  double lr_scale = 5e-3;
  double lr_opacity = 5e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct DensifyConfig {
  int64_t start = 500;
  int64_t stop = 15000;  // clipped to the stage switch; topology is frozen
                         // once deferred shading begins
  int64_t interval = 100;
  double grad_threshold = 2e-4;   // NDC units
  double opacity_floor = 5e-3;
  double clone_scale_limit = 0.01;  // x scene_units; larger Gaussians split
  int max_gaussians = 200000;
};

struct RunConfig {
  std::string preset = "toy";
  std::string dataset;  // manifest path
  std::string run_dir;  // checkpoints, logs, resolved config

  int64_t total_iterations = 5000;
  int64_t stage_switch = 3000;
  int64_t checkpoint_every = 1000;
  int64_t log_every = 100;
  int cue_refresh_every = 5;

  int decoder_hidden = 48;
  int decoder_layers = 2;
  int phi_hidden = 32;
  int phi_layers = 2;
  bool cue_enabled = true;      // ablation: decode without the shadow cue
  bool refine_enabled = true;   // ablation: skip depth refinement
  bool deferred_enabled = true; // ablation: stay in forward shading
  int init_gaussians = 2000;

  double term_transmittance = 1e-4;
  double cov2d_floor = 0.3;
  double cull_sigma = 3.0;

  double loss_lambda = 0.2;
  uint64_t seed = 1;

  OptimConfig optim;
  DensifyConfig densify;
};

RunConfig toy_preset();
RunConfig paper_preset();
RunConfig preset_by_name(const std::string& name);

// Throws std::invalid_argument with a description on bad combinations.
void validate(const RunConfig& cfg);

std::string to_json_string(const RunConfig& cfg);
// Starts from the named preset (field "preset", default toy), then applies
// every present field as an override. Validates before returning.
RunConfig config_from_json_string(const std::string& text);
RunConfig load_config(const std::string& path);
void save_config(const std::string& path, const RunConfig& cfg);

}  // namespace relight
