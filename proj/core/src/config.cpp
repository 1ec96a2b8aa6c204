#include "relight/config.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace relight {

using nlohmann::json;

RunConfig toy_preset() {
  RunConfig cfg;  // struct defaults are the toy preset
  cfg.preset = "toy";
  // keep the toy model a couple thousand gaussians and settle the topology
  // well before the stage switch so ablation branches share identical
  // forward-stage trajectories
  cfg.densify.stop = 2500;
  cfg.densify.max_gaussians = 3000;
  return cfg;
}

RunConfig paper_preset() {
  RunConfig cfg;
  cfg.preset = "paper";
  cfg.total_iterations = 100000;
  cfg.stage_switch = 30000;
  cfg.checkpoint_every = 10000;
  cfg.decoder_hidden = 256;
  cfg.decoder_layers = 4;
  cfg.phi_hidden = 64;
  cfg.phi_layers = 2;
  cfg.init_gaussians = 20000;
  cfg.densify.stop = 15000;
  return cfg;
}

RunConfig preset_by_name(const std::string& name) {
  if (name == "toy") return toy_preset();
  if (name == "paper") return paper_preset();
  throw std::invalid_argument("unknown preset: " + name);
}

void validate(const RunConfig& cfg) {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("config: " + msg);
  };
  if (cfg.total_iterations < 1) fail("total_iterations must be >= 1");
  if (cfg.stage_switch < 0 || cfg.stage_switch > cfg.total_iterations)
    fail("stage_switch must lie in [0, total_iterations]");
  if (cfg.cue_refresh_every < 1) fail("cue_refresh_every must be >= 1");
  if (cfg.log_every < 1) fail("log_every must be >= 1");
  if (cfg.checkpoint_every < 1) fail("checkpoint_every must be >= 1");
  if (cfg.init_gaussians < 1) fail("init_gaussians must be >= 1");
  if (cfg.decoder_hidden < 1 || cfg.decoder_layers < 1)
    fail("decoder size must be positive");
  if (cfg.phi_hidden < 1 || cfg.phi_layers < 1) fail("phi size positive");
  if (cfg.loss_lambda < 0.0 || cfg.loss_lambda > 1.0)
    fail("loss_lambda must be in [0,1]");
  if (cfg.term_transmittance <= 0.0 || cfg.term_transmittance >= 1.0)
    fail("term_transmittance must be in (0,1)");
  if (cfg.cull_sigma <= 0.0) fail("cull_sigma must be positive");
  if (cfg.densify.interval < 1) fail("densify.interval must be >= 1");
  if (cfg.densify.max_gaussians < 1) fail("densify.max_gaussians >= 1");
  auto pos = [&](double v, const char* name) {
    if (v <= 0.0) fail(std::string(name) + " must be positive");
  };
  pos(cfg.optim.lr_theta, "lr_theta");
  pos(cfg.optim.lr_phi, "lr_phi");
  pos(cfg.optim.lr_feature, "lr_feature");
  pos(cfg.optim.lr_position, "lr_position");
  pos(cfg.optim.lr_rotation, "lr_rotation");
  pos(cfg.optim.lr_scale, "lr_scale");
  pos(cfg.optim.lr_opacity, "lr_opacity");
  if (cfg.optim.beta1 < 0 || cfg.optim.beta1 >= 1 || cfg.optim.beta2 < 0 ||
      cfg.optim.beta2 >= 1)
    fail("adam betas must be in [0,1)");
}

namespace {

json to_json(const RunConfig& c) {
  json j;
  j["preset"] = c.preset;
  j["dataset"] = c.dataset;
  j["run_dir"] = c.run_dir;
  j["total_iterations"] = c.total_iterations;
  j["stage_switch"] = c.stage_switch;
  j["checkpoint_every"] = c.checkpoint_every;
  j["log_every"] = c.log_every;
  j["cue_refresh_every"] = c.cue_refresh_every;
  j["decoder_hidden"] = c.decoder_hidden;
  j["decoder_layers"] = c.decoder_layers;
  j["phi_hidden"] = c.phi_hidden;
  j["phi_layers"] = c.phi_layers;
  j["cue_enabled"] = c.cue_enabled;
  j["refine_enabled"] = c.refine_enabled;
  j["deferred_enabled"] = c.deferred_enabled;
  j["init_gaussians"] = c.init_gaussians;
  j["term_transmittance"] = c.term_transmittance;
  j["cov2d_floor"] = c.cov2d_floor;
  j["cull_sigma"] = c.cull_sigma;
  j["loss_lambda"] = c.loss_lambda;
  j["seed"] = c.seed;
  json o;
  o["lr_theta"] = c.optim.lr_theta;
  o["lr_phi"] = c.optim.lr_phi;
  o["lr_feature"] = c.optim.lr_feature;
  o["lr_position"] = c.optim.lr_position;
  o["lr_position_final"] = c.optim.lr_position_final;
  o["lr_rotation"] = c.optim.lr_rotation;
  o["lr_scale"] = c.optim.lr_scale;
  o["lr_opacity"] = c.optim.lr_opacity;
  o["beta1"] = c.optim.beta1;
  o["beta2"] = c.optim.beta2;
  o["eps"] = c.optim.eps;
  j["optim"] = o;
  json d;
  d["start"] = c.densify.start;
  d["stop"] = c.densify.stop;
  d["interval"] = c.densify.interval;
  d["grad_threshold"] = c.densify.grad_threshold;
  d["opacity_floor"] = c.densify.opacity_floor;
  d["clone_scale_limit"] = c.densify.clone_scale_limit;
  d["max_gaussians"] = c.densify.max_gaussians;
  j["densify"] = d;
  return j;
}

template <typename T>
void maybe(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

RunConfig from_json(const json& j) {
  std::string preset = j.value("preset", std::string("toy"));
  RunConfig c = preset_by_name(preset);
  maybe(j, "dataset", c.dataset);
  maybe(j, "run_dir", c.run_dir);
  maybe(j, "total_iterations", c.total_iterations);
  maybe(j, "stage_switch", c.stage_switch);
  maybe(j, "checkpoint_every", c.checkpoint_every);
  maybe(j, "log_every", c.log_every);
  maybe(j, "cue_refresh_every", c.cue_refresh_every);
  maybe(j, "decoder_hidden", c.decoder_hidden);
  maybe(j, "decoder_layers", c.decoder_layers);
  maybe(j, "phi_hidden", c.phi_hidden);
  maybe(j, "phi_layers", c.phi_layers);
  maybe(j, "cue_enabled", c.cue_enabled);
  maybe(j, "refine_enabled", c.refine_enabled);
  maybe(j, "deferred_enabled", c.deferred_enabled);
  maybe(j, "init_gaussians", c.init_gaussians);
  maybe(j, "term_transmittance", c.term_transmittance);
  maybe(j, "cov2d_floor", c.cov2d_floor);
  maybe(j, "cull_sigma", c.cull_sigma);
  maybe(j, "loss_lambda", c.loss_lambda);
  maybe(j, "seed", c.seed);
  if (j.contains("optim")) {
    const json& o = j.at("optim");
    maybe(o, "lr_theta", c.optim.lr_theta);
    maybe(o, "lr_phi", c.optim.lr_phi);
    maybe(o, "lr_feature", c.optim.lr_feature);
    maybe(o, "lr_position", c.optim.lr_position);
    maybe(o, "lr_position_final", c.optim.lr_position_final);
    maybe(o, "lr_rotation", c.optim.lr_rotation);
    maybe(o, "lr_scale", c.optim.lr_scale);
    maybe(o, "lr_opacity", c.optim.lr_opacity);
    maybe(o, "beta1", c.optim.beta1);
    maybe(o, "beta2", c.optim.beta2);
    maybe(o, "eps", c.optim.eps);
  }
  if (j.contains("densify")) {
    const json& d = j.at("densify");
    maybe(d, "start", c.densify.start);
    maybe(d, "stop", c.densify.stop);
    maybe(d, "interval", c.densify.interval);
    maybe(d, "grad_threshold", c.densify.grad_threshold);
    maybe(d, "opacity_floor", c.densify.opacity_floor);
    maybe(d, "clone_scale_limit", c.densify.clone_scale_limit);
    maybe(d, "max_gaussians", c.densify.max_gaussians);
  }
  validate(c);
  return c;
}

}  // namespace

std::string to_json_string(const RunConfig& cfg) {
  return to_json(cfg).dump(2);
}

RunConfig config_from_json_string(const std::string& text) {
  return from_json(json::parse(text));
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path);
  return from_json(json::parse(in));
}

void save_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config " + path);
  out << to_json_string(cfg) << "\n";
}

}  // namespace relight
