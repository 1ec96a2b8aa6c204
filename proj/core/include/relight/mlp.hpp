#pragma once

#include <stdexcept>
#include <vector>

#include "relight/rng.hpp"
#include "relight/types.hpp"

namespace relight {

// Frequency encoding: [v; sin(2^k pi v); cos(2^k pi v)] for k = 0..bands-1,
// each chunk d-wide. Directions use 2 bands (3 -> 15 dims), the shadow cue
// uses 8 (1 -> 17 dims).
inline constexpr int freq_encode_dim(int d, int bands) {
  return d * (1 + 2 * bands);
}
VecX freq_encode(const VecX& v, int bands);
// d(enc)/dv chained with an upstream gradient over the encoded vector.
VecX freq_encode_backward(const VecX& v, int bands, const VecX& d_enc);

struct MlpConfig {
  int input = 0;
  int hidden = 256;
  int hidden_layers = 4;
  int output = 3;

  int num_linear() const { return hidden_layers + 1; }
  int dim_in(int layer) const { return layer == 0 ? input : hidden; }
  int dim_out(int layer) const {
    return layer == hidden_layers ? output : hidden;
  }
};

struct MlpCache {
  std::vector<MatX> activations;  // input plus post-relu hidden outputs
};

// Plain affine stack with relu between layers. Parameters live in one flat
// vector (per-layer W then b) so the optimizer and checkpoints can treat a
// network as a single array. Output is the raw final affine; callers apply
// their own head activation.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(const MlpConfig& cfg);

  const MlpConfig& config() const { return cfg_; }
  VecX& params() { return params_; }
  const VecX& params() const { return params_; }
  Eigen::Index num_params() const { return params_.size(); }

  // U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  void init_uniform(Rng& rng);
  void zero_last_layer();

  Eigen::Map<const MatX> weight(int layer) const;
  Eigen::Map<const VecX> bias(int layer) const;

  // x: rows are samples. Returns raw output (N x output).
  MatX forward(const MatX& x, MlpCache* cache = nullptr) const;
  // d_out: gradient at the raw output. Accumulates into d_params (same
  // layout as params()) when non-null; returns gradient at the input.
  MatX backward(const MlpCache& cache, const MatX& d_out,
                VecX* d_params = nullptr) const;

 private:
  Eigen::Map<MatX> weight_mut(int layer);
  Eigen::Map<VecX> bias_mut(int layer);

  MlpConfig cfg_;
  VecX params_;
  std::vector<Eigen::Index> w_offset_, b_offset_;
};

// Neural Gaussian decoder: latent + encoded view/light directions
// (+ encoded shadow cue when enabled) -> non-negative RGB reflectance via a
// softplus head. The cue arrives already normalized to [0,1].
struct DecoderConfig {
  int hidden = 256;
  int hidden_layers = 4;
  bool cue_enabled = false;
  int dir_bands = 2;
  int cue_bands = 8;

  int input_dim() const {
    return kFeatureDim + 2 * freq_encode_dim(3, dir_bands) +
           (cue_enabled ? freq_encode_dim(1, cue_bands) : 0);
  }
  MlpConfig mlp() const { return {input_dim(), hidden, hidden_layers, 3}; }
};

struct DecoderCache {
  MlpCache mlp;
  MatX raw;   // pre-softplus output
  MatX wo, wi;
  VecX cue;
};

class Decoder {
 public:
  Decoder() = default;
  explicit Decoder(const DecoderConfig& cfg) : cfg_(cfg), mlp_(cfg.mlp()) {}

  const DecoderConfig& config() const { return cfg_; }
  Mlp& mlp() { return mlp_; }
  const Mlp& mlp() const { return mlp_; }

  void init(Rng& rng) { mlp_.init_uniform(rng); }

  // feat: N x 16, wo/wi: N x 3 unit rows, cue: N (ignored unless enabled).
  // Returns N x 3 reflectance, >= 0 componentwise.
  MatX forward(const MatX& feat, const MatX& wo, const MatX& wi,
               const VecX& cue, DecoderCache* cache = nullptr) const;

  struct InputGrads {
    MatX d_feat, d_wo, d_wi;
    VecX d_cue;
  };
  InputGrads backward(const DecoderCache& cache, const MatX& d_rho,
                      VecX* d_params = nullptr) const;

 private:
  DecoderConfig cfg_;
  Mlp mlp_;
};

// Depth refinement: per-pixel positive scale factor from the encoded view
// direction, scale = exp(raw head). A zero output head makes the scale
// exactly 1 so refined depth starts bit-identical to the input.
struct DepthRefineConfig {
  int hidden = 64;
  int hidden_layers = 2;
  int dir_bands = 2;

  MlpConfig mlp() const {
    return {freq_encode_dim(3, dir_bands), hidden, hidden_layers, 1};
  }
};

struct DepthRefineCache {
  MlpCache mlp;
  VecX scale;
  MatX wo;
};

class DepthRefine {
 public:
  DepthRefine() = default;
  explicit DepthRefine(const DepthRefineConfig& cfg)
      : cfg_(cfg), mlp_(cfg.mlp()) {}

  const DepthRefineConfig& config() const { return cfg_; }
  Mlp& mlp() { return mlp_; }
  const Mlp& mlp() const { return mlp_; }

  void init(Rng& rng) {
    mlp_.init_uniform(rng);
    mlp_.zero_last_layer();
  }

  // wo: N x 3 unit rows. Returns N positive scales.
  VecX forward(const MatX& wo, DepthRefineCache* cache = nullptr) const;
  MatX backward(const DepthRefineCache& cache, const VecX& d_scale,
                VecX* d_params = nullptr) const;

 private:
  DepthRefineConfig cfg_;
  Mlp mlp_;
};

}  // namespace relight
