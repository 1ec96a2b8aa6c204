#include "relight/mlp.hpp"

namespace relight {

VecX freq_encode(const VecX& v, int bands) {
  const int d = int(v.size());
  VecX out(freq_encode_dim(d, bands));
  out.head(d) = v;
  double freq = M_PI;
  for (int k = 0; k < bands; ++k, freq *= 2.0) {
    for (int i = 0; i < d; ++i) {
      out[d + 2 * k * d + i] = std::sin(freq * v[i]);
      out[d + (2 * k + 1) * d + i] = std::cos(freq * v[i]);
    }
  }
  return out;
}

VecX freq_encode_backward(const VecX& v, int bands, const VecX& d_enc) {
  const int d = int(v.size());
  VecX d_v = d_enc.head(d);
  double freq = M_PI;
  for (int k = 0; k < bands; ++k, freq *= 2.0) {
    for (int i = 0; i < d; ++i) {
      d_v[i] += d_enc[d + 2 * k * d + i] * freq * std::cos(freq * v[i]);
      d_v[i] -= d_enc[d + (2 * k + 1) * d + i] * freq * std::sin(freq * v[i]);
    }
  }
  return d_v;
}

Mlp::Mlp(const MlpConfig& cfg) : cfg_(cfg) {
  Eigen::Index total = 0;
  for (int l = 0; l < cfg_.num_linear(); ++l) {
    w_offset_.push_back(total);
    total += Eigen::Index(cfg_.dim_in(l)) * cfg_.dim_out(l);
    b_offset_.push_back(total);
    total += cfg_.dim_out(l);
  }
  params_ = VecX::Zero(total);
}

Eigen::Map<const MatX> Mlp::weight(int l) const {
  return {params_.data() + w_offset_[l], cfg_.dim_in(l), cfg_.dim_out(l)};
}
Eigen::Map<const VecX> Mlp::bias(int l) const {
  return {params_.data() + b_offset_[l], cfg_.dim_out(l)};
}
Eigen::Map<MatX> Mlp::weight_mut(int l) {
  return {params_.data() + w_offset_[l], cfg_.dim_in(l), cfg_.dim_out(l)};
}
Eigen::Map<VecX> Mlp::bias_mut(int l) {
  return {params_.data() + b_offset_[l], cfg_.dim_out(l)};
}

void Mlp::init_uniform(Rng& rng) {
  for (int l = 0; l < cfg_.num_linear(); ++l) {
    const double bound = 1.0 / std::sqrt(double(cfg_.dim_in(l)));
    auto w = weight_mut(l);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i)
        w(i, j) = rng.uniform(-bound, bound);
    auto b = bias_mut(l);
    for (Eigen::Index i = 0; i < b.size(); ++i)
      b[i] = rng.uniform(-bound, bound);
  }
}

void Mlp::zero_last_layer() {
  const int l = cfg_.num_linear() - 1;
  weight_mut(l).setZero();
  bias_mut(l).setZero();
}

MatX Mlp::forward(const MatX& x, MlpCache* cache) const {
  if (x.cols() != cfg_.input)
    throw std::invalid_argument("Mlp::forward: input width mismatch");
  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(x);
  }
  MatX a = x;
  for (int l = 0; l < cfg_.num_linear(); ++l) {
    MatX z = (a * weight(l)).rowwise() + bias(l).transpose();
    if (l + 1 < cfg_.num_linear()) {
      a = z.cwiseMax(0.0);
      if (cache) cache->activations.push_back(a);
    } else {
      a = std::move(z);
    }
  }
  return a;
}

MatX Mlp::backward(const MlpCache& cache, const MatX& d_out,
                   VecX* d_params) const {
  if (int(cache.activations.size()) != cfg_.num_linear())
    throw std::invalid_argument("Mlp::backward: cache/config mismatch");
  if (d_params && d_params->size() != params_.size())
    throw std::invalid_argument("Mlp::backward: gradient buffer size mismatch");

  MatX d_z = d_out;
  for (int l = cfg_.num_linear() - 1; l >= 0; --l) {
    const MatX& a_prev = cache.activations[l];
    if (d_params) {
      Eigen::Map<MatX> d_w(d_params->data() + w_offset_[l], cfg_.dim_in(l),
                           cfg_.dim_out(l));
      Eigen::Map<VecX> d_b(d_params->data() + b_offset_[l], cfg_.dim_out(l));
      d_w.noalias() += a_prev.transpose() * d_z;
      d_b += d_z.colwise().sum().transpose();
    }
    MatX d_a = d_z * weight(l).transpose();
    if (l > 0) {
      // relu mask from the recorded post-activation values
      d_z = d_a.cwiseProduct(
          (cache.activations[l].array() > 0.0).cast<double>().matrix());
    } else {
      return d_a;
    }
  }
  return {};
}

namespace {

MatX encode_rows(const MatX& dirs, int bands) {
  MatX out(dirs.rows(), freq_encode_dim(int(dirs.cols()), bands));
  for (Eigen::Index r = 0; r < dirs.rows(); ++r)
    out.row(r) = freq_encode(dirs.row(r).transpose(), bands).transpose();
  return out;
}

}  // namespace

MatX Decoder::forward(const MatX& feat, const MatX& wo, const MatX& wi,
                      const VecX& cue, DecoderCache* cache) const {
  const Eigen::Index n = feat.rows();
  if (feat.cols() != kFeatureDim || wo.rows() != n || wi.rows() != n ||
      wo.cols() != 3 || wi.cols() != 3)
    throw std::invalid_argument("Decoder::forward: input shape mismatch");
  if (cfg_.cue_enabled && cue.size() != n)
    throw std::invalid_argument("Decoder::forward: cue size mismatch");

  const int dir_dim = freq_encode_dim(3, cfg_.dir_bands);
  MatX x(n, cfg_.input_dim());
  x.leftCols(kFeatureDim) = feat;
  x.middleCols(kFeatureDim, dir_dim) = encode_rows(wo, cfg_.dir_bands);
  x.middleCols(kFeatureDim + dir_dim, dir_dim) = encode_rows(wi, cfg_.dir_bands);
  if (cfg_.cue_enabled)
    x.rightCols(freq_encode_dim(1, cfg_.cue_bands)) =
        encode_rows(cue, cfg_.cue_bands);

  MlpCache local;
  MlpCache* mc = cache ? &cache->mlp : &local;
  MatX raw = mlp_.forward(x, mc);
  if (cache) {
    cache->raw = raw;
    cache->wo = wo;
    cache->wi = wi;
    cache->cue = cue;
  }
  // softplus head keeps reflectance non-negative without clamping
  return raw.unaryExpr([](double z) { return softplus(z); });
}

Decoder::InputGrads Decoder::backward(const DecoderCache& cache,
                                      const MatX& d_rho,
                                      VecX* d_params) const {
  // d softplus(z) / dz = sigmoid(z)
  MatX d_raw = d_rho.cwiseProduct(
      cache.raw.unaryExpr([](double z) { return sigmoid(z); }));
  MatX d_x = mlp_.backward(cache.mlp, d_raw, d_params);

  const Eigen::Index n = d_x.rows();
  const int dir_dim = freq_encode_dim(3, cfg_.dir_bands);
  InputGrads grads;
  grads.d_feat = d_x.leftCols(kFeatureDim);
  grads.d_wo.resize(n, 3);
  grads.d_wi.resize(n, 3);
  for (Eigen::Index r = 0; r < n; ++r) {
    grads.d_wo.row(r) =
        freq_encode_backward(cache.wo.row(r).transpose(), cfg_.dir_bands,
                             d_x.row(r).segment(kFeatureDim, dir_dim).transpose())
            .transpose();
    grads.d_wi.row(r) =
        freq_encode_backward(
            cache.wi.row(r).transpose(), cfg_.dir_bands,
            d_x.row(r).segment(kFeatureDim + dir_dim, dir_dim).transpose())
            .transpose();
  }
  if (cfg_.cue_enabled) {
    const int cue_dim = freq_encode_dim(1, cfg_.cue_bands);
    grads.d_cue.resize(n);
    for (Eigen::Index r = 0; r < n; ++r) {
      VecX cv(1);
      cv[0] = cache.cue[r];
      grads.d_cue[r] = freq_encode_backward(
          cv, cfg_.cue_bands, d_x.row(r).tail(cue_dim).transpose())[0];
    }
  }
  return grads;
}

VecX DepthRefine::forward(const MatX& wo, DepthRefineCache* cache) const {
  if (wo.cols() != 3)
    throw std::invalid_argument("DepthRefine::forward: wo must be N x 3");
  MatX x = encode_rows(wo, cfg_.dir_bands);
  MlpCache local;
  MlpCache* mc = cache ? &cache->mlp : &local;
  MatX raw = mlp_.forward(x, mc);
  VecX scale = raw.col(0).array().exp();
  if (cache) {
    cache->scale = scale;
    cache->wo = wo;
  }
  return scale;
}

MatX DepthRefine::backward(const DepthRefineCache& cache, const VecX& d_scale,
                           VecX* d_params) const {
  // scale = exp(raw)
  MatX d_raw = (d_scale.array() * cache.scale.array()).matrix();
  MatX d_x = mlp_.backward(cache.mlp, d_raw, d_params);
  MatX d_wo(d_x.rows(), 3);
  for (Eigen::Index r = 0; r < d_x.rows(); ++r)
    d_wo.row(r) = freq_encode_backward(cache.wo.row(r).transpose(),
                                       cfg_.dir_bands, d_x.row(r).transpose())
                      .transpose();
  return d_wo;
}

}  // namespace relight
