#include "relight/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace relight {
namespace {

constexpr char kMagic[4] = {'R', 'L', 'G', 'C'};
constexpr uint32_t kVersion = 2;
constexpr uint32_t kTrailer = 0x31524c47;  // "GLR1"

struct Writer {
  std::ofstream out;
  explicit Writer(const std::string& path)
      : out(path, std::ios::binary | std::ios::trunc) {
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  }
  void bytes(const void* p, size_t n) {
    out.write(static_cast<const char*>(p), std::streamsize(n));
  }
  template <typename T>
  void pod(T v) {
    bytes(&v, sizeof(T));
  }
  void vec(const VecX& v) {
    pod<uint64_t>(uint64_t(v.size()));
    bytes(v.data(), sizeof(double) * size_t(v.size()));
  }
  void mat(const MatX& m) {
    pod<uint64_t>(uint64_t(m.rows()));
    pod<uint64_t>(uint64_t(m.cols()));
    bytes(m.data(), sizeof(double) * size_t(m.size()));
  }
  void str(const std::string& s) {
    pod<uint64_t>(uint64_t(s.size()));
    bytes(s.data(), s.size());
  }
};

struct Reader {
  std::ifstream in;
  std::string path;
  explicit Reader(const std::string& p) : in(p, std::ios::binary), path(p) {
    if (!in) throw std::runtime_error("cannot read checkpoint " + p);
  }
  void bytes(void* p, size_t n) {
    in.read(static_cast<char*>(p), std::streamsize(n));
    if (in.gcount() != std::streamsize(n))
      throw std::runtime_error("truncated checkpoint " + path);
  }
  template <typename T>
  T pod() {
    T v;
    bytes(&v, sizeof(T));
    return v;
  }
  VecX vec() {
    uint64_t n = pod<uint64_t>();
    VecX v = VecX::Zero(Eigen::Index(n));
    bytes(v.data(), sizeof(double) * n);
    return v;
  }
  MatX mat() {
    uint64_t r = pod<uint64_t>(), c = pod<uint64_t>();
    MatX m = MatX::Zero(Eigen::Index(r), Eigen::Index(c));
    bytes(m.data(), sizeof(double) * r * c);
    return m;
  }
  std::string str() {
    uint64_t n = pod<uint64_t>();
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
};

void write_adam(Writer& w, const AdamState& a) {
  w.pod<int64_t>(a.t);
  w.vec(a.m);
  w.vec(a.v);
}

AdamState read_adam(Reader& r) {
  AdamState a;
  a.t = r.pod<int64_t>();
  a.m = r.vec();
  a.v = r.vec();
  return a;
}

}  // namespace

void checkpoint_save(const TrainState& s, const std::string& path) {
  Writer w(path);
  w.bytes(kMagic, 4);
  w.pod<uint32_t>(kVersion);
  w.str(to_json_string(s.cfg));

  w.pod<int64_t>(s.iteration);
  w.pod<uint8_t>(s.stage == Stage::Deferred ? 1 : 0);
  w.pod<uint64_t>(s.seed);
  w.pod<int64_t>(s.geom_t);

  const auto& gs = s.scene.gaussians;
  w.pod<uint64_t>(uint64_t(gs.size()));
  for (const auto& g : gs) {
    w.bytes(g.mu.data(), sizeof(double) * 3);
    w.bytes(g.rot.data(), sizeof(double) * 4);
    w.bytes(g.log_scale.data(), sizeof(double) * 3);
    w.pod<double>(g.opacity_logit);
    w.bytes(g.feature.data(), sizeof(double) * kFeatureDim);
  }
  w.pod<double>(s.scene.scene_units);
  w.bytes(s.scene.center.data(), sizeof(double) * 3);
  w.bytes(s.scene.background.data(), sizeof(double) * 3);

  w.vec(s.theta.mlp().params());
  write_adam(w, s.adam_theta);
  w.vec(s.phi.mlp().params());
  write_adam(w, s.adam_phi);

  w.mat(s.m_mu);
  w.mat(s.v_mu);
  w.mat(s.m_rot);
  w.mat(s.v_rot);
  w.mat(s.m_scale);
  w.mat(s.v_scale);
  w.vec(s.m_op);
  w.vec(s.v_op);
  w.mat(s.m_feat);
  w.mat(s.v_feat);
  w.vec(s.grad_accum);
  w.vec(s.grad_count);

  const auto& cache = s.cue_cache.entries();
  w.pod<uint64_t>(uint64_t(cache.size()));
  for (const auto& [view_id, entry] : cache) {
    w.pod<int32_t>(view_id);
    w.pod<int64_t>(entry.last_update);
    int cw = entry.cue.width(), ch = entry.cue.height();
    w.pod<int32_t>(cw);
    w.pod<int32_t>(ch);
    w.bytes(entry.cue.values.data(), sizeof(double) * size_t(cw) * ch);
    w.bytes(entry.cue.mask.data(), size_t(cw) * ch);
  }

  w.pod<uint32_t>(kTrailer);
  if (!w.out) throw std::runtime_error("checkpoint write failed " + path);
}

TrainState checkpoint_load(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a checkpoint: " + path);
  uint32_t version = r.pod<uint32_t>();
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version));

  TrainState s;
  s.cfg = config_from_json_string(r.str());

  s.iteration = r.pod<int64_t>();
  s.stage = r.pod<uint8_t>() ? Stage::Deferred : Stage::Forward;
  s.seed = r.pod<uint64_t>();
  s.geom_t = r.pod<int64_t>();

  uint64_t n = r.pod<uint64_t>();
  s.scene.gaussians.resize(n);
  for (auto& g : s.scene.gaussians) {
    r.bytes(g.mu.data(), sizeof(double) * 3);
    r.bytes(g.rot.data(), sizeof(double) * 4);
    r.bytes(g.log_scale.data(), sizeof(double) * 3);
    g.opacity_logit = r.pod<double>();
    r.bytes(g.feature.data(), sizeof(double) * kFeatureDim);
  }
  s.scene.scene_units = r.pod<double>();
  r.bytes(s.scene.center.data(), sizeof(double) * 3);
  r.bytes(s.scene.background.data(), sizeof(double) * 3);

  s.theta = Decoder(decoder_config(s.cfg));
  VecX tp = r.vec();
  if (tp.size() != s.theta.mlp().num_params())
    throw std::runtime_error("decoder parameter count mismatch in " + path);
  s.theta.mlp().params() = tp;
  s.adam_theta = read_adam(r);

  s.phi = DepthRefine(phi_config(s.cfg));
  VecX pp = r.vec();
  if (pp.size() != s.phi.mlp().num_params())
    throw std::runtime_error("phi parameter count mismatch in " + path);
  s.phi.mlp().params() = pp;
  s.adam_phi = read_adam(r);

  s.m_mu = r.mat();
  s.v_mu = r.mat();
  s.m_rot = r.mat();
  s.v_rot = r.mat();
  s.m_scale = r.mat();
  s.v_scale = r.mat();
  s.m_op = r.vec();
  s.v_op = r.vec();
  s.m_feat = r.mat();
  s.v_feat = r.mat();
  s.grad_accum = r.vec();
  s.grad_count = r.vec();
  if (s.m_mu.rows() != Eigen::Index(n))
    throw std::runtime_error("moment rows mismatch in " + path);

  uint64_t cache_n = r.pod<uint64_t>();
  for (uint64_t i = 0; i < cache_n; ++i) {
    int32_t view_id = r.pod<int32_t>();
    CueCache::Entry e;
    e.last_update = r.pod<int64_t>();
    int32_t cw = r.pod<int32_t>(), ch = r.pod<int32_t>();
    e.cue = ShadowCueMap(cw, ch);
    r.bytes(e.cue.values.data(), sizeof(double) * size_t(cw) * ch);
    r.bytes(e.cue.mask.data(), size_t(cw) * ch);
    s.cue_cache.entries().emplace(view_id, std::move(e));
  }

  if (r.pod<uint32_t>() != kTrailer)
    throw std::runtime_error("corrupt checkpoint trailer in " + path);
  return s;
}

}  // namespace relight
