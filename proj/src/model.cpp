#include "pse/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <random>
#include <stdexcept>

#include "pse/parallel.hpp"

namespace pse {

namespace {

constexpr double kSilentNorm = 1e-12;

double uniform_pm(std::mt19937_64& rng, double limit) {
  // [0,1) from the top 53 bits, deterministic across platforms
  const double u = (rng() >> 11) * 0x1.0p-53;
  return (2.0 * u - 1.0) * limit;
}

void matvec(std::span<const double> w, std::span<const double> b, const double* in, int in_dim,
            int out_dim, double* out) {
  for (int j = 0; j < out_dim; ++j) out[j] = b[j];
  for (int i = 0; i < in_dim; ++i) {
    const double x = in[i];
    const double* row = &w[static_cast<std::size_t>(i) * out_dim];
    for (int j = 0; j < out_dim; ++j) out[j] += x * row[j];
  }
}

// accumulate in^T (outer) grad_out into gw, and propagate grad_in if wanted
void matvec_backward(std::span<const double> w, const double* in, int in_dim, int out_dim,
                     const double* grad_out, double* gw, double* gb, double* grad_in) {
  for (int j = 0; j < out_dim; ++j) gb[j] += grad_out[j];
  for (int i = 0; i < in_dim; ++i) {
    const double x = in[i];
    double* grow = &gw[static_cast<std::size_t>(i) * out_dim];
    const double* wrow = &w[static_cast<std::size_t>(i) * out_dim];
    double acc = 0.0;
    for (int j = 0; j < out_dim; ++j) {
      grow[j] += x * grad_out[j];
      acc += wrow[j] * grad_out[j];
    }
    if (grad_in) grad_in[i] += acc;
  }
}

}  // namespace

ModelParams ModelParams::zeros(const ModelDims& d) {
  ModelParams p;
  p.dims = d;
  p.spk_proj.assign(static_cast<std::size_t>(d.feat_dim) * d.emb_dim, 0.0);
  p.spk_bias.assign(d.emb_dim, 0.0);
  p.layer1.assign(static_cast<std::size_t>(d.feat_dim + d.emb_dim) * d.hidden, 0.0);
  p.bias1.assign(d.hidden, 0.0);
  p.layer2.assign(static_cast<std::size_t>(d.hidden) * d.hidden, 0.0);
  p.bias2.assign(d.hidden, 0.0);
  p.mask_out.assign(static_cast<std::size_t>(d.hidden) * d.feat_dim, 0.0);
  p.bias_out.assign(d.feat_dim, 0.0);
  return p;
}

ModelParams ModelParams::init(const ModelDims& d, std::uint64_t seed) {
  ModelParams p = zeros(d);
  std::mt19937_64 rng(seed);
  auto fill_uniform = [&](std::vector<double>& w, int fan_in) {
    const double lim = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& x : w) x = uniform_pm(rng, lim);
  };
  fill_uniform(p.spk_proj, d.feat_dim);
  fill_uniform(p.layer1, d.feat_dim + d.emb_dim);
  fill_uniform(p.layer2, d.hidden);
  fill_uniform(p.mask_out, d.hidden);
  return p;
}

std::array<std::span<double>, 8> ModelParams::tensors() {
  return {spk_proj, spk_bias, layer1, bias1, layer2, bias2, mask_out, bias_out};
}

std::array<std::span<const double>, 8> ModelParams::tensors() const {
  return {spk_proj, spk_bias, layer1, bias1, layer2, bias2, mask_out, bias_out};
}

std::size_t ModelParams::count() const {
  std::size_t n = 0;
  for (auto t : tensors()) n += t.size();
  return n;
}

double ModelParams::get_flat(std::size_t i) const {
  for (auto t : tensors()) {
    if (i < t.size()) return t[i];
    i -= t.size();
  }
  throw std::out_of_range("get_flat: parameter index out of range");
}

void ModelParams::set_flat(std::size_t i, double v) {
  for (auto t : tensors()) {
    if (i < t.size()) {
      t[i] = v;
      return;
    }
    i -= t.size();
  }
  throw std::out_of_range("set_flat: parameter index out of range");
}

bool ModelParams::all_finite() const {
  for (auto t : tensors())
    for (double v : t)
      if (!std::isfinite(v)) return false;
  return true;
}

void ModelParams::fill(double v) {
  for (auto t : tensors())
    for (double& x : t) x = v;
}

SpeakerEmbedding embed_speaker(const Waveform& enroll, const ModelParams& params,
                               const StftConfig& cfg, EmbedCache* cache) {
  if (enroll.samples.empty()) throw std::invalid_argument("embed_speaker: empty enrollment");
  const Spectrogram spec = stft(enroll, cfg);
  const int nb = spec.num_bins();
  if (nb != params.dims.feat_dim)
    throw std::invalid_argument("embed_speaker: fft geometry does not match feat_dim");

  std::vector<double> feat(nb, 0.0);
  for (int t = 0; t < spec.num_frames; ++t)
    for (int f = 0; f < nb; ++f) feat[f] += std::log1p(std::abs(spec.at(t, f)));
  for (double& v : feat) v /= spec.num_frames;

  const int ed = params.dims.emb_dim;
  std::vector<double> z(ed);
  matvec(params.spk_proj, params.spk_bias, feat.data(), nb, ed, z.data());
  std::vector<double> u(ed);
  double nrm2 = 0.0;
  for (int j = 0; j < ed; ++j) {
    u[j] = std::tanh(z[j]);
    nrm2 += u[j] * u[j];
  }
  const double nrm = std::sqrt(nrm2);

  SpeakerEmbedding emb;
  emb.v.assign(ed, 0.0);
  if (nrm < kSilentNorm) {
    emb.silent = true;
    std::cerr << "[pse] warning: silent enrollment, using zero speaker embedding\n";
  } else {
    for (int j = 0; j < ed; ++j) emb.v[j] = u[j] / nrm;
  }
  if (cache) {
    cache->feat_mean = std::move(feat);
    cache->u = std::move(u);
    cache->norm = nrm;
    cache->silent = emb.silent;
  }
  return emb;
}

ForwardResult forward(const Spectrogram& noisy, const SpeakerEmbedding& emb,
                      const ModelParams& params, ForwardCache* cache) {
  const auto& d = params.dims;
  const int nb = noisy.num_bins();
  if (nb != d.feat_dim) throw std::invalid_argument("forward: spectrogram bins != feat_dim");
  if (static_cast<int>(emb.v.size()) != d.emb_dim)
    throw std::invalid_argument("forward: embedding size != emb_dim");

  const int T = noisy.num_frames;
  const int in_dim = d.feat_dim + d.emb_dim;

  ForwardResult res;
  res.mask.resize(static_cast<std::size_t>(T) * nb);
  res.est = noisy;

  std::vector<double> feats(static_cast<std::size_t>(T) * nb);
  std::vector<double> h1(static_cast<std::size_t>(T) * d.hidden);
  std::vector<double> h2(static_cast<std::size_t>(T) * d.hidden);

  parallel_for(T, [&](std::int64_t t) {
    std::vector<double> in(in_dim);
    double* ft = &feats[static_cast<std::size_t>(t) * nb];
    for (int f = 0; f < nb; ++f) {
      ft[f] = std::log1p(std::abs(noisy.at(static_cast<int>(t), f)));
      in[f] = ft[f];
    }
    for (int j = 0; j < d.emb_dim; ++j) in[nb + j] = emb.v[j];

    double* a1 = &h1[static_cast<std::size_t>(t) * d.hidden];
    matvec(params.layer1, params.bias1, in.data(), in_dim, d.hidden, a1);
    for (int j = 0; j < d.hidden; ++j) a1[j] = a1[j] > 0.0 ? a1[j] : 0.0;

    double* a2 = &h2[static_cast<std::size_t>(t) * d.hidden];
    matvec(params.layer2, params.bias2, a1, d.hidden, d.hidden, a2);
    for (int j = 0; j < d.hidden; ++j) a2[j] = a2[j] > 0.0 ? a2[j] : 0.0;

    double* m = &res.mask[static_cast<std::size_t>(t) * nb];
    matvec(params.mask_out, params.bias_out, a2, d.hidden, nb, m);
    for (int f = 0; f < nb; ++f) {
      m[f] = 1.0 / (1.0 + std::exp(-m[f]));
      res.est.at(static_cast<int>(t), f) = m[f] * noisy.at(static_cast<int>(t), f);
    }
  });

  if (cache) {
    cache->dims = d;
    cache->noisy = noisy;
    cache->emb = emb.v;
    cache->feats = std::move(feats);
    cache->h1 = std::move(h1);
    cache->h2 = std::move(h2);
    cache->mask = res.mask;
  }
  return res;
}

ForwardResult enhance_forward(const Spectrogram& noisy, const Waveform& enroll,
                              const ModelParams& params, ForwardCache* cache) {
  EmbedCache ec;
  const SpeakerEmbedding emb = embed_speaker(enroll, params, noisy.config, &ec);
  ForwardResult res = forward(noisy, emb, params, cache);
  if (cache) {
    cache->has_embed_stage = true;
    cache->embed = std::move(ec);
  }
  return res;
}

BackwardResult backward(const ForwardCache& cache, const Spectrogram& grad_est,
                        const ModelParams& params) {
  const auto& d = params.dims;
  if (!(cache.dims == d)) throw std::invalid_argument("backward: cache does not match params");
  if (!grad_est.same_geometry(cache.noisy))
    throw std::invalid_argument("backward: gradient geometry mismatch");

  const int T = cache.noisy.num_frames;
  const int nb = d.feat_dim;
  const int in_dim = d.feat_dim + d.emb_dim;

  BackwardResult out;
  out.grads = ModelParams::zeros(d);
  out.grad_emb.assign(d.emb_dim, 0.0);

  // Per-chunk gradient accumulators reduced in chunk order: deterministic for
  // a fixed thread budget, strictly serial when the budget is 1.
  std::vector<ModelParams> chunk_grads;
  std::vector<std::vector<double>> chunk_emb;
  const int max_chunks = num_threads();
  chunk_grads.assign(max_chunks, ModelParams::zeros(d));
  chunk_emb.assign(max_chunks, std::vector<double>(d.emb_dim, 0.0));

  const int used = parallel_chunks(T, [&](int chunk, std::int64_t lo, std::int64_t hi) {
    ModelParams& g = chunk_grads[chunk];
    std::vector<double>& gemb = chunk_emb[chunk];
    std::vector<double> gmask(nb), gs3(nb), gh2(d.hidden), gz2(d.hidden), gh1(d.hidden),
        gz1(d.hidden), gin(in_dim), in(in_dim);
    for (std::int64_t t = lo; t < hi; ++t) {
      const double* m = &cache.mask[static_cast<std::size_t>(t) * nb];
      const double* ft = &cache.feats[static_cast<std::size_t>(t) * nb];
      const double* a1 = &cache.h1[static_cast<std::size_t>(t) * d.hidden];
      const double* a2 = &cache.h2[static_cast<std::size_t>(t) * d.hidden];

      // d loss / d mask = Re(grad_est * conj(Y)); then through the sigmoid
      for (int f = 0; f < nb; ++f) {
        const auto y = cache.noisy.at(static_cast<int>(t), f);
        const auto ge = grad_est.at(static_cast<int>(t), f);
        gmask[f] = ge.real() * y.real() + ge.imag() * y.imag();
        gs3[f] = gmask[f] * m[f] * (1.0 - m[f]);
      }

      std::fill(gh2.begin(), gh2.end(), 0.0);
      matvec_backward(params.mask_out, a2, d.hidden, nb, gs3.data(), g.mask_out.data(),
                      g.bias_out.data(), gh2.data());
      for (int j = 0; j < d.hidden; ++j) gz2[j] = a2[j] > 0.0 ? gh2[j] : 0.0;

      std::fill(gh1.begin(), gh1.end(), 0.0);
      matvec_backward(params.layer2, a1, d.hidden, d.hidden, gz2.data(), g.layer2.data(),
                      g.bias2.data(), gh1.data());
      for (int j = 0; j < d.hidden; ++j) gz1[j] = a1[j] > 0.0 ? gh1[j] : 0.0;

      for (int f = 0; f < nb; ++f) in[f] = ft[f];
      for (int j = 0; j < d.emb_dim; ++j) in[nb + j] = cache.emb[j];
      std::fill(gin.begin(), gin.end(), 0.0);
      matvec_backward(params.layer1, in.data(), in_dim, d.hidden, gz1.data(), g.layer1.data(),
                      g.bias1.data(), gin.data());
      for (int j = 0; j < d.emb_dim; ++j) gemb[j] += gin[nb + j];
    }
  });

  for (int c = 0; c < used; ++c) {
    auto dst = out.grads.tensors();
    auto src = chunk_grads[c].tensors();
    for (std::size_t k = 0; k < dst.size(); ++k)
      for (std::size_t i = 0; i < dst[k].size(); ++i) dst[k][i] += src[k][i];
    for (int j = 0; j < d.emb_dim; ++j) out.grad_emb[j] += chunk_emb[c][j];
  }

  // Chain into the speaker projection when the cache recorded the embedding
  // stage: emb = u/|u|, u = tanh(spk_proj^T feat + spk_bias).
  if (cache.has_embed_stage && !cache.embed.silent) {
    const auto& ec = cache.embed;
    const int ed = d.emb_dim;
    std::vector<double> gu(ed);
    double dot = 0.0;
    for (int j = 0; j < ed; ++j) dot += out.grad_emb[j] * ec.u[j];
    const double n2 = ec.norm * ec.norm;
    for (int j = 0; j < ed; ++j)
      gu[j] = out.grad_emb[j] / ec.norm - ec.u[j] * dot / (n2 * ec.norm);
    std::vector<double> gz(ed);
    for (int j = 0; j < ed; ++j) gz[j] = gu[j] * (1.0 - ec.u[j] * ec.u[j]);
    matvec_backward(params.spk_proj, ec.feat_mean.data(), d.feat_dim, ed, gz.data(),
                    out.grads.spk_proj.data(), out.grads.spk_bias.data(), nullptr);
  }
  return out;
}

namespace {
constexpr char kCkptMagic[8] = {'P', 'S', 'E', 'C', 'K', 'P', 'T', '1'};
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const StftConfig& cfg) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path.string());
  f.write(kCkptMagic, sizeof(kCkptMagic));
  const std::int32_t head[5] = {params.dims.feat_dim, params.dims.emb_dim, params.dims.hidden,
                                cfg.fft_size, cfg.hop};
  f.write(reinterpret_cast<const char*>(head), sizeof(head));
  const std::uint64_t n = params.count();
  f.write(reinterpret_cast<const char*>(&n), sizeof(n));
  for (auto t : params.tensors())
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!f) throw std::runtime_error("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0)
    throw std::runtime_error("not a checkpoint file: " + path.string());
  std::int32_t head[5];
  f.read(reinterpret_cast<char*>(head), sizeof(head));
  Checkpoint c;
  c.params = ModelParams::zeros({head[0], head[1], head[2]});
  c.stft.fft_size = head[3];
  c.stft.hop = head[4];
  c.stft.validate();
  if (c.params.dims.feat_dim != c.stft.num_bins())
    throw std::runtime_error("checkpoint feat_dim does not match its fft size");
  std::uint64_t n = 0;
  f.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (n != c.params.count())
    throw std::runtime_error("checkpoint parameter count mismatch: " + path.string());
  for (auto t : c.params.tensors())
    f.read(reinterpret_cast<char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!f) throw std::runtime_error("truncated checkpoint: " + path.string());
  return c;
}

}  // namespace pse
