#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pse/stft.hpp"

namespace pse {

struct ModelDims {
  int feat_dim = 257;  // fft_size/2 + 1
  int emb_dim = 32;
  int hidden = 128;
  bool operator==(const ModelDims&) const = default;
};

// All trainable tensors of the enhancer. Dense weights are stored row-major
// as (in_dim x out_dim). Every entry is addressable through a single flat
// index (tensor order below) for finite-difference probing and checkpoints.
struct ModelParams {
  ModelDims dims;
  std::vector<double> spk_proj, spk_bias;    // feat -> emb
  std::vector<double> layer1, bias1;         // (feat+emb) -> hidden
  std::vector<double> layer2, bias2;         // hidden -> hidden
  std::vector<double> mask_out, bias_out;    // hidden -> feat

  static ModelParams zeros(const ModelDims& d);
  // uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero, seeded
  static ModelParams init(const ModelDims& d, std::uint64_t seed);

  std::size_t count() const;
  double get_flat(std::size_t i) const;
  void set_flat(std::size_t i, double v);

  std::array<std::span<double>, 8> tensors();
  std::array<std::span<const double>, 8> tensors() const;
  bool all_finite() const;
  void fill(double v);
};

// L2-normalized speaker identity vector. silent marks the degenerate
// all-silence fallback (zero vector).
struct SpeakerEmbedding {
  std::vector<double> v;
  bool silent = false;
};

struct EmbedCache {
  std::vector<double> feat_mean;  // averaged log1p magnitude features
  std::vector<double> u;          // tanh output before normalization
  double norm = 0;
  bool silent = false;
};

// log(1 + |STFT|) features averaged over frames, projected, tanh'd and
// L2-normalized. A silent enrollment (zero pre-normalization vector) returns
// the zero embedding with silent set.
SpeakerEmbedding embed_speaker(const Waveform& enroll, const ModelParams& params,
                               const StftConfig& cfg, EmbedCache* cache = nullptr);

struct ForwardCache {
  ModelDims dims;
  Spectrogram noisy;
  std::vector<double> emb;
  std::vector<double> feats;  // frames x feat
  std::vector<double> h1;     // frames x hidden
  std::vector<double> h2;     // frames x hidden
  std::vector<double> mask;   // frames x feat
  bool has_embed_stage = false;
  EmbedCache embed;
};

struct ForwardResult {
  std::vector<double> mask;  // frames x feat, entries in (0, 1)
  Spectrogram est;           // mask-scaled noisy spectrogram, phase preserved
};

// Frame-independent mask estimator: per frame,
//   h1 = relu(W1 [log1p|Y_t| ; emb] + b1), h2 = relu(W2 h1 + b2),
//   mask_t = sigmoid(W3 h2 + b3), est = mask .* Y.
ForwardResult forward(const Spectrogram& noisy, const SpeakerEmbedding& emb,
                      const ModelParams& params, ForwardCache* cache = nullptr);

// embed_speaker + forward with one cache, so backward also reaches the
// speaker projection parameters.
ForwardResult enhance_forward(const Spectrogram& noisy, const Waveform& enroll,
                              const ModelParams& params, ForwardCache* cache = nullptr);

struct BackwardResult {
  ModelParams grads;             // same shapes as the parameters
  std::vector<double> grad_emb;  // d loss / d embedding entries
};

// Exact reverse-mode gradients for the scalar loss whose est-spectrogram
// gradient (entry-wise d loss / d Re, d loss / d Im) is supplied.
BackwardResult backward(const ForwardCache& cache, const Spectrogram& grad_est,
                        const ModelParams& params);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const StftConfig& cfg);
struct Checkpoint {
  ModelParams params;
  StftConfig stft;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pse
