// Times the parallel kernels against the strictly serial reference
// (thread budget 1) and reports per-kernel agreement.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <vector>

#include "pse/losses.hpp"
#include "pse/model.hpp"
#include "pse/parallel.hpp"
#include "pse/stft.hpp"

using namespace pse;

namespace {

double now_s() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

Waveform random_wave(long n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Waveform w;
  w.samples.resize(n);
  for (long i = 0; i < n; ++i) w.samples[i] = ((rng() >> 11) * 0x1.0p-53) * 0.4 - 0.2;
  return w;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

template <class F>
double time_best_of(int reps, F&& fn) {
  double best = 1e30;
  for (int r = 0; r < reps; ++r) {
    const double t0 = now_s();
    fn();
    best = std::min(best, now_s() - t0);
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  int threads = 0;  // auto
  if (argc > 1) threads = std::atoi(argv[1]);

  const StftConfig cfg;
  const Waveform wave = random_wave(80000, 7);  // 10 s at 8 kHz
  const ModelDims dims{cfg.num_bins(), 32, 128};
  const ModelParams params = ModelParams::init(dims, 3);
  const Waveform enroll = random_wave(16000, 9);

  std::printf("kernel                serial_ms  parallel_ms  speedup  max|diff|\n");

  // stft / istft
  set_num_threads(1);
  Spectrogram spec_s;
  const double t_stft_s = time_best_of(3, [&] { spec_s = stft(wave, cfg); });
  Waveform rec_s;
  const double t_istft_s = time_best_of(3, [&] { rec_s = istft(spec_s); });

  set_num_threads(threads);
  Spectrogram spec_p;
  const double t_stft_p = time_best_of(3, [&] { spec_p = stft(wave, cfg); });
  Waveform rec_p;
  const double t_istft_p = time_best_of(3, [&] { rec_p = istft(spec_p); });

  double d = 0;
  for (std::size_t i = 0; i < spec_s.bins.size(); ++i)
    d = std::max(d, std::abs(spec_s.bins[i] - spec_p.bins[i]));
  std::printf("stft                  %9.2f  %11.2f  %7.2f  %.3g\n", t_stft_s * 1e3,
              t_stft_p * 1e3, t_stft_s / t_stft_p, d);
  std::printf("istft                 %9.2f  %11.2f  %7.2f  %.3g\n", t_istft_s * 1e3,
              t_istft_p * 1e3, t_istft_s / t_istft_p,
              max_abs_diff(rec_s.samples, rec_p.samples));

  // model forward + backward
  SpeakerEmbedding emb;
  {
    set_num_threads(1);
    emb = embed_speaker(enroll, params, cfg);
  }
  Spectrogram grad = spec_s;
  for (auto& b : grad.bins) b = {1e-4, -1e-4};

  set_num_threads(1);
  ForwardCache cache_s;
  ForwardResult fwd_s;
  const double t_fwd_s = time_best_of(3, [&] { fwd_s = forward(spec_s, emb, params, &cache_s); });
  BackwardResult bwd_s;
  const double t_bwd_s = time_best_of(3, [&] { bwd_s = backward(cache_s, grad, params); });

  set_num_threads(threads);
  ForwardCache cache_p;
  ForwardResult fwd_p;
  const double t_fwd_p = time_best_of(3, [&] { fwd_p = forward(spec_p, emb, params, &cache_p); });
  BackwardResult bwd_p;
  const double t_bwd_p = time_best_of(3, [&] { bwd_p = backward(cache_p, grad, params); });

  std::printf("model forward         %9.2f  %11.2f  %7.2f  %.3g\n", t_fwd_s * 1e3, t_fwd_p * 1e3,
              t_fwd_s / t_fwd_p, max_abs_diff(fwd_s.mask, fwd_p.mask));
  double gd = 0;
  {
    auto a = bwd_s.grads.tensors();
    auto b = bwd_p.grads.tensors();
    for (std::size_t k = 0; k < a.size(); ++k) gd = std::max(gd, max_abs_diff(a[k], b[k]));
  }
  std::printf("model backward        %9.2f  %11.2f  %7.2f  %.3g\n", t_bwd_s * 1e3, t_bwd_p * 1e3,
              t_bwd_s / t_bwd_p, gd);

  // impulse-response convolution
  const Waveform rir = random_wave(4000, 11);
  set_num_threads(1);
  std::vector<double> conv_s;
  const double t_conv_s =
      time_best_of(3, [&] { conv_s = convolve_truncated(wave.samples, rir.samples); });
  set_num_threads(threads);
  std::vector<double> conv_p;
  const double t_conv_p =
      time_best_of(3, [&] { conv_p = convolve_truncated(wave.samples, rir.samples); });
  std::printf("convolve (4000 taps)  %9.2f  %11.2f  %7.2f  %.3g\n", t_conv_s * 1e3,
              t_conv_p * 1e3, t_conv_s / t_conv_p, max_abs_diff(conv_s, conv_p));

  std::printf("\nthread budget: serial=1 parallel=%d (openmp %s)\n",
              threads > 0 ? threads : num_threads(), openmp_enabled() ? "on" : "off");
  return 0;
}
