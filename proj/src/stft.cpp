#include "pse/stft.hpp"

#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include "pse/parallel.hpp"

namespace pse {

namespace {

using cd = std::complex<double>;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 FFT plan for one power-of-two size. Plans are immutable
// after construction and safe to share across threads; each call site owns
// its scratch buffers.
struct FftPlan {
  int n;
  std::vector<int> bitrev;
  std::vector<cd> twiddle;  // e^{-2*pi*i*k/n}, k < n/2

  explicit FftPlan(int size) : n(size), bitrev(size) {
    int log2n = 0;
    while ((1 << log2n) < n) ++log2n;
    for (int i = 0; i < n; ++i) {
      int r = 0;
      for (int b = 0; b < log2n; ++b)
        if (i & (1 << b)) r |= 1 << (log2n - 1 - b);
      bitrev[i] = r;
    }
    twiddle.resize(n / 2);
    for (int k = 0; k < n / 2; ++k) {
      const double a = -2.0 * std::numbers::pi * k / n;
      twiddle[k] = cd(std::cos(a), std::sin(a));
    }
  }

  void transform(cd* a, bool inverse) const {
    for (int i = 0; i < n; ++i) {
      const int j = bitrev[i];
      if (i < j) std::swap(a[i], a[j]);
    }
    for (int len = 2; len <= n; len <<= 1) {
      const int half = len / 2;
      const int stride = n / len;
      for (int base = 0; base < n; base += len) {
        for (int k = 0; k < half; ++k) {
          cd w = twiddle[k * stride];
          if (inverse) w = std::conj(w);
          const cd u = a[base + k];
          const cd t = w * a[base + k + half];
          a[base + k] = u + t;
          a[base + k + half] = u - t;
        }
      }
    }
    if (inverse) {
      const double inv = 1.0 / n;
      for (int i = 0; i < n; ++i) a[i] *= inv;
    }
  }
};

// real frame -> half spectrum (num_bins values)
void rfft(const FftPlan& plan, const double* frame, cd* out, std::vector<cd>& scratch) {
  scratch.assign(plan.n, cd{});
  for (int i = 0; i < plan.n; ++i) scratch[i] = cd(frame[i], 0.0);
  plan.transform(scratch.data(), false);
  for (int k = 0; k <= plan.n / 2; ++k) out[k] = scratch[k];
}

// half spectrum -> real frame; imaginary parts of DC and Nyquist are ignored
// (they do not exist for real signals)
void irfft(const FftPlan& plan, const cd* half, double* frame, std::vector<cd>& scratch) {
  const int n = plan.n;
  scratch.assign(n, cd{});
  scratch[0] = cd(half[0].real(), 0.0);
  scratch[n / 2] = cd(half[n / 2].real(), 0.0);
  for (int k = 1; k < n / 2; ++k) {
    scratch[k] = half[k];
    scratch[n - k] = std::conj(half[k]);
  }
  plan.transform(scratch.data(), true);
  for (int i = 0; i < n; ++i) frame[i] = scratch[i].real();
}

// Reflect padding without edge repetition: [x[P], .., x[1], x[0], x[1], ..].
std::vector<double> reflect_pad(std::span<const double> x, int pad) {
  const long n = static_cast<long>(x.size());
  std::vector<double> out(n + 2L * pad);
  for (int i = 0; i < pad; ++i) out[i] = x[pad - i];
  for (long i = 0; i < n; ++i) out[pad + i] = x[i];
  for (int i = 0; i < pad; ++i) out[pad + n + i] = x[n - 2 - i];
  return out;
}

// Per-sample sum of the squared synthesis window across overlapping frames.
std::vector<double> window_square_sum(const std::vector<double>& win, int num_frames, int hop,
                                      long padded_len) {
  std::vector<double> d(padded_len, 0.0);
  const int fft = static_cast<int>(win.size());
  for (int t = 0; t < num_frames; ++t) {
    const long base = static_cast<long>(t) * hop;
    for (int i = 0; i < fft; ++i) d[base + i] += win[i] * win[i];
  }
  return d;
}

constexpr double kWsumFloor = 1e-12;

}  // namespace

void StftConfig::validate() const {
  if (!is_pow2(fft_size)) throw std::invalid_argument("fft_size must be a power of two");
  if (hop <= 0 || fft_size % hop != 0) throw std::invalid_argument("hop must divide fft_size");
  if (hop > fft_size / 2)
    throw std::invalid_argument("hop must be at most fft_size/2 for overlap-add reconstruction");
}

long StftConfig::num_frames_for(long samples) const {
  // padded length is samples + fft_size
  return 1 + samples / hop;
}

std::vector<double> sqrt_hann_window(int fft_size) {
  std::vector<double> w(fft_size);
  for (int i = 0; i < fft_size; ++i) {
    const double hann = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / fft_size));
    w[i] = std::sqrt(hann);
  }
  return w;
}

Spectrogram Spectrogram::first_frames(int t) const {
  if (t < 1 || t > num_frames) throw std::invalid_argument("first_frames: bad frame count");
  Spectrogram out;
  out.config = config;
  out.num_frames = t;
  out.orig_len = std::min<long>(orig_len, static_cast<long>(t - 1) * config.hop + 1);
  out.sample_rate = sample_rate;
  out.bins.assign(bins.begin(), bins.begin() + static_cast<std::size_t>(t) * num_bins());
  return out;
}

Spectrogram stft(const Waveform& w, const StftConfig& cfg) {
  cfg.validate();
  const long n = w.size();
  if (n == 0) throw std::invalid_argument("stft: empty input");
  if (n <= cfg.fft_size / 2)
    throw std::invalid_argument("stft: input shorter than fft_size/2 + 1 samples");

  const int pad = cfg.fft_size / 2;
  const std::vector<double> padded = reflect_pad(w.samples, pad);
  const long padded_len = static_cast<long>(padded.size());
  const int num_frames = static_cast<int>(1 + (padded_len - cfg.fft_size) / cfg.hop);

  Spectrogram spec;
  spec.config = cfg;
  spec.num_frames = num_frames;
  spec.orig_len = n;
  spec.sample_rate = w.sample_rate;
  spec.bins.resize(static_cast<std::size_t>(num_frames) * cfg.num_bins());

  const FftPlan plan(cfg.fft_size);
  const std::vector<double> win = sqrt_hann_window(cfg.fft_size);

  parallel_for(num_frames, [&](std::int64_t t) {
    std::vector<double> frame(cfg.fft_size);
    std::vector<cd> scratch;
    const long base = t * cfg.hop;
    for (int i = 0; i < cfg.fft_size; ++i) frame[i] = padded[base + i] * win[i];
    rfft(plan, frame.data(), &spec.bins[static_cast<std::size_t>(t) * cfg.num_bins()], scratch);
  });
  return spec;
}

Waveform istft(const Spectrogram& spec) {
  spec.config.validate();
  const int fft = spec.config.fft_size;
  const int hop = spec.config.hop;
  const long padded_len = spec.orig_len + fft;
  const long expect_frames = spec.config.num_frames_for(spec.orig_len);
  if (spec.num_frames != expect_frames ||
      spec.bins.size() != static_cast<std::size_t>(spec.num_frames) * spec.num_bins())
    throw std::invalid_argument("istft: inconsistent spectrogram geometry");

  const FftPlan plan(fft);
  const std::vector<double> win = sqrt_hann_window(fft);
  const std::vector<double> wsum = window_square_sum(win, spec.num_frames, hop, padded_len);

  // stage 1: per-frame inverse transforms (disjoint rows)
  std::vector<double> frames(static_cast<std::size_t>(spec.num_frames) * fft);
  parallel_for(spec.num_frames, [&](std::int64_t t) {
    std::vector<cd> scratch;
    irfft(plan, &spec.bins[static_cast<std::size_t>(t) * spec.num_bins()],
          &frames[static_cast<std::size_t>(t) * fft], scratch);
  });

  // stage 2: windowed overlap-add as a per-sample gather (race-free,
  // bit-identical for every thread budget)
  Waveform out;
  out.sample_rate = spec.sample_rate;
  out.samples.assign(spec.orig_len, 0.0);
  const int pad = fft / 2;
  parallel_for(spec.orig_len, [&](std::int64_t m) {
    const long n = m + pad;  // position in the padded signal
    const long t_lo = n >= fft ? (n - fft) / hop + 1 : 0;
    const long t_hi = std::min<long>(n / hop, spec.num_frames - 1);
    double acc = 0.0;
    for (long t = t_lo; t <= t_hi; ++t) {
      const long i = n - t * hop;
      acc += win[i] * frames[static_cast<std::size_t>(t) * fft + i];
    }
    const double d = wsum[n];
    out.samples[m] = d > kWsumFloor ? acc / d : 0.0;
  });
  return out;
}

Spectrogram istft_adjoint(std::span<const double> wave_grad, const StftConfig& cfg,
                          int num_frames, long orig_len) {
  cfg.validate();
  if (static_cast<long>(wave_grad.size()) != orig_len)
    throw std::invalid_argument("istft_adjoint: gradient length does not match orig_len");
  if (num_frames != cfg.num_frames_for(orig_len))
    throw std::invalid_argument("istft_adjoint: frame count does not match orig_len");

  const int fft = cfg.fft_size;
  const int hop = cfg.hop;
  const int pad = fft / 2;
  const long padded_len = orig_len + fft;

  const FftPlan plan(fft);
  const std::vector<double> win = sqrt_hann_window(fft);
  const std::vector<double> wsum = window_square_sum(win, num_frames, hop, padded_len);

  // reverse of crop + normalize
  std::vector<double> g(padded_len, 0.0);
  for (long m = 0; m < orig_len; ++m) {
    const double d = wsum[m + pad];
    g[m + pad] = d > kWsumFloor ? wave_grad[m] / d : 0.0;
  }

  Spectrogram out;
  out.config = cfg;
  out.num_frames = num_frames;
  out.orig_len = orig_len;
  out.bins.resize(static_cast<std::size_t>(num_frames) * cfg.num_bins());

  // reverse of overlap-add (frame gather) + window, then forward transform
  // scaled by 1/fft. Under the Hermitian-weighted inner product that scaling
  // is the exact adjoint of the inverse transform.
  parallel_for(num_frames, [&](std::int64_t t) {
    std::vector<double> frame(fft);
    std::vector<cd> scratch;
    const long base = t * hop;
    for (int i = 0; i < fft; ++i) frame[i] = g[base + i] * win[i];
    cd* row = &out.bins[static_cast<std::size_t>(t) * cfg.num_bins()];
    rfft(plan, frame.data(), row, scratch);
    const double inv = 1.0 / fft;
    for (int k = 0; k < cfg.num_bins(); ++k) row[k] *= inv;
  });
  return out;
}

std::vector<double> convolve_truncated(std::span<const double> x, std::span<const double> h) {
  if (h.empty()) throw std::invalid_argument("convolve_truncated: empty impulse response");
  const long n = static_cast<long>(x.size());
  const long m = static_cast<long>(h.size());
  std::vector<double> out(n, 0.0);
  parallel_for(n, [&](std::int64_t i) {
    const long k_hi = std::min<long>(i, m - 1);
    double acc = 0.0;
    for (long k = 0; k <= k_hi; ++k) acc += h[k] * x[i - k];
    out[i] = acc;
  });
  return out;
}

void dump_spectrogram_csv(const Spectrogram& spec, std::ostream& os) {
  os << "frame,bin,re,im\n";
  char buf[128];
  for (int t = 0; t < spec.num_frames; ++t)
    for (int f = 0; f < spec.num_bins(); ++f) {
      const auto& v = spec.at(t, f);
      std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g\n", t, f, v.real(), v.imag());
      os << buf;
    }
}

}  // namespace pse
