#pragma once

#include <complex>
#include <iosfwd>
#include <span>
#include <vector>

#include "pse/audio_io.hpp"

namespace pse {

// Windowed STFT geometry. Analysis and synthesis share the square root of the
// periodic Hann window; at 4x overlap the squared window satisfies the
// constant-overlap-add condition, so istft(stft(x)) reconstructs x.
struct StftConfig {
  int fft_size = 512;
  int hop = 128;

  // throws std::invalid_argument: fft_size must be a power of two, hop must
  // divide fft_size and be at most fft_size/2
  void validate() const;

  int num_bins() const { return fft_size / 2 + 1; }
  long frames_to_samples(long n) const { return n * hop; }
  long num_frames_for(long samples) const;

  bool operator==(const StftConfig&) const = default;
};

std::vector<double> sqrt_hann_window(int fft_size);

// Complex half-spectrum time-frequency matrix, row-major frames x bins.
// bin_weight carries the Hermitian symmetry factor (1 for DC and Nyquist,
// 2 for interior bins) used by every spectral inner product and loss, which
// keeps them equal to their full-spectrum values.
struct Spectrogram {
  StftConfig config;
  int num_frames = 0;
  long orig_len = 0;
  int sample_rate = 8000;
  std::vector<std::complex<double>> bins;

  int num_bins() const { return config.num_bins(); }
  std::complex<double>& at(int t, int f) { return bins[static_cast<std::size_t>(t) * num_bins() + f]; }
  const std::complex<double>& at(int t, int f) const {
    return bins[static_cast<std::size_t>(t) * num_bins() + f];
  }
  double bin_weight(int f) const { return (f == 0 || f == config.fft_size / 2) ? 1.0 : 2.0; }
  bool same_geometry(const Spectrogram& o) const {
    return config == o.config && num_frames == o.num_frames && orig_len == o.orig_len;
  }
  // view of the leading frames; orig_len trimmed to the samples they cover
  Spectrogram first_frames(int t) const;
};

// Input is reflect-padded by fft_size/2 on both ends before framing; frame t
// covers padded samples [t*hop, t*hop + fft_size). Requires
// len(w) > fft_size/2 so the reflection is well defined.
Spectrogram stft(const Waveform& w, const StftConfig& cfg);

// Windowed overlap-add, normalized per sample by the summed squared window,
// truncated back to orig_len.
Waveform istft(const Spectrogram& spec);

// Adjoint of istft under the bin_weight-weighted inner product on stored
// half-spectra: for all A, v
//   dot(istft(A), v) == sum_{t,f} bin_weight(f) *
//       (Re A * Re adj(v) + Im A * Im adj(v)).
// This is what pulls a time-domain loss gradient back onto the spectrogram.
Spectrogram istft_adjoint(std::span<const double> wave_grad, const StftConfig& cfg,
                          int num_frames, long orig_len);

// Full convolution truncated to the length of x (impulse-response
// application). Deterministic for every thread budget.
std::vector<double> convolve_truncated(std::span<const double> x, std::span<const double> h);

// Debug dump: frame,bin,re,im per line. Not a stability-guaranteed format.
void dump_spectrogram_csv(const Spectrogram& spec, std::ostream& os);

}  // namespace pse
