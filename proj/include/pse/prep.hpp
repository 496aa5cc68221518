#pragma once

#include <span>

#include "pse/stft.hpp"

namespace pse {

// Frame counts for the noise context intercepted from the noisy input; one
// frame is `hop` samples. With the 512/128 default, 4/2 frames take 512+256
// samples (~96 ms at 8 kHz) from the signal edges.
struct DacConfig {
  int j_frames = 4;
  int k_frames = 2;
  int hop = 128;
  bool crossfade = false;  // optional 8-sample linear crossfade at repeat seams

  void validate() const;  // j,k >= 0 and j+k >= 1
};

// Dynamic acoustic compensation: the first J and last K frames of the noisy
// input are concatenated, tiled to the enrollment length and added to the
// enrollment, unscaled. Output length always equals the enrollment length.
Waveform dac(const Waveform& enroll, const Waveform& noisy, const DacConfig& cfg);

// Same splice-and-add with a caller-supplied base segment; injecting the true
// background noise track gives the compensation upper bound.
Waveform dac_with_base(const Waveform& enroll, const Waveform& base, bool crossfade = false);

struct SpectralSubtractConfig {
  int j_frames = 4;
  int k_frames = 0;
  double alpha = 1.0;   // over-subtraction factor, >= 1
  double beta = 0.01;   // spectral floor factor, in (0, 1)
  void validate() const;
};

// Magnitude spectral subtraction against a noise profile averaged from the
// first J and last K frames, floored at beta*|Y|, phase kept.
Spectrogram spectral_subtract_spec(const Spectrogram& noisy, const SpectralSubtractConfig& cfg);
Waveform spectral_subtract(const Waveform& noisy, const SpectralSubtractConfig& cfg,
                           const StftConfig& stft_cfg);

struct MmseLsaConfig {
  int j_frames = 4;          // leading frames used for the noise power estimate
  double dd_alpha = 0.98;    // decision-directed smoothing factor
  double xi_min = 3.1622776601683794e-3;  // a-priori SNR floor (10^-2.5)
  void validate() const;
};

// Log-spectral-amplitude gain for a-priori SNR xi and a-posteriori SNR gamma,
// clamped to at most 1 so the suppressor never amplifies.
double lsa_gain(double xi, double gamma);

Spectrogram mmse_lsa_spec(const Spectrogram& noisy, const MmseLsaConfig& cfg);
Waveform mmse_lsa(const Waveform& noisy, const MmseLsaConfig& cfg, const StftConfig& stft_cfg);

struct MixResult {
  Waveform mixture;
  Waveform scaled_noise;
  double gain = 0;  // factor applied to the noise
};

// Scales noise so that 10*log10(P_speech / P_scaled_noise) == snr_db, powers
// taken over the whole signals, and returns speech + scaled noise.
MixResult mix_at_snr(const Waveform& speech, const Waveform& noise, double snr_db);

}  // namespace pse
