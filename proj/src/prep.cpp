#include "pse/prep.hpp"

#include <cmath>
#include <stdexcept>

#include "pse/losses.hpp"

namespace pse {

namespace {

std::vector<double> tile_to(std::span<const double> base, long len, bool crossfade) {
  std::vector<double> out(len);
  const long b = static_cast<long>(base.size());
  for (long i = 0; i < len; ++i) out[i] = base[i % b];
  if (crossfade && b > 16) {
    // short linear blend across each repeat seam
    constexpr int kFade = 8;
    for (long seam = b; seam < len; seam += b) {
      for (int i = 0; i < kFade; ++i) {
        const long pos = seam + i;
        if (pos >= len) break;
        const double f = (i + 1) / static_cast<double>(kFade + 1);
        const double tail = base[(b - kFade + i) % b];
        out[pos] = (1.0 - f) * tail + f * out[pos];
      }
    }
  }
  return out;
}

}  // namespace

void DacConfig::validate() const {
  if (j_frames < 0 || k_frames < 0) throw std::invalid_argument("dac: frame counts must be >= 0");
  if (j_frames + k_frames < 1) throw std::invalid_argument("dac: j_frames + k_frames must be >= 1");
  if (hop <= 0) throw std::invalid_argument("dac: hop must be positive");
}

Waveform dac_with_base(const Waveform& enroll, const Waveform& base, bool crossfade) {
  if (base.samples.empty()) throw std::invalid_argument("dac: empty base segment");
  if (enroll.samples.empty()) throw std::invalid_argument("dac: empty enrollment");
  if (enroll.sample_rate != base.sample_rate)
    throw std::invalid_argument("dac: sample rate mismatch");
  const std::vector<double> tiled = tile_to(base.samples, enroll.size(), crossfade);
  Waveform out = enroll;
  for (long i = 0; i < enroll.size(); ++i) out.samples[i] += tiled[i];
  return out;
}

Waveform dac(const Waveform& enroll, const Waveform& noisy, const DacConfig& cfg) {
  cfg.validate();
  if (enroll.sample_rate != noisy.sample_rate)
    throw std::invalid_argument("dac: sample rate mismatch");
  const long head = static_cast<long>(cfg.j_frames) * cfg.hop;
  const long tail = static_cast<long>(cfg.k_frames) * cfg.hop;
  if (head + tail > noisy.size())
    throw std::invalid_argument("dac: intercepted frames exceed the noisy signal length");

  Waveform base;
  base.sample_rate = noisy.sample_rate;
  base.samples.reserve(head + tail);
  base.samples.insert(base.samples.end(), noisy.samples.begin(), noisy.samples.begin() + head);
  base.samples.insert(base.samples.end(), noisy.samples.end() - tail, noisy.samples.end());
  return dac_with_base(enroll, base, cfg.crossfade);
}

void SpectralSubtractConfig::validate() const {
  if (j_frames < 0 || k_frames < 0 || j_frames + k_frames < 1)
    throw std::invalid_argument("spectral_subtract: need at least one noise frame");
  if (alpha < 1.0) throw std::invalid_argument("spectral_subtract: alpha must be >= 1");
  if (beta <= 0.0 || beta >= 1.0) throw std::invalid_argument("spectral_subtract: beta in (0,1)");
}

Spectrogram spectral_subtract_spec(const Spectrogram& noisy, const SpectralSubtractConfig& cfg) {
  cfg.validate();
  const int T = noisy.num_frames;
  const int nb = noisy.num_bins();
  if (cfg.j_frames + cfg.k_frames > T)
    throw std::invalid_argument("spectral_subtract: noise frames exceed spectrogram length");

  std::vector<double> profile(nb, 0.0);
  for (int t = 0; t < cfg.j_frames; ++t)
    for (int f = 0; f < nb; ++f) profile[f] += std::abs(noisy.at(t, f));
  for (int t = T - cfg.k_frames; t < T; ++t)
    for (int f = 0; f < nb; ++f) profile[f] += std::abs(noisy.at(t, f));
  for (double& v : profile) v /= (cfg.j_frames + cfg.k_frames);

  Spectrogram out = noisy;
  for (int t = 0; t < T; ++t) {
    for (int f = 0; f < nb; ++f) {
      const double mag = std::abs(noisy.at(t, f));
      const double sub = mag - cfg.alpha * profile[f];
      const double kept = std::max(sub, cfg.beta * mag);
      out.at(t, f) = mag > 0.0 ? noisy.at(t, f) * (kept / mag) : std::complex<double>{};
    }
  }
  return out;
}

Waveform spectral_subtract(const Waveform& noisy, const SpectralSubtractConfig& cfg,
                           const StftConfig& stft_cfg) {
  return istft(spectral_subtract_spec(stft(noisy, stft_cfg), cfg));
}

void MmseLsaConfig::validate() const {
  if (j_frames < 1) throw std::invalid_argument("mmse_lsa: j_frames must be >= 1");
  if (dd_alpha < 0.0 || dd_alpha >= 1.0) throw std::invalid_argument("mmse_lsa: dd_alpha in [0,1)");
  if (xi_min <= 0.0) throw std::invalid_argument("mmse_lsa: xi_min must be positive");
}

double lsa_gain(double xi, double gamma) {
  if (xi <= 0.0 || gamma <= 0.0) throw std::invalid_argument("lsa_gain: xi and gamma must be > 0");
  const double v = gamma * xi / (1.0 + xi);
  // E1(v) = -Ei(-v)
  const double e1 = -std::expint(-v);
  const double g = xi / (1.0 + xi) * std::exp(0.5 * e1);
  return g < 1.0 ? g : 1.0;
}

Spectrogram mmse_lsa_spec(const Spectrogram& noisy, const MmseLsaConfig& cfg) {
  cfg.validate();
  const int T = noisy.num_frames;
  const int nb = noisy.num_bins();
  if (cfg.j_frames > T)
    throw std::invalid_argument("mmse_lsa: noise segment longer than the signal");

  std::vector<double> noise_psd(nb, 0.0);
  for (int t = 0; t < cfg.j_frames; ++t)
    for (int f = 0; f < nb; ++f) noise_psd[f] += std::norm(noisy.at(t, f));
  double psd_floor = 0.0;
  for (int f = 0; f < nb; ++f) {
    noise_psd[f] /= cfg.j_frames;
    psd_floor += noise_psd[f];
  }
  psd_floor = std::max(psd_floor / nb * 1e-10, 1e-30);
  for (double& v : noise_psd) v = std::max(v, psd_floor);

  Spectrogram out = noisy;
  std::vector<double> prev_sig(nb, 0.0);  // |G*Y|^2 of the previous frame
  for (int t = 0; t < T; ++t) {
    for (int f = 0; f < nb; ++f) {
      const double y2 = std::norm(noisy.at(t, f));
      const double gamma = std::max(y2 / noise_psd[f], 1e-12);
      double xi;
      if (t == 0) {
        xi = std::max(gamma - 1.0, 0.0);
      } else {
        xi = cfg.dd_alpha * prev_sig[f] / noise_psd[f] +
             (1.0 - cfg.dd_alpha) * std::max(gamma - 1.0, 0.0);
      }
      xi = std::max(xi, cfg.xi_min);
      const double g = lsa_gain(xi, gamma);
      out.at(t, f) = g * noisy.at(t, f);
      prev_sig[f] = g * g * y2;
    }
  }
  return out;
}

Waveform mmse_lsa(const Waveform& noisy, const MmseLsaConfig& cfg, const StftConfig& stft_cfg) {
  return istft(mmse_lsa_spec(stft(noisy, stft_cfg), cfg));
}

MixResult mix_at_snr(const Waveform& speech, const Waveform& noise, double snr_db) {
  if (speech.size() != noise.size()) throw std::invalid_argument("mix_at_snr: length mismatch");
  if (speech.sample_rate != noise.sample_rate)
    throw std::invalid_argument("mix_at_snr: sample rate mismatch");
  if (speech.samples.empty()) throw std::invalid_argument("mix_at_snr: empty signals");

  const long n = speech.size();
  std::vector<double> sq(n);
  for (long i = 0; i < n; ++i) sq[i] = speech.samples[i] * speech.samples[i];
  const double p_speech = kahan_mean(sq);
  for (long i = 0; i < n; ++i) sq[i] = noise.samples[i] * noise.samples[i];
  const double p_noise = kahan_mean(sq);
  if (p_speech <= 0.0) throw std::invalid_argument("mix_at_snr: speech is all zero");
  if (p_noise <= 0.0) throw std::invalid_argument("mix_at_snr: noise is all zero");

  MixResult res;
  res.gain = std::sqrt(p_speech / (p_noise * std::pow(10.0, snr_db / 10.0)));
  res.scaled_noise = noise;
  for (double& v : res.scaled_noise.samples) v *= res.gain;
  res.mixture = speech;
  for (long i = 0; i < n; ++i) res.mixture.samples[i] += res.scaled_noise.samples[i];
  return res;
}

}  // namespace pse
