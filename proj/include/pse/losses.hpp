#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "pse/stft.hpp"

namespace pse {

// Loss magnitudes are capped at +-60 dB so a perfect (or fully orthogonal)
// estimate yields a finite loss and a zero gradient instead of inf/NaN.
inline constexpr double kSisnrCapDb = 60.0;

// Compensated (Kahan) summation in index order. Loss reductions go through
// this so parallel per-sample evaluation followed by this serial reduce is
// bit-identical for every thread budget.
double kahan_sum(std::span<const double> xs);
double kahan_mean(std::span<const double> xs);

struct SisnrResult {
  double loss = 0;                // negative SISNR in dB
  std::vector<double> grad_est;   // d loss / d est, zero when the cap is active
};

// Negative scale-invariant SNR. Both signals are mean-subtracted, the
// estimate is projected onto the reference, and the loss is
// -10*log10(signal/noise energy). Requires equal lengths >= 2 and a
// non-constant reference.
SisnrResult neg_sisnr(std::span<const double> est, std::span<const double> ref);

struct FreqMseResult {
  double loss = 0;
  Spectrogram grad_est;  // d loss / d stored entries
};

// Frequency-domain MSE over complex spectra with Hermitian symmetry weights,
// normalized so the value equals the full-spectrum mean square difference.
FreqMseResult mse_freq(const Spectrogram& est, const Spectrogram& ref);

struct TfLossResult {
  double loss = 0;       // neg_sisnr_db + mse
  double neg_sisnr_db = 0;
  double mse = 0;
  Spectrogram grad_est_spec;  // combines the MSE gradient with the SISNR
                              // gradient pulled back through istft_adjoint
};

// Combined time/frequency loss: unweighted sum of the negative SISNR of the
// synthesized waveform and the spectral MSE. Caller contract:
// est_wave == istft(est_spec).
TfLossResult tf_loss(const Spectrogram& est_spec, const Spectrogram& ref_spec,
                     std::span<const double> est_wave, std::span<const double> ref_wave);

struct BatchLossReport {
  std::vector<double> per_sample_tf;
  double mu = 0;
  double sigma = 0;          // population standard deviation
  std::vector<double> weights;
  double aggregate = 0;
  bool degenerate = false;   // sigma < eps: aggregate fell back to the mean
  std::vector<double> grad;  // d aggregate / d per_sample_tf[i]
};

// Adaptive focal batch loss: each sample's TF-loss is weighted by
// sin((pi/2) * z) where z is its batch z-score, clamped to [-1, 1] so harder
// samples never receive smaller weights than easier ones. Weights are treated
// as constants by the gradient (no differentiation through batch statistics).
// clamp=false disables the z clamp for fidelity experiments.
BatchLossReport aft_loss(std::span<const double> per_sample_tf, bool clamp = true,
                         double sigma_eps = 1e-8);

// CSV rows: sample_id,l_tf,weight. ids may be empty (indices are used).
void write_report_csv(const BatchLossReport& report, std::span<const std::string> ids,
                      std::ostream& os);

}  // namespace pse
