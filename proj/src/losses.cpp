#include "pse/losses.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <stdexcept>

namespace pse {

double kahan_sum(std::span<const double> xs) {
  double sum = 0.0, comp = 0.0;
  for (double x : xs) {
    const double y = x - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  return sum;
}

double kahan_mean(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("mean of empty range");
  return kahan_sum(xs) / static_cast<double>(xs.size());
}

SisnrResult neg_sisnr(std::span<const double> est, std::span<const double> ref) {
  const long n = static_cast<long>(est.size());
  if (n != static_cast<long>(ref.size())) throw std::invalid_argument("neg_sisnr: length mismatch");
  if (n < 2) throw std::invalid_argument("neg_sisnr: need at least 2 samples");

  const double mean_e = kahan_mean(est);
  const double mean_r = kahan_mean(ref);

  double er = 0, rr = 0, ee = 0;
  {
    double c_er = 0, c_rr = 0, c_ee = 0;
    for (long i = 0; i < n; ++i) {
      const double e = est[i] - mean_e;
      const double r = ref[i] - mean_r;
      double y, t;
      y = e * r - c_er; t = er + y; c_er = (t - er) - y; er = t;
      y = r * r - c_rr; t = rr + y; c_rr = (t - rr) - y; rr = t;
      y = e * e - c_ee; t = ee + y; c_ee = (t - ee) - y; ee = t;
    }
  }
  if (rr <= 0.0) throw std::invalid_argument("neg_sisnr: reference is constant");

  const double alpha = er / rr;
  const double sig = alpha * er;   // ||s_t||^2 = <e,r>^2 / <r,r>
  const double noi = ee - sig;     // ||e - s_t||^2 (projection residual)

  SisnrResult out;
  out.grad_est.assign(n, 0.0);

  const double cap = kSisnrCapDb;
  double loss;
  if (sig <= 0.0) {
    loss = cap;  // no target component at all
  } else if (noi <= sig * 1e-12) {
    loss = -cap;  // essentially perfect reconstruction
  } else {
    loss = -10.0 * std::log10(sig / noi);
  }
  if (loss >= cap) { out.loss = cap; return out; }
  if (loss <= -cap) { out.loss = -cap; return out; }
  out.loss = loss;

  // d loss / d e = -(10/ln10) * (dsig/sig - dnoi/noi), then project out the
  // mean (the mean subtraction's Jacobian).
  const double k = 10.0 / std::numbers::ln10;
  const double cs = -k * 2.0 * alpha / sig;
  const double cn = k / noi * 2.0;
  double gsum = 0.0;
  for (long i = 0; i < n; ++i) {
    const double e = est[i] - mean_e;
    const double r = ref[i] - mean_r;
    const double g = cs * r + cn * (e - alpha * r);
    out.grad_est[i] = g;
    gsum += g;
  }
  const double gmean = gsum / n;
  for (long i = 0; i < n; ++i) out.grad_est[i] -= gmean;
  return out;
}

FreqMseResult mse_freq(const Spectrogram& est, const Spectrogram& ref) {
  if (!est.same_geometry(ref)) throw std::invalid_argument("mse_freq: geometry mismatch");
  const int nb = est.num_bins();
  const long total = static_cast<long>(est.num_frames) * est.config.fft_size;
  if (total == 0) throw std::invalid_argument("mse_freq: empty spectrogram");

  FreqMseResult out;
  out.grad_est = est;
  std::fill(out.grad_est.bins.begin(), out.grad_est.bins.end(), std::complex<double>{});

  double sum = 0, comp = 0;
  const double inv_n = 1.0 / static_cast<double>(total);
  for (int t = 0; t < est.num_frames; ++t) {
    for (int f = 0; f < nb; ++f) {
      const double wf = est.bin_weight(f);
      const auto d = est.at(t, f) - ref.at(t, f);
      const double term = wf * (d.real() * d.real() + d.imag() * d.imag());
      const double y = term - comp;
      const double s = sum + y;
      comp = (s - sum) - y;
      sum = s;
      out.grad_est.at(t, f) = 2.0 * wf * inv_n * d;
    }
  }
  out.loss = sum * inv_n;
  return out;
}

TfLossResult tf_loss(const Spectrogram& est_spec, const Spectrogram& ref_spec,
                     std::span<const double> est_wave, std::span<const double> ref_wave) {
  auto sisnr = neg_sisnr(est_wave, ref_wave);
  auto mse = mse_freq(est_spec, ref_spec);

  TfLossResult out;
  out.neg_sisnr_db = sisnr.loss;
  out.mse = mse.loss;
  out.loss = sisnr.loss + mse.loss;
  out.grad_est_spec = std::move(mse.grad_est);

  // Pull the waveform gradient back onto the stored spectrogram entries. The
  // adjoint is taken under the Hermitian-weighted inner product, so the plain
  // entry-wise derivative needs the bin weight factor on top.
  Spectrogram pulled = istft_adjoint(sisnr.grad_est, est_spec.config, est_spec.num_frames,
                                     est_spec.orig_len);
  const int nb = est_spec.num_bins();
  for (int t = 0; t < est_spec.num_frames; ++t)
    for (int f = 0; f < nb; ++f)
      out.grad_est_spec.at(t, f) += est_spec.bin_weight(f) * pulled.at(t, f);
  return out;
}

BatchLossReport aft_loss(std::span<const double> per_sample_tf, bool clamp, double sigma_eps) {
  const long b = static_cast<long>(per_sample_tf.size());
  if (b < 2) throw std::invalid_argument("aft_loss: batch size must be at least 2");
  for (double v : per_sample_tf)
    if (!std::isfinite(v)) throw std::invalid_argument("aft_loss: non-finite sample loss");

  BatchLossReport r;
  r.per_sample_tf.assign(per_sample_tf.begin(), per_sample_tf.end());
  r.mu = kahan_mean(per_sample_tf);

  std::vector<double> sq(b);
  for (long i = 0; i < b; ++i) {
    const double d = per_sample_tf[i] - r.mu;
    sq[i] = d * d;
  }
  r.sigma = std::sqrt(kahan_mean(sq));

  r.weights.assign(b, 0.0);
  r.grad.assign(b, 0.0);
  if (r.sigma < sigma_eps) {
    r.degenerate = true;
    r.aggregate = r.mu;
    const double g = 1.0 / static_cast<double>(b);
    for (long i = 0; i < b; ++i) r.grad[i] = g;
    return r;
  }

  std::vector<double> terms(b);
  for (long i = 0; i < b; ++i) {
    double z = (per_sample_tf[i] - r.mu) / r.sigma;
    if (clamp) z = std::clamp(z, -1.0, 1.0);
    const double w = std::sin(0.5 * std::numbers::pi * z);
    r.weights[i] = w;
    r.grad[i] = w;  // weights are constants to the gradient
    terms[i] = w * per_sample_tf[i];
  }
  r.aggregate = kahan_sum(terms);
  return r;
}

void write_report_csv(const BatchLossReport& report, std::span<const std::string> ids,
                      std::ostream& os) {
  if (!ids.empty() && ids.size() != report.per_sample_tf.size())
    throw std::invalid_argument("write_report_csv: id count mismatch");
  os << "sample_id,l_tf,weight\n";
  char buf[160];
  for (std::size_t i = 0; i < report.per_sample_tf.size(); ++i) {
    const std::string id = ids.empty() ? std::to_string(i) : ids[i];
    std::snprintf(buf, sizeof(buf), "%s,%.10g,%.10g\n", id.c_str(), report.per_sample_tf[i],
                  report.weights[i]);
    os << buf;
  }
}

}  // namespace pse
