#include "pse/stft.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "reference.hpp"

using namespace pse;

namespace {

Waveform make_wave(std::vector<double> s, int rate = 8000) {
  Waveform w;
  w.samples = std::move(s);
  w.sample_rate = rate;
  return w;
}

double rel_rms_error(std::span<const double> a, std::span<const double> b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / (den > 0 ? den : 1.0));
}

// weighted spectral inner product matching the stored half-spectrum
double spec_inner(const Spectrogram& a, const Spectrogram& b) {
  double acc = 0;
  for (int t = 0; t < a.num_frames; ++t)
    for (int f = 0; f < a.num_bins(); ++f)
      acc += a.bin_weight(f) * (a.at(t, f).real() * b.at(t, f).real() +
                                a.at(t, f).imag() * b.at(t, f).imag());
  return acc;
}

}  // namespace

TEST_CASE("stft config validation") {
  CHECK_THROWS_AS((StftConfig{500, 128}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((StftConfig{512, 100}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((StftConfig{512, 512}.validate()), std::invalid_argument);
  CHECK_NOTHROW((StftConfig{512, 128}.validate()));
  CHECK_NOTHROW((StftConfig{256, 128}.validate()));
  CHECK((StftConfig{512, 128}.frames_to_samples(4)) == 512);
}

TEST_CASE("stft rejects empty and too-short input") {
  const StftConfig cfg;
  CHECK_THROWS_AS(stft(make_wave({}), cfg), std::invalid_argument);
  CHECK_THROWS_AS(stft(make_wave(std::vector<double>(200, 0.1)), cfg), std::invalid_argument);
}

TEST_CASE("all-zero waveform maps to an all-zero spectrogram") {
  const Spectrogram spec = stft(make_wave(std::vector<double>(1000, 0.0)), {});
  for (const auto& b : spec.bins) CHECK(std::abs(b) == 0.0);
}

TEST_CASE("frame count follows the padding rule") {
  const StftConfig cfg;
  const Spectrogram spec = stft(make_wave(std::vector<double>(4000, 0.1)), cfg);
  CHECK(spec.num_frames == 1 + 4000 / 128);
  CHECK(spec.orig_len == 4000);
  CHECK(spec.num_bins() == 257);
}

TEST_CASE("unit impulse gives a flat-magnitude first frame") {
  // With center padding the impulse at sample 0 sits mid-frame where the
  // window value is 1, so every bin of frame 0 has magnitude 1.
  std::vector<double> x(1000, 0.0);
  x[0] = 1.0;
  const Spectrogram spec = stft(make_wave(std::move(x)), {});
  const auto win = sqrt_hann_window(512);
  CHECK(win[256] == doctest::Approx(1.0));
  for (int f = 0; f < spec.num_bins(); ++f)
    CHECK(std::abs(spec.at(0, f)) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("stft frames match a direct DFT of the windowed frame") {
  const StftConfig cfg;
  const auto samples = ref::random_signal(2000, 99);
  const Spectrogram spec = stft(make_wave(samples), cfg);

  // rebuild the padded signal the same way and DFT two frames directly
  std::vector<double> padded(samples.size() + 512);
  for (int i = 0; i < 256; ++i) padded[i] = samples[256 - i];
  for (std::size_t i = 0; i < samples.size(); ++i) padded[256 + i] = samples[i];
  for (int i = 0; i < 256; ++i) padded[256 + samples.size() + i] = samples[samples.size() - 2 - i];
  const auto win = sqrt_hann_window(512);

  for (int t : {0, 5}) {
    std::vector<double> frame(512);
    for (int i = 0; i < 512; ++i) frame[i] = padded[t * 128 + i] * win[i];
    const auto oracle = ref::dft_real(frame);
    for (int f = 0; f < spec.num_bins(); ++f)
      CHECK(std::abs(spec.at(t, f) - oracle[f]) < 1e-9);
  }
}

TEST_CASE("bin-centered sine peaks at its own bin in every interior frame") {
  const StftConfig cfg;
  const int k = 40;  // 40 * 8000/512 = 625 Hz
  std::vector<double> x(4000);
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = 0.5 * std::sin(2.0 * std::numbers::pi * k * i / 512.0);
  const Spectrogram spec = stft(make_wave(std::move(x)), cfg);
  for (int t = 4; t < spec.num_frames - 4; ++t) {
    int argmax = 0;
    for (int f = 1; f < spec.num_bins(); ++f)
      if (std::abs(spec.at(t, f)) > std::abs(spec.at(t, argmax))) argmax = f;
    CHECK(argmax == k);
  }
}

TEST_CASE("istft(stft(x)) reconstructs x to 1e-6 relative rms") {
  const StftConfig cfg;
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = ref::random_signal(4000, 1000 + trial);
    const Waveform back = istft(stft(make_wave(x), cfg));
    REQUIRE(back.size() == 4000);
    CHECK(rel_rms_error(back.samples, x) <= 1e-6);
  }
}

TEST_CASE("round-trip holds across lengths that do not align with the hop") {
  const StftConfig cfg;
  for (long len : {513L, 1000L, 1025L, 4096L}) {
    const auto x = ref::random_signal(len, 77 + len);
    const Waveform back = istft(stft(make_wave(x), cfg));
    CHECK(rel_rms_error(back.samples, x) <= 1e-6);
  }
}

TEST_CASE("zero spectrogram synthesizes silence and istft is linear") {
  const StftConfig cfg;
  const auto xa = ref::random_signal(1500, 5);
  const auto xb = ref::random_signal(1500, 6);
  Spectrogram A = stft(make_wave(xa), cfg);
  Spectrogram B = stft(make_wave(xb), cfg);

  Spectrogram zero = A;
  std::fill(zero.bins.begin(), zero.bins.end(), std::complex<double>{});
  for (double s : istft(zero).samples) CHECK(s == 0.0);

  const double a = 1.7, b = -0.6;
  Spectrogram comb = A;
  for (std::size_t i = 0; i < comb.bins.size(); ++i) comb.bins[i] = a * A.bins[i] + b * B.bins[i];
  const Waveform lhs = istft(comb);
  const Waveform wa = istft(A), wb = istft(B);
  for (long i = 0; i < lhs.size(); ++i)
    CHECK(lhs.samples[i] == doctest::Approx(a * wa.samples[i] + b * wb.samples[i]).epsilon(1e-10));
}

TEST_CASE("istft rejects inconsistent geometry") {
  Spectrogram spec = stft(make_wave(ref::random_signal(1000, 3)), {});
  spec.orig_len = 500;  // would need 4 frames, spectrogram has 8
  CHECK_THROWS_AS(istft(spec), std::invalid_argument);
}

TEST_CASE("parseval: weighted spectral energy equals windowed frame energy") {
  const StftConfig cfg;
  const auto x = ref::random_signal(3000, 11);
  const Spectrogram spec = stft(make_wave(x), cfg);

  double spectral = 0;
  for (int t = 0; t < spec.num_frames; ++t)
    for (int f = 0; f < spec.num_bins(); ++f)
      spectral += spec.bin_weight(f) * std::norm(spec.at(t, f));

  std::vector<double> padded(x.size() + 512);
  for (int i = 0; i < 256; ++i) padded[i] = x[256 - i];
  for (std::size_t i = 0; i < x.size(); ++i) padded[256 + i] = x[i];
  for (int i = 0; i < 256; ++i) padded[256 + x.size() + i] = x[x.size() - 2 - i];
  const auto win = sqrt_hann_window(512);
  double frames = 0;
  for (int t = 0; t < spec.num_frames; ++t)
    for (int i = 0; i < 512; ++i) {
      const double v = padded[t * 128 + i] * win[i];
      frames += v * v;
    }
  CHECK(spectral == doctest::Approx(512.0 * frames).epsilon(1e-8));
}

TEST_CASE("istft_adjoint satisfies the weighted inner-product identity") {
  const StftConfig cfg;
  const long len = 9 * 128 + 40;  // 10 frames
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    Spectrogram A = stft(make_wave(ref::random_signal(len, rng())), cfg);
    // randomize to cover spectrograms that are not stft images
    for (auto& b : A.bins) {
      b = {ref::random_signal(1, rng())[0], ref::random_signal(1, rng())[0]};
    }
    const auto v = ref::random_signal(len, rng());
    const Waveform left = istft(A);
    double lhs = 0;
    for (long i = 0; i < len; ++i) lhs += left.samples[i] * v[i];
    const Spectrogram adj = istft_adjoint(v, cfg, A.num_frames, len);
    const double rhs = spec_inner(A, adj);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-8));
  }
}

TEST_CASE("istft_adjoint of zero is zero and geometry is checked") {
  const StftConfig cfg;
  const std::vector<double> zero(1000, 0.0);
  const Spectrogram adj = istft_adjoint(zero, cfg, cfg.num_frames_for(1000), 1000);
  for (const auto& b : adj.bins) CHECK(std::abs(b) == 0.0);
  CHECK_THROWS_AS(istft_adjoint(zero, cfg, 3, 1000), std::invalid_argument);
  CHECK_THROWS_AS(istft_adjoint(zero, cfg, cfg.num_frames_for(999), 999), std::invalid_argument);
}

TEST_CASE("istft jacobian columns match the weighted adjoint by finite differences") {
  const StftConfig cfg;
  const long len = 700;
  std::mt19937_64 rng(31);
  Spectrogram A = stft(make_wave(ref::random_signal(len, 8)), cfg);

  for (int probe = 0; probe < 12; ++probe) {
    const int t = static_cast<int>(rng() % A.num_frames);
    const int f = static_cast<int>(rng() % A.num_bins());
    const long n = static_cast<long>(rng() % len);
    const bool imag_part = (rng() & 1) != 0 && f != 0 && f != A.config.fft_size / 2;

    const double h = 1e-6;
    Spectrogram Ap = A, Am = A;
    if (imag_part) {
      Ap.at(t, f) += std::complex<double>(0, h);
      Am.at(t, f) -= std::complex<double>(0, h);
    } else {
      Ap.at(t, f) += h;
      Am.at(t, f) -= h;
    }
    const double fd = (istft(Ap).samples[n] - istft(Am).samples[n]) / (2 * h);

    std::vector<double> e(len, 0.0);
    e[n] = 1.0;
    const Spectrogram adj = istft_adjoint(e, cfg, A.num_frames, len);
    // the raw entry derivative carries the Hermitian weight on top of the
    // weighted-inner-product adjoint
    const double expected =
        A.bin_weight(f) * (imag_part ? adj.at(t, f).imag() : adj.at(t, f).real());
    CHECK(fd == doctest::Approx(expected).epsilon(1e-6));
  }
}

TEST_CASE("sliced spectrogram keeps consistent geometry") {
  const StftConfig cfg;
  const Spectrogram spec = stft(make_wave(ref::random_signal(2000, 13)), cfg);
  const Spectrogram head = spec.first_frames(5);
  CHECK(head.num_frames == 5);
  CHECK(cfg.num_frames_for(head.orig_len) == 5);
  CHECK(head.bins.size() == 5u * spec.num_bins());
}

TEST_CASE("convolution matches a direct sum and handles edge cases") {
  const auto x = ref::random_signal(300, 91);
  const auto h = ref::random_signal(40, 92);
  const auto y = convolve_truncated(x, h);
  REQUIRE(y.size() == x.size());
  for (long i : {0L, 5L, 39L, 150L, 299L}) {
    double acc = 0;
    for (long k = 0; k <= std::min<long>(i, 39); ++k) acc += h[k] * x[i - k];
    CHECK(y[i] == doctest::Approx(acc).epsilon(1e-12));
  }
  CHECK_THROWS_AS(convolve_truncated(x, {}), std::invalid_argument);
}

TEST_CASE("spectrogram csv dump has a row per bin") {
  const Spectrogram spec = stft(make_wave(ref::random_signal(513, 17)), {});
  std::ostringstream os;
  dump_spectrogram_csv(spec, os);
  long rows = 0;
  for (char c : os.str())
    if (c == '\n') ++rows;
  CHECK(rows == 1 + static_cast<long>(spec.num_frames) * spec.num_bins());
}
