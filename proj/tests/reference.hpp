// Independent serial reference implementations used as test oracles. These
// stay deliberately naive (direct DFT sums, trapezoid quadrature, explicit
// recursions) and never call into the kernels they check.
#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

namespace ref {

// O(n^2) DFT of a real frame, non-negative bins only.
inline std::vector<std::complex<double>> dft_real(std::span<const double> frame) {
  const long n = static_cast<long>(frame.size());
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (long k = 0; k <= n / 2; ++k) {
    double re = 0, im = 0;
    for (long i = 0; i < n; ++i) {
      const double a = -2.0 * std::numbers::pi * k * i / n;
      re += frame[i] * std::cos(a);
      im += frame[i] * std::sin(a);
    }
    out[k] = {re, im};
  }
  return out;
}

// Tiling oracle: repeats base and truncates to len.
inline std::vector<double> tile(std::span<const double> base, long len) {
  std::vector<double> out(len);
  for (long i = 0; i < len; ++i) out[i] = base[i % static_cast<long>(base.size())];
  return out;
}

// E1(x) = int_x^inf exp(-t)/t dt by composite trapezoid quadrature, doubling
// the resolution until the value is stable to 1e-12.
inline double exp_integral_e1(double x) {
  // integrate exp(-t)/t from x to a cutoff where the tail is negligible
  const double hi = x + 60.0;
  double prev = 0.0;
  for (long n = 1 << 10; n <= (1 << 22); n <<= 1) {
    const double h = (hi - x) / n;
    double sum = 0.5 * (std::exp(-x) / x + std::exp(-hi) / hi);
    for (long i = 1; i < n; ++i) {
      const double t = x + h * i;
      sum += std::exp(-t) / t;
    }
    const double val = sum * h;
    if (std::fabs(val - prev) < 1e-12) return val;
    prev = val;
  }
  return prev;
}

// Direct SISNR evaluation in long double, mean subtraction included.
inline double sisnr_db(std::span<const double> est, std::span<const double> r) {
  const long n = static_cast<long>(est.size());
  long double me = 0, mr = 0;
  for (long i = 0; i < n; ++i) {
    me += est[i];
    mr += r[i];
  }
  me /= n;
  mr /= n;
  long double er = 0, rr = 0, ee = 0;
  for (long i = 0; i < n; ++i) {
    const long double e = est[i] - me;
    const long double rv = r[i] - mr;
    er += e * rv;
    rr += rv * rv;
    ee += e * e;
  }
  const long double sig = er * er / rr;
  const long double noi = ee - sig;
  return static_cast<double>(-10.0L * std::log10(noi / sig));
}

// Scalar Adam recursion oracle.
struct AdamTrace {
  double m = 0, v = 0, p = 0;
  long t = 0;
  void step(double g, double lr, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    p -= lr * mh / (std::sqrt(vh) + eps);
  }
};

inline std::vector<double> random_signal(long n, std::uint64_t seed, double scale = 0.3) {
  std::mt19937_64 rng(seed);
  std::vector<double> out(n);
  for (long i = 0; i < n; ++i) out[i] = ((rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0) * scale;
  return out;
}

}  // namespace ref
