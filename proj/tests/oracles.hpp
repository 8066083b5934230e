#pragma once

// Independent reference computations shared by the unit tests.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <Eigen/Core>

namespace oracle {

using hp = boost::multiprecision::cpp_bin_float_50;

// betas of linear(start, end, T), evaluated in 50-digit arithmetic.
inline std::vector<hp> linear_betas(double start, double end, int steps) {
  std::vector<hp> b;
  for (int i = 0; i < steps; ++i) {
    b.push_back(steps == 1 ? hp(start) : hp(start) + (hp(end) - hp(start)) * i / (steps - 1));
  }
  return b;
}

// ᾱ_0..ᾱ_T.
inline std::vector<hp> alpha_bars(const std::vector<hp>& betas) {
  std::vector<hp> ab{hp(1)};
  for (const hp& b : betas) ab.push_back(ab.back() * (1 - b));
  return ab;
}

// γ_t in its β_t² / (2σ_t²α_t(1−ᾱ_t)) form.
inline hp gamma(const std::vector<hp>& betas, int t) {
  const auto ab = alpha_bars(betas);
  const hp beta = betas[t - 1];
  const hp alpha = 1 - beta;
  if (t == 1) return 1 / (2 * alpha);
  const hp sigma2 = (1 - ab[t - 1]) / (1 - ab[t]) * beta;
  return beta * beta / (2 * sigma2 * alpha * (1 - ab[t]));
}

// Direct O(n²) DFT of one real frame, bins 0..n/2.
inline std::vector<std::complex<double>> dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double phase = -2.0 * std::numbers::pi * static_cast<double>((k * j) % n) / static_cast<double>(n);
      acc += x[j] * std::complex<double>(std::cos(phase), std::sin(phase));
    }
    out[k] = acc;
  }
  return out;
}

// Reflect padding by n/2 on both sides, then frames every `hop` samples.
inline std::vector<double> padded_frame(const Eigen::VectorXd& signal, int fft, int hop, int f) {
  const long n = signal.size();
  std::vector<double> frame(fft);
  for (int k = 0; k < fft; ++k) {
    long i = static_cast<long>(f) * hop - fft / 2 + k;
    while (n > 1 && (i < 0 || i >= n)) i = i < 0 ? -i : 2 * (n - 1) - i;
    if (n == 1) i = 0;
    frame[k] = signal[i] * (0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * k / fft));
  }
  return frame;
}

}  // namespace oracle
