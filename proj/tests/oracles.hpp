#pragma once

// Reference computations used only by the tests. Nothing here calls into the
// library's numerical paths.

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

using cd = std::complex<double>;

/// O(N^2) shifted, 1/sqrt(N)-normalized DFT.
inline std::vector<cd> direct_dft(const std::vector<cd>& x) {
  const std::size_t n = x.size();
  std::vector<cd> out(n);
  const std::size_t c = n / 2;
  for (std::size_t j = 0; j < n; ++j) {
    const double k = static_cast<double>(j) - static_cast<double>(c);
    cd acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const long double ang = -2.0L * std::numbers::pi_v<long double> * k *
                              static_cast<long double>(t) / static_cast<long double>(n);
      acc += x[t] * cd(static_cast<double>(std::cos(ang)), static_cast<double>(std::sin(ang)));
    }
    out[j] = acc / std::sqrt(static_cast<double>(n));
  }
  return out;
}

inline std::vector<cd> random_complex(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<cd> v(n);
  for (auto& z : v) z = {nd(rng), nd(rng)};
  return v;
}

inline double rel_err(const std::vector<cd>& a, const std::vector<cd>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::norm(a[i] - b[i]);
    den += std::norm(b[i]);
  }
  return den == 0.0 ? std::sqrt(num) : std::sqrt(num / den);
}

/// Full width at half maximum of a sampled peak, linear interpolation at the
/// half-height crossings. `x` is the sample spacing.
inline double fwhm(const std::vector<double>& y, double x) {
  std::size_t p = 0;
  for (std::size_t i = 1; i < y.size(); ++i)
    if (y[i] > y[p]) p = i;
  const double half = y[p] / 2.0;
  std::size_t l = p, r = p;
  while (l > 0 && y[l] > half) --l;
  while (r + 1 < y.size() && y[r] > half) ++r;
  const double left = static_cast<double>(l) + (half - y[l]) / (y[l + 1] - y[l]);
  const double right = static_cast<double>(r - 1) + (y[r - 1] - half) / (y[r - 1] - y[r]);
  return (right - left) * x;
}

}  // namespace oracle
