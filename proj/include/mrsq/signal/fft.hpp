#pragma once

#include <bit>
#include <cmath>
#include <numbers>
#include <span>

#include "mrsq/signal/types.hpp"

namespace mrsq {

namespace detail {

inline bool is_pow2(std::size_t n) { return n != 0 && std::has_single_bit(n); }

// Twiddles exp(-2 pi i k / n), k < n/2, computed directly (no recurrence
// drift) and cached per size and thread.
inline const ComplexVec& twiddles(std::size_t n) {
  thread_local std::size_t cached_n = 0;
  thread_local ComplexVec table;
  if (cached_n != n) {
    table.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      table[k] = {std::cos(ang), std::sin(ang)};
    }
    cached_n = n;
  }
  return table;
}

// Plain complex product; std::complex operator* goes through the Annex G
// inf/nan handling, which dominates the butterfly cost.
inline Complex cmul(Complex a, Complex b) {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

// In-place iterative radix-2 transform. sign = -1 forward, +1 inverse. Unnormalized.
inline void fft_pow2(ComplexVec& a, int sign) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  if (n < 2) return;
  const ComplexVec& tw = twiddles(n);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const Complex t = tw[k * stride];
        const Complex w = sign < 0 ? t : std::conj(t);
        const Complex u = a[i + k];
        const Complex v = cmul(a[i + k + half], w);
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
}

inline ComplexVec dft_direct(std::span<const Complex> x, int sign) {
  const std::size_t n = x.size();
  ComplexVec out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Complex acc{0.0, 0.0};
    for (std::size_t j = 0; j < n; ++j) {
      const double ang = sign * 2.0 * std::numbers::pi *
                         static_cast<double>((k * j) % n) / static_cast<double>(n);
      acc += x[j] * Complex{std::cos(ang), std::sin(ang)};
    }
    out[k] = acc;
  }
  return out;
}

inline ComplexVec transform(std::span<const Complex> x, int sign) {
  if (x.empty()) throw ArgumentError("transform of empty input");
  if (is_pow2(x.size())) {
    ComplexVec a(x.begin(), x.end());
    fft_pow2(a, sign);
    return a;
  }
  return dft_direct(x, sign);
}

}  // namespace detail

/// Index of the carrier (zero-frequency) bin after the shift.
inline std::size_t carrier_bin(std::size_t n) { return n / 2; }

/// Forward time-to-frequency transform, 1/sqrt(N) scaled, with the zero
/// frequency moved to index N/2 so index 0 is the most negative frequency.
inline ComplexVec dft(std::span<const Complex> fid) {
  ComplexVec raw = detail::transform(fid, -1);
  const std::size_t n = raw.size();
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  const std::size_t shift = carrier_bin(n);
  ComplexVec out(n);
  for (std::size_t j = 0; j < n; ++j) out[j] = raw[(j + n - shift) % n] * scale;
  return out;
}

/// Inverse of dft().
inline ComplexVec idft(std::span<const Complex> spectrum) {
  const std::size_t n = spectrum.size();
  if (n == 0) throw ArgumentError("transform of empty input");
  const std::size_t shift = carrier_bin(n);
  ComplexVec unshifted(n);
  for (std::size_t k = 0; k < n; ++k) unshifted[k] = spectrum[(k + shift) % n];
  ComplexVec out = detail::transform(unshifted, +1);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (auto& z : out) z *= scale;
  return out;
}

}  // namespace mrsq
