#pragma once

#include <algorithm>
#include <cmath>

#include "mrsq/signal/model.hpp"

namespace mrsq {

struct SnrWindows {
  double signal_lo = 1.8, signal_hi = 4.0;
  double noise_lo = -2.0, noise_hi = -0.5;
};

struct SnrEstimate {
  double raw;       // peak / (2 * noise SD)
  long display;     // round(peak / noise SD)
  double peak;
  double noise_sd;
};

/// Sample SD (n-1) of the real part of `spec` over `idx`.
inline double real_part_sd(std::span<const Complex> spec, std::span<const std::size_t> idx) {
  if (idx.size() < 2) throw ArgumentError("noise window needs at least two bins");
  double mean = 0.0;
  for (auto k : idx) mean += spec[k].real();
  mean /= static_cast<double>(idx.size());
  double ss = 0.0;
  for (auto k : idx) ss += (spec[k].real() - mean) * (spec[k].real() - mean);
  return std::sqrt(ss / static_cast<double>(idx.size() - 1));
}

/// SNR of the real-part spectrum: maximum over the metabolite window divided by
/// twice the noise SD in the signal-free window.
inline SnrEstimate snr_estimate(const Spectrum& s, const SnrWindows& w = {},
                                double reference_ppm = kWaterPpm) {
  s.validate();
  const RealVec axis = ppm_axis(s.acq, reference_ppm);
  const auto hi = *std::max_element(axis.begin(), axis.end());
  const auto lo = *std::min_element(axis.begin(), axis.end());
  if (w.signal_lo < lo || w.signal_hi > hi || w.noise_lo < lo || w.noise_hi > hi)
    throw ArgumentError("SNR windows fall outside the ppm axis");
  const auto sig = ppm_window(axis, w.signal_lo, w.signal_hi);
  const auto noise = ppm_window(axis, w.noise_lo, w.noise_hi);
  if (sig.empty()) throw ArgumentError("empty signal window");
  const ComplexVec spec = dft(s.fid);
  double peak = -std::numeric_limits<double>::infinity();
  for (auto k : sig) peak = std::max(peak, spec[k].real());
  const double sd = real_part_sd(spec, noise);
  if (!(sd > 0.0)) throw DegenerateError("noise window has zero variance");
  const double raw = peak / (2.0 * sd);
  return {raw, std::lround(2.0 * raw), peak, sd};
}

}  // namespace mrsq
