#pragma once

#include <cmath>
#include <numeric>

#include "mrsq/signal/types.hpp"

namespace mrsq::lcm {

/// Convolution kernel S_k over bin shifts k = -half_width..half_width.
struct Lineshape {
  RealVec coeffs;

  static Lineshape identity(std::size_t half_width = 4) {
    Lineshape s{RealVec(2 * half_width + 1, 0.0)};
    s.coeffs[half_width] = 1.0;
    return s;
  }

  std::size_t half_width() const { return coeffs.size() / 2; }
  double at(long k) const { return coeffs[static_cast<std::size_t>(k + static_cast<long>(half_width()))]; }

  void validate() const {
    if (coeffs.empty() || coeffs.size() % 2 == 0)
      throw ArgumentError("lineshape needs an odd number of coefficients");
    const double sum = std::accumulate(coeffs.begin(), coeffs.end(), 0.0);
    if (std::abs(sum - 1.0) > 1e-9) throw ArgumentError("lineshape coefficients must sum to 1");
  }
};

/// out[k] = sum_j S_j in[k - j], zero outside the spectrum.
inline ComplexVec lineshape_convolve(std::span<const Complex> in, const Lineshape& s) {
  s.validate();
  if (s.coeffs.size() > in.size()) throw ArgumentError("lineshape kernel wider than spectrum");
  const long n = static_cast<long>(in.size());
  const long h = static_cast<long>(s.half_width());
  ComplexVec out(in.size());
  for (long k = 0; k < n; ++k) {
    Complex acc{};
    for (long j = -h; j <= h; ++j) {
      const long src = k - j;
      if (src >= 0 && src < n) acc += s.at(j) * in[static_cast<std::size_t>(src)];
    }
    out[static_cast<std::size_t>(k)] = acc;
  }
  return out;
}

}  // namespace mrsq::lcm
