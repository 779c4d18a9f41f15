#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>

#include "mrsq/signal/fft.hpp"
#include "mrsq/signal/types.hpp"

namespace mrsq {

inline constexpr double kWaterPpm = 4.7;

/// Chemical-shift axis for the shifted spectrum, decreasing with bin index;
/// the carrier bin sits at `reference_ppm`.
inline RealVec ppm_axis(const AcquisitionParams& acq, double reference_ppm = kWaterPpm) {
  acq.validate();
  if (!(acq.transmitter_freq > 0.0)) throw ArgumentError("transmitter frequency must be positive");
  const std::size_t n = acq.num_points;
  const double df = acq.bin_width();
  const double c = static_cast<double>(carrier_bin(n));
  RealVec axis(n);
  for (std::size_t k = 0; k < n; ++k)
    axis[k] = reference_ppm - (static_cast<double>(k) - c) * df / acq.transmitter_freq;
  return axis;
}

/// Offset in Hz from the carrier of a resonance at `ppm`.
inline double ppm_to_hz(double ppm, const AcquisitionParams& acq,
                        double reference_ppm = kWaterPpm) {
  return (reference_ppm - ppm) * acq.transmitter_freq;
}

/// Bin indices whose ppm lies inside [lo, hi], in ascending index order.
inline std::vector<std::size_t> ppm_window(std::span<const double> axis, double lo, double hi) {
  if (lo > hi) std::swap(lo, hi);
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < axis.size(); ++k)
    if (axis[k] >= lo && axis[k] <= hi) idx.push_back(k);
  return idx;
}

/// exp[-(gamma + i 2 pi f) n dt] applied to a time-domain signal.
inline ComplexVec perturb_fid(std::span<const Complex> m, double gamma, double f,
                              double dwell) {
  ComplexVec out(m.size());
  const Complex rate{-gamma, -2.0 * std::numbers::pi * f};
  const Complex step = std::exp(rate * dwell);
  Complex w{1.0, 0.0};
  for (std::size_t n = 0; n < m.size(); ++n) {
    // recurrence, re-anchored every 128 samples to bound rounding drift
    if (n % 128 == 0) w = std::exp(rate * (static_cast<double>(n) * dwell));
    out[n] = detail::cmul(m[n], w);
    w = detail::cmul(w, step);
  }
  return out;
}

/// DFT of m(n dt) damped by gamma (s^-1) and shifted by f (Hz).
/// A positive f moves every line down by f Hz (toward higher ppm).
inline ComplexVec apply_imperfections(std::span<const Complex> m, double gamma, double f,
                                      const AcquisitionParams& acq) {
  if (gamma < 0.0) throw ArgumentError("gamma must be non-negative");
  if (gamma == 0.0 && f == 0.0) return dft(m);
  return dft(perturb_fid(m, gamma, f, acq.dwell_time()));
}

/// Spectra of d/dgamma and d/df of apply_imperfections().
struct ImperfectionDerivatives {
  ComplexVec value;
  ComplexVec d_gamma;
  ComplexVec d_f;
};

inline ImperfectionDerivatives apply_imperfections_with_derivatives(
    std::span<const Complex> m, double gamma, double f, const AcquisitionParams& acq) {
  const double dt = acq.dwell_time();
  ComplexVec p = perturb_fid(m, gamma, f, dt);
  ComplexVec dg(p.size()), dfr(p.size());
  const Complex two_pi_i{0.0, 2.0 * std::numbers::pi};
  for (std::size_t n = 0; n < p.size(); ++n) {
    const double t = static_cast<double>(n) * dt;
    dg[n] = -t * p[n];
    dfr[n] = -two_pi_i * t * p[n];
  }
  return {dft(p), dft(dg), dft(dfr)};
}

/// Per-bin phase factor exp[-i(phi0 + (k - N/2) dt phi1)].
inline ComplexVec phase_ramp(double phi0, double phi1, const AcquisitionParams& acq) {
  const std::size_t n = acq.num_points;
  const double c = static_cast<double>(carrier_bin(n));
  const double dt = acq.dwell_time();
  ComplexVec out(n);
  for (std::size_t k = 0; k < n; ++k)
    out[k] = std::polar(1.0, -(phi0 + (static_cast<double>(k) - c) * dt * phi1));
  return out;
}

namespace detail {
inline void check_model_dims(const BasisSet& basis, std::span<const double> conc,
                             const ImperfectionFactors& ifs, const Baseline& baseline,
                             const AcquisitionParams& acq) {
  const auto nm = basis.size();
  if (conc.size() != nm) throw ArgumentError("concentration vector length mismatch");
  if (ifs.gamma.size() != nm || ifs.f.size() != nm)
    throw ArgumentError("imperfection arrays must have one entry per metabolite");
  if (basis.length() != acq.num_points) throw ArgumentError("basis length mismatch");
  if (!baseline.b.empty() && baseline.b.size() != acq.num_points)
    throw ArgumentError("baseline length mismatch");
  for (double c : conc)
    if (c < 0.0) throw ArgumentError("concentrations must be non-negative");
}
}  // namespace detail

/// Noiseless spectrum exp[-i(phi0 + k dt phi1)] (B + sum_l C_l M_l(gamma_l, f_l)).
/// An empty baseline is treated as zero.
inline ComplexVec forward_model(const BasisSet& basis, std::span<const double> conc,
                                const ImperfectionFactors& ifs, const Baseline& baseline,
                                const AcquisitionParams& acq) {
  detail::check_model_dims(basis, conc, ifs, baseline, acq);
  const std::size_t n = acq.num_points;
  ComplexVec sum = baseline.b.empty() ? ComplexVec(n) : baseline.b;
  for (std::size_t l = 0; l < basis.size(); ++l) {
    if (conc[l] == 0.0) continue;
    const ComplexVec ml = apply_imperfections(basis.entries[l].m, ifs.gamma[l], ifs.f[l], acq);
    for (std::size_t k = 0; k < n; ++k) sum[k] += conc[l] * ml[k];
  }
  const ComplexVec ph = phase_ramp(ifs.phi0, ifs.phi1, acq);
  for (std::size_t k = 0; k < n; ++k) sum[k] *= ph[k];
  return sum;
}

/// Column layout of forward_model_jacobian().
struct ModelParamLayout {
  std::size_t n_metabolites;
  std::size_t phi0() const { return 0; }
  std::size_t phi1() const { return 1; }
  std::size_t gamma(std::size_t l) const { return 2 + l; }
  std::size_t f(std::size_t l) const { return 2 + n_metabolites + l; }
  std::size_t conc(std::size_t l) const { return 2 + 2 * n_metabolites + l; }
  std::size_t size() const { return 2 + 3 * n_metabolites; }
};

/// Analytic derivative of forward_model() (N x (2 + 3 N_M), complex) with
/// columns [phi0, phi1, gamma_1..M, f_1..M, C_1..M].
inline Eigen::MatrixXcd forward_model_jacobian(const BasisSet& basis, std::span<const double> conc,
                                               const ImperfectionFactors& ifs,
                                               const Baseline& baseline,
                                               const AcquisitionParams& acq) {
  detail::check_model_dims(basis, conc, ifs, baseline, acq);
  const std::size_t n = acq.num_points;
  const ModelParamLayout lay{basis.size()};
  const ComplexVec ph = phase_ramp(ifs.phi0, ifs.phi1, acq);
  Eigen::MatrixXcd jac = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(n),
                                                static_cast<Eigen::Index>(lay.size()));
  ComplexVec inner = baseline.b.empty() ? ComplexVec(n) : baseline.b;
  for (std::size_t l = 0; l < basis.size(); ++l) {
    const auto d = apply_imperfections_with_derivatives(basis.entries[l].m, ifs.gamma[l],
                                                        ifs.f[l], acq);
    for (std::size_t k = 0; k < n; ++k) {
      const auto r = static_cast<Eigen::Index>(k);
      inner[k] += conc[l] * d.value[k];
      jac(r, static_cast<Eigen::Index>(lay.gamma(l))) = ph[k] * conc[l] * d.d_gamma[k];
      jac(r, static_cast<Eigen::Index>(lay.f(l))) = ph[k] * conc[l] * d.d_f[k];
      jac(r, static_cast<Eigen::Index>(lay.conc(l))) = ph[k] * d.value[k];
    }
  }
  const double c = static_cast<double>(carrier_bin(n));
  const double dt = acq.dwell_time();
  const Complex mi{0.0, -1.0};
  for (std::size_t k = 0; k < n; ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    const Complex v = ph[k] * inner[k];
    jac(r, 0) = mi * v;
    jac(r, 1) = mi * (static_cast<double>(k) - c) * dt * v;
  }
  return jac;
}

}  // namespace mrsq
