#pragma once

#include <numbers>

#include "mrsq/lcm/lineshape.hpp"
#include "mrsq/lcm/spline.hpp"
#include "mrsq/signal/snr.hpp"

namespace mrsq::lcm {

struct FitConfig {
  PpmWindow window{0.2, 4.2};
  double knot_spacing = 0.4;
  std::size_t lineshape_half_width = 4;
  double alpha_S = 1.0;
  double alpha_B = 1.0;
  double gamma0 = 2.0;       // s^-1
  double sigma_gamma = 2.0;  // s^-1
  double sigma_f = 3.0;      // Hz
  int max_outer_iters = 100;
  double tol = 1e-8;
  double phi0_bound = std::numbers::pi / 2;
  double phi1_bound = 2.0;
  double gamma_max = 20.0;
  double f_bound = 10.0;
  double phi0_grid_step = std::numbers::pi / 18;
  bool fit_lineshape = true;
  double collinear_threshold = 0.999;
  double reference_ppm = kWaterPpm;
  SnrWindows noise_windows{};

  void validate() const {
    if (!(sigma_gamma > 0.0) || !(sigma_f > 0.0)) throw ConfigError("prior widths must be positive");
    if (alpha_S < 0.0 || alpha_B < 0.0) throw ConfigError("regularization weights must be >= 0");
    if (max_outer_iters < 1) throw ConfigError("max_outer_iters must be positive");
    if (!(tol > 0.0)) throw ConfigError("tol must be positive");
    if (lineshape_half_width < 1) throw ConfigError("lineshape half width must be >= 1");
  }
};

/// Every parameter of the linear-combination model.
struct LcmParams {
  double phi0 = 0.0;
  double phi1 = 0.0;
  RealVec gamma;
  RealVec f;
  Lineshape S;
  RealVec H;  // spline coefficients
  RealVec C;  // concentrations
};

/// Sample SD of the real-part spectrum over the signal-free window.
inline double estimate_noise_sigma(std::span<const Complex> spectrum, const AcquisitionParams& acq,
                                   const SnrWindows& w = {}, double reference_ppm = kWaterPpm) {
  const RealVec axis = ppm_axis(acq, reference_ppm);
  const auto idx = ppm_window(axis, w.noise_lo, w.noise_hi);
  if (idx.size() < 2) throw ArgumentError("noise window lies outside the ppm axis");
  return real_part_sd(spectrum, idx);
}

/// Complex model inside the bracket, exp[-i phase] excluded, at `bins`:
/// sum_j H_j B_j + sum_l C_l (S * M_l(gamma_l, f_l)).
inline ComplexVec model_inner(const LcmParams& p, const BasisSet& basis, const SplineDesign& spline,
                              const AcquisitionParams& acq) {
  ComplexVec out(spline.bins.size());
  const long n = static_cast<long>(acq.num_points);
  const long h = static_cast<long>(p.S.half_width());
  for (std::size_t l = 0; l < basis.size(); ++l) {
    if (p.C[l] == 0.0) continue;
    const ComplexVec e = apply_imperfections(basis.entries[l].m, p.gamma[l], p.f[l], acq);
    for (std::size_t r = 0; r < spline.bins.size(); ++r) {
      const long k = static_cast<long>(spline.bins[r]);
      Complex acc{};
      for (long j = -h; j <= h; ++j)
        if (k - j >= 0 && k - j < n) acc += p.S.at(j) * e[static_cast<std::size_t>(k - j)];
      out[r] += p.C[l] * acc;
    }
  }
  for (std::size_t r = 0; r < spline.bins.size(); ++r)
    for (Eigen::Index j = 0; j < spline.matrix.cols(); ++j)
      out[r] += p.H[static_cast<std::size_t>(j)] * spline.matrix(static_cast<Eigen::Index>(r), j);
  return out;
}

/// Regularized fit objective: real-part data misfit over the window scaled by
/// 1/sigma^2, plus lineshape and baseline second-difference penalties and the
/// Gaussian priors on damping and frequency drift. The baseline penalty is
/// measured in noise units (divided by sigma^2) so the whole objective is
/// invariant to a global rescaling of the data.
inline double objective(const LcmParams& p, const Spectrum& data, const BasisSet& basis,
                        const FitConfig& cfg, double noise_sigma) {
  const auto nm = basis.size();
  if (p.C.size() != nm || p.gamma.size() != nm || p.f.size() != nm)
    throw ArgumentError("parameter vectors must have one entry per metabolite");
  if (basis.length() != data.fid.size()) throw ArgumentError("basis length mismatch");
  if (!(noise_sigma > 0.0)) throw ArgumentError("noise sigma must be positive");
  p.S.validate();
  const SplineDesign spline = spline_design(cfg.window, cfg.knot_spacing, data.acq, cfg.reference_ppm);
  if (p.H.size() != spline.n_basis()) throw ArgumentError("baseline coefficient count mismatch");

  const ComplexVec y = dft(data.fid);
  const ComplexVec inner = model_inner(p, basis, spline, data.acq);
  const ComplexVec ph = phase_ramp(p.phi0, p.phi1, data.acq);
  double data_term = 0.0;
  for (std::size_t r = 0; r < spline.bins.size(); ++r) {
    const std::size_t k = spline.bins[r];
    const double d = (y[k] - ph[k] * inner[r]).real();
    data_term += d * d;
  }
  data_term /= noise_sigma * noise_sigma;

  auto second_diff_sq = [](std::span<const double> v) {
    double s = 0.0;
    for (std::size_t i = 0; i + 2 < v.size(); ++i) {
      const double d = v[i] - 2.0 * v[i + 1] + v[i + 2];
      s += d * d;
    }
    return s;
  };
  const double pen_s = cfg.alpha_S * cfg.alpha_S * second_diff_sq(p.S.coeffs);
  const double pen_b =
      cfg.alpha_B * cfg.alpha_B * second_diff_sq(p.H) / (noise_sigma * noise_sigma);
  double prior = 0.0;
  for (std::size_t l = 0; l < nm; ++l) {
    const double dg = (p.gamma[l] - cfg.gamma0) / cfg.sigma_gamma;
    const double df = p.f[l] / cfg.sigma_f;
    prior += dg * dg + df * df;
  }
  return data_term + pen_s + pen_b + prior;
}

}  // namespace mrsq::lcm
