#pragma once

// Simulated metabolite basis sets and spectra. Peak tables are singlet
// approximations of the usual brain metabolites (no J-evolution); they are
// good enough for built-in catalogs and for exercising the quantifiers.

#include <map>
#include <random>

#include "mrsq/signal/model.hpp"
#include "mrsq/signal/snr.hpp"

namespace mrsq::synthetic {

struct Peak {
  double ppm;
  double amplitude;
};

inline const std::map<std::string, std::vector<Peak>>& peak_table() {
  static const std::map<std::string, std::vector<Peak>> table = {
      {"Ala", {{1.47, 3}, {3.77, 1}}},
      {"Asp", {{2.65, 1}, {2.80, 1}, {3.89, 1}}},
      {"Cr", {{3.027, 3}, {3.913, 2}}},
      {"PCr", {{3.029, 3}, {3.930, 2}}},
      {"GABA", {{1.89, 2}, {2.28, 2}, {3.01, 2}}},
      {"Glc", {{3.23, 1}, {3.40, 1}, {3.46, 1}, {3.52, 1}, {3.82, 1}}},
      {"Gln", {{2.11, 1}, {2.13, 1}, {2.44, 2}, {3.75, 1}}},
      {"Glu", {{2.04, 1}, {2.12, 1}, {2.34, 2}, {3.74, 1}}},
      {"GPC", {{3.212, 9}, {3.61, 2}, {4.31, 2}}},
      {"PCh", {{3.208, 9}, {3.64, 2}, {4.28, 2}}},
      {"GSH", {{2.15, 2}, {2.54, 1}, {2.95, 1}, {3.77, 1}}},
      {"Ins", {{3.27, 1}, {3.52, 2}, {3.61, 2}, {4.05, 1}}},
      {"Lac", {{1.31, 3}, {4.10, 1}}},
      {"NAA", {{2.008, 3}, {2.49, 0.5}, {2.52, 0.5}, {2.67, 0.5}, {2.70, 0.5}, {4.38, 1}}},
      {"NAAG", {{2.042, 3}, {2.18, 1}, {2.52, 1}, {2.72, 1}}},
      {"Scyllo", {{3.34, 6}}},
      {"Tau", {{3.25, 2}, {3.42, 2}}},
  };
  return table;
}

/// The 17 metabolites of the default in vivo basis.
inline std::vector<std::string> default_metabolites() {
  return {"Ala", "Asp", "Cr", "PCr", "GABA", "Glc", "Gln", "Glu", "GPC",
          "PCh", "GSH", "Ins", "Lac", "NAA", "NAAG", "Scyllo", "Tau"};
}

/// Time-domain signal of a set of Lorentzian lines with common damping (s^-1).
inline ComplexVec lines_fid(std::span<const Peak> peaks, double damping,
                            const AcquisitionParams& acq) {
  ComplexVec fid(acq.num_points);
  const double dt = acq.dwell_time();
  for (const auto& p : peaks) {
    const double hz = ppm_to_hz(p.ppm, acq);
    const Complex rate{-damping, 2.0 * std::numbers::pi * hz};
    for (std::size_t n = 0; n < fid.size(); ++n)
      fid[n] += p.amplitude * std::exp(rate * (static_cast<double>(n) * dt));
  }
  return fid;
}

/// Base damping of basis lines: 3 Hz FWHM.
inline constexpr double kBasisDamping = 3.0 * std::numbers::pi;

inline BasisSet make_basis(const std::vector<std::string>& names, const AcquisitionParams& acq,
                           std::string set_name = "simulated",
                           double damping = kBasisDamping) {
  BasisSet b;
  b.name = std::move(set_name);
  b.tags = {acq.field_strength, acq.sequence, acq.echo_time};
  b.spectral_width = acq.spectral_width;
  b.transmitter_freq = acq.transmitter_freq;
  for (const auto& n : names) {
    auto it = peak_table().find(n);
    if (it == peak_table().end()) throw ArgumentError("no peak table for metabolite " + n);
    b.entries.push_back({n, lines_fid(it->second, damping, acq)});
  }
  return b;
}

/// Real Gaussian bump on the frequency axis.
inline Baseline gaussian_bump(const AcquisitionParams& acq, double center_ppm, double width_ppm,
                              double amplitude) {
  const RealVec axis = ppm_axis(acq);
  Baseline b{ComplexVec(acq.num_points)};
  for (std::size_t k = 0; k < axis.size(); ++k) {
    const double z = (axis[k] - center_ppm) / width_ppm;
    b.b[k] = amplitude * std::exp(-0.5 * z * z);
  }
  return b;
}

/// Adds complex white Gaussian noise (per-component SD `sigma`) to a FID.
template <class Rng>
void add_noise(ComplexVec& fid, double sigma, Rng& rng) {
  std::normal_distribution<double> nd(0.0, sigma);
  for (auto& z : fid) z += Complex{nd(rng), nd(rng)};
}

/// Noise SD that gives a noiseless spectrum the requested raw SNR.
inline double sigma_for_snr(std::span<const Complex> noiseless_spectrum,
                            const AcquisitionParams& acq, double raw_snr,
                            const SnrWindows& w = {}) {
  const RealVec axis = ppm_axis(acq);
  double peak = 0.0;
  for (auto k : ppm_window(axis, w.signal_lo, w.signal_hi))
    peak = std::max(peak, noiseless_spectrum[k].real());
  return peak / (2.0 * raw_snr);
}

struct Scenario {
  BasisSet basis;
  RealVec conc;
  ImperfectionFactors ifs;
  Baseline baseline;
  AcquisitionParams acq;
};

/// Builds a spectrum from the scenario; raw_snr <= 0 means noiseless.
template <class Rng>
Spectrum render(const Scenario& sc, double raw_snr, Rng& rng) {
  const ComplexVec spec = forward_model(sc.basis, sc.conc, sc.ifs, sc.baseline, sc.acq);
  Spectrum s;
  s.acq = sc.acq;
  s.fid = idft(spec);
  if (raw_snr > 0.0) add_noise(s.fid, sigma_for_snr(spec, sc.acq, raw_snr), rng);
  return s;
}

inline Spectrum render_noiseless(const Scenario& sc) {
  std::mt19937_64 unused(0);
  return render(sc, 0.0, unused);
}

/// Typical adult brain concentrations (mM) for the default metabolites.
inline const std::map<std::string, double>& typical_concentrations() {
  static const std::map<std::string, double> c = {
      {"Ala", 0.5}, {"Asp", 1.5}, {"Cr", 4.5},  {"PCr", 3.5},  {"GABA", 1.0},   {"Glc", 1.0},
      {"Gln", 3.0}, {"Glu", 9.0}, {"GPC", 1.0}, {"PCh", 0.6},  {"GSH", 1.5},    {"Ins", 6.0},
      {"Lac", 0.5}, {"NAA", 10.0}, {"NAAG", 1.2}, {"Scyllo", 0.3}, {"Tau", 1.5}};
  return c;
}

/// One simulated subject: typical concentrations times `scale`, with
/// between-subject variation `cv`, mild phase, linewidth and shift errors,
/// a small baseline bump, and noise at `raw_snr`.
template <class Rng>
Spectrum subject_spectrum(const AcquisitionParams& acq, const std::map<std::string, double>& scale,
                          double cv, double raw_snr, Rng& rng) {
  Scenario sc;
  sc.acq = acq;
  sc.basis = make_basis(default_metabolites(), acq);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  for (const auto& e : sc.basis.entries) {
    double c = typical_concentrations().at(e.name);
    if (auto it = scale.find(e.name); it != scale.end()) c *= it->second;
    sc.conc.push_back(std::max(0.0, c * (1.0 + cv * nd(rng))));
  }
  sc.ifs = ImperfectionFactors::none(sc.basis.size());
  sc.ifs.phi0 = 0.2 * ud(rng);
  const double shift = 1.0 * ud(rng), width = 2.5 + 0.5 * ud(rng);
  for (std::size_t m = 0; m < sc.basis.size(); ++m) {
    sc.ifs.gamma[m] = width;
    sc.ifs.f[m] = shift;
  }
  const ComplexVec clean = forward_model(sc.basis, sc.conc, sc.ifs, Baseline{}, acq);
  double peak = 0.0;
  for (const auto& z : clean) peak = std::max(peak, std::abs(z));
  sc.baseline = gaussian_bump(acq, 2.6, 0.9, 0.05 * peak);
  return render(sc, raw_snr, rng);
}

}  // namespace mrsq::synthetic
