#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mrsq/signal/types.hpp"

namespace mrsq {

enum class QuantMethod { lcm, staged };

inline const char* to_string(QuantMethod m) { return m == QuantMethod::lcm ? "lcm" : "staged"; }

struct ComponentFit {
  std::string name;
  RealVec spectrum;  // real part, full length
};

/// Output of either quantifier. Spectra are real parts over the full axis.
struct QuantResult {
  std::string dataset_id;
  QuantMethod method = QuantMethod::lcm;
  std::vector<std::string> metabolites;
  RealVec conc;           // absolute for lcm; ratio-to-tCr units for staged
  bool absolute = true;   // false when conc carries relative values only
  RealVec ratio_to_tCr;   // NaN when the basis has no creatine entries
  RealVec sd_percent;     // empty for staged
  RealVec ppm;
  RealVec input;
  RealVec fitted;
  RealVec baseline;
  RealVec residual;
  std::vector<ComponentFit> per_metabolite_fit;
  RealVec objective_trace;
  bool converged = true;
  std::vector<std::string> warnings;
  std::vector<std::string> collinear;
  double phi0 = 0.0, phi1 = 0.0;
  RealVec gamma, shift_hz;
  bool denoised = false;
  RealVec input_before_denoise;  // present when denoising ran
  double runtime_seconds = 0.0;

  std::optional<std::size_t> index_of(std::string_view name) const {
    for (std::size_t i = 0; i < metabolites.size(); ++i)
      if (metabolites[i] == name) return i;
    return std::nullopt;
  }
};

/// Names summed to form total creatine.
inline bool is_creatine(std::string_view name) {
  return name == "Cr" || name == "PCr" || name == "tCr";
}

/// C_l / (Cr + PCr); NaN entries when no creatine is present or it is zero.
inline RealVec ratios_to_tcr(const std::vector<std::string>& names, std::span<const double> conc) {
  double tcr = 0.0;
  bool any = false;
  for (std::size_t i = 0; i < names.size(); ++i)
    if (is_creatine(names[i])) {
      tcr += conc[i];
      any = true;
    }
  RealVec out(conc.size(), std::numeric_limits<double>::quiet_NaN());
  if (any && tcr > 0.0)
    for (std::size_t i = 0; i < conc.size(); ++i) out[i] = conc[i] / tcr;
  return out;
}

}  // namespace mrsq
