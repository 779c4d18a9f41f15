#pragma once

#include <cmath>
#include <complex>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "mrsq/error.hpp"

namespace mrsq {

using Complex = std::complex<double>;
using ComplexVec = std::vector<Complex>;
using RealVec = std::vector<double>;

enum class Vendor { unknown, philips, siemens, ge, united_imaging };

struct AcquisitionParams {
  double spectral_width = 2000.0;   // Hz
  std::size_t num_points = 2048;
  double transmitter_freq = 127.7;  // MHz
  double echo_time = 35.0;          // ms
  double repetition_time = 2000.0;  // ms
  double field_strength = 3.0;      // T
  Vendor vendor = Vendor::unknown;
  std::string sequence = "PRESS";

  double dwell_time() const { return 1.0 / spectral_width; }
  double bin_width() const { return spectral_width / static_cast<double>(num_points); }

  void validate() const {
    if (!(spectral_width > 0.0) || !std::isfinite(spectral_width))
      throw ArgumentError("spectral_width must be positive");
    if (num_points < 2) throw ArgumentError("num_points must be at least 2");
  }
};

enum class GroupLabel { healthy, patient, unlabeled };
enum class Sex { female, male, other };

/// Subject metadata that survives anonymization.
struct SubjectMeta {
  std::string opaque_id;
  GroupLabel group = GroupLabel::unlabeled;
  std::optional<double> age;
  std::optional<Sex> sex;
};

struct Spectrum {
  ComplexVec fid;
  AcquisitionParams acq;
  SubjectMeta meta;

  void validate() const {
    acq.validate();
    if (fid.size() != acq.num_points)
      throw ArgumentError("fid length " + std::to_string(fid.size()) +
                          " does not match num_points " + std::to_string(acq.num_points));
    for (const auto& z : fid)
      if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
        throw ArgumentError("fid contains non-finite samples");
  }
};

struct BasisEntry {
  std::string name;
  ComplexVec m;  // ideal time-domain signal
};

/// Acquisition tags used for automatic basis selection.
struct BasisTags {
  double field_strength = 3.0;
  std::string sequence = "PRESS";
  double echo_time = 35.0;
};

struct BasisSet {
  std::string name;
  BasisTags tags;
  double spectral_width = 2000.0;
  double transmitter_freq = 127.7;
  std::vector<BasisEntry> entries;

  std::size_t size() const { return entries.size(); }
  std::size_t length() const { return entries.empty() ? 0 : entries.front().m.size(); }

  std::optional<std::size_t> index_of(std::string_view metabolite) const {
    for (std::size_t i = 0; i < entries.size(); ++i)
      if (entries[i].name == metabolite) return i;
    return std::nullopt;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.name);
    return out;
  }

  void validate() const {
    if (entries.empty()) throw ArgumentError("basis set has no entries");
    std::unordered_set<std::string> seen;
    const auto n = entries.front().m.size();
    for (const auto& e : entries) {
      if (!seen.insert(e.name).second)
        throw ArgumentError("duplicate metabolite name '" + e.name + "'");
      if (e.m.size() != n)
        throw ArgumentError("basis entry '" + e.name + "' has length " +
                            std::to_string(e.m.size()) + ", expected " + std::to_string(n));
    }
  }
};

/// Zero/first-order phase plus per-metabolite damping and frequency drift.
struct ImperfectionFactors {
  double phi0 = 0.0;  // rad
  double phi1 = 0.0;  // rad/s, applied as (bin offset)*dwell*phi1
  RealVec gamma;      // s^-1
  RealVec f;          // Hz

  static ImperfectionFactors none(std::size_t n_metabolites) {
    return {0.0, 0.0, RealVec(n_metabolites, 0.0), RealVec(n_metabolites, 0.0)};
  }
};

/// Frequency-domain background signal.
struct Baseline {
  ComplexVec b;
};

}  // namespace mrsq
