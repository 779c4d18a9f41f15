#pragma once

// JSON mappings for the domain types (platform-native formats and API payloads).

#include <json.hpp>

#include "mrsq/quant_result.hpp"
#include "mrsq/signal/types.hpp"

namespace mrsq {

using json = nlohmann::ordered_json;

NLOHMANN_JSON_SERIALIZE_ENUM(Vendor, {{Vendor::unknown, "unknown"},
                                      {Vendor::philips, "philips"},
                                      {Vendor::siemens, "siemens"},
                                      {Vendor::ge, "ge"},
                                      {Vendor::united_imaging, "united_imaging"}})
NLOHMANN_JSON_SERIALIZE_ENUM(GroupLabel, {{GroupLabel::unlabeled, "unlabeled"},
                                          {GroupLabel::healthy, "healthy"},
                                          {GroupLabel::patient, "patient"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Sex, {{Sex::other, "other"}, {Sex::female, "F"}, {Sex::male, "M"}})
NLOHMANN_JSON_SERIALIZE_ENUM(QuantMethod, {{QuantMethod::lcm, "lcm"},
                                           {QuantMethod::staged, "staged"}})

inline void to_json(json& j, const AcquisitionParams& a) {
  j = json{{"spectral_width", a.spectral_width},   {"num_points", a.num_points},
           {"transmitter_freq", a.transmitter_freq}, {"echo_time", a.echo_time},
           {"repetition_time", a.repetition_time}, {"field_strength", a.field_strength},
           {"vendor", a.vendor},                   {"sequence", a.sequence}};
}

inline void from_json(const json& j, AcquisitionParams& a) {
  a = AcquisitionParams{};
  a.spectral_width = j.value("spectral_width", a.spectral_width);
  a.num_points = j.value("num_points", a.num_points);
  a.transmitter_freq = j.value("transmitter_freq", a.transmitter_freq);
  a.echo_time = j.value("echo_time", a.echo_time);
  a.repetition_time = j.value("repetition_time", a.repetition_time);
  a.field_strength = j.value("field_strength", a.field_strength);
  a.vendor = j.value("vendor", a.vendor);
  a.sequence = j.value("sequence", a.sequence);
}

inline void to_json(json& j, const SubjectMeta& m) {
  j = json{{"opaque_id", m.opaque_id}, {"group_label", m.group}};
  if (m.age) j["age"] = *m.age;
  if (m.sex) j["sex"] = *m.sex;
}

inline void from_json(const json& j, SubjectMeta& m) {
  m = SubjectMeta{};
  m.opaque_id = j.value("opaque_id", std::string{});
  m.group = j.value("group_label", GroupLabel::unlabeled);
  if (j.contains("age") && j["age"].is_number()) m.age = j["age"].get<double>();
  if (j.contains("sex")) m.sex = j["sex"].get<Sex>();
}

/// Interleaved [re, im, re, im, ...].
inline json interleave(std::span<const Complex> v) {
  json arr = json::array();
  for (const auto& z : v) {
    arr.push_back(z.real());
    arr.push_back(z.imag());
  }
  return arr;
}

inline ComplexVec deinterleave(const json& arr, const std::string& what) {
  if (!arr.is_array()) throw ParseError(what + ": expected an array of numbers");
  if (arr.size() % 2 != 0) throw ParseError(what + ": odd number of interleaved values");
  ComplexVec out(arr.size() / 2);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto& re = arr[2 * k];
    const auto& im = arr[2 * k + 1];
    if (!re.is_number() || !im.is_number()) throw ParseError(what + ": non-numeric value");
    out[k] = {re.get<double>(), im.get<double>()};
  }
  return out;
}

inline void to_json(json& j, const ComponentFit& c) {
  j = json{{"name", c.name}, {"spectrum", c.spectrum}};
}

inline json nan_to_null(std::span<const double> v) {
  json arr = json::array();
  for (double x : v) arr.push_back(std::isfinite(x) ? json(x) : json(nullptr));
  return arr;
}

inline RealVec null_to_nan(const json& arr) {
  RealVec out;
  for (const auto& x : arr)
    out.push_back(x.is_null() ? std::numeric_limits<double>::quiet_NaN() : x.get<double>());
  return out;
}

/// Summary payload; `with_spectra` adds the arrays needed for plotting.
inline json result_to_json(const QuantResult& r, bool with_spectra = true) {
  json j{{"dataset_id", r.dataset_id},
         {"method", r.method},
         {"metabolites", r.metabolites},
         {"conc", nan_to_null(r.conc)},
         {"absolute", r.absolute},
         {"ratio_to_tCr", nan_to_null(r.ratio_to_tCr)},
         {"sd_percent", nan_to_null(r.sd_percent)},
         {"converged", r.converged},
         {"warnings", r.warnings},
         {"collinear", r.collinear},
         {"phi0", r.phi0},
         {"phi1", r.phi1},
         {"gamma", r.gamma},
         {"shift_hz", r.shift_hz},
         {"denoised", r.denoised},
         {"objective_trace", r.objective_trace},
         {"runtime_seconds", r.runtime_seconds}};
  if (with_spectra) {
    j["ppm"] = r.ppm;
    j["input"] = r.input;
    j["fitted"] = r.fitted;
    j["baseline"] = r.baseline;
    j["residual"] = r.residual;
    j["per_metabolite_fit"] = r.per_metabolite_fit;
    if (r.denoised) j["input_before_denoise"] = r.input_before_denoise;
  }
  return j;
}

inline QuantResult result_from_json(const json& j) {
  QuantResult r;
  r.dataset_id = j.at("dataset_id").get<std::string>();
  r.method = j.at("method").get<QuantMethod>();
  r.metabolites = j.at("metabolites").get<std::vector<std::string>>();
  r.conc = null_to_nan(j.at("conc"));
  r.absolute = j.value("absolute", true);
  r.ratio_to_tCr = null_to_nan(j.at("ratio_to_tCr"));
  if (j.contains("sd_percent")) r.sd_percent = null_to_nan(j["sd_percent"]);
  r.converged = j.value("converged", true);
  r.warnings = j.value("warnings", std::vector<std::string>{});
  r.collinear = j.value("collinear", std::vector<std::string>{});
  r.phi0 = j.value("phi0", 0.0);
  r.phi1 = j.value("phi1", 0.0);
  r.gamma = j.value("gamma", RealVec{});
  r.shift_hz = j.value("shift_hz", RealVec{});
  r.denoised = j.value("denoised", false);
  r.objective_trace = j.value("objective_trace", RealVec{});
  r.runtime_seconds = j.value("runtime_seconds", 0.0);
  r.ppm = j.value("ppm", RealVec{});
  r.input = j.value("input", RealVec{});
  r.fitted = j.value("fitted", RealVec{});
  r.baseline = j.value("baseline", RealVec{});
  r.residual = j.value("residual", RealVec{});
  r.input_before_denoise = j.value("input_before_denoise", RealVec{});
  if (j.contains("per_metabolite_fit"))
    for (const auto& c : j["per_metabolite_fit"])
      r.per_metabolite_fit.push_back(
          {c.at("name").get<std::string>(), c.at("spectrum").get<RealVec>()});
  return r;
}

}  // namespace mrsq
