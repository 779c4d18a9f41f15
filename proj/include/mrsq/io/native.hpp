#pragma once

// Platform-native structured-text formats (JSON). See docs/formats.md.

#include <map>

#include "mrsq/io/json.hpp"

namespace mrsq::io {

inline constexpr const char* kSpectrumFormat = "mrsq-spectrum/1";
inline constexpr const char* kBasisFormat = "mrsq-basis/1";

using RawMetadata = std::map<std::string, std::string>;

struct NativeSpectrum {
  Spectrum spectrum;
  RawMetadata meta;  // as uploaded; must go through anonymize() before storage
};

inline json parse_json_doc(std::string_view doc) {
  try {
    return json::parse(doc);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
}

inline NativeSpectrum parse_native_spectrum(std::string_view doc) {
  const json j = parse_json_doc(doc);
  if (!j.is_object() || !j.contains("fid")) throw ParseError("spectrum document needs a fid");
  NativeSpectrum out;
  try {
    if (j.contains("acq")) out.spectrum.acq = j["acq"].get<AcquisitionParams>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad acq block: ") + e.what());
  }
  out.spectrum.fid = deinterleave(j["fid"], "fid");
  if (out.spectrum.fid.empty()) throw ParseError("fid is empty");
  out.spectrum.acq.num_points = out.spectrum.fid.size();
  if (j.contains("meta") && j["meta"].is_object())
    for (const auto& [k, v] : j["meta"].items())
      out.meta[k] = v.is_string() ? v.get<std::string>() : v.dump();
  try {
    out.spectrum.validate();
  } catch (const ArgumentError& e) {
    throw ParseError(e.what());
  }
  return out;
}

/// Writes the native spectrum document (anonymized metadata only).
inline std::string write_native_spectrum(const Spectrum& s) {
  json meta = s.meta;
  return json{{"format", kSpectrumFormat}, {"acq", s.acq}, {"meta", meta},
              {"fid", interleave(s.fid)}}
      .dump();
}

/// Reads a stored native spectrum including its anonymized metadata block.
inline Spectrum read_stored_spectrum(std::string_view doc) {
  const json j = parse_json_doc(doc);
  Spectrum s;
  s.acq = j.at("acq").get<AcquisitionParams>();
  s.fid = deinterleave(j.at("fid"), "fid");
  if (j.contains("meta")) s.meta = j["meta"].get<SubjectMeta>();
  return s;
}

inline BasisSet parse_basis(std::string_view doc) {
  const json j = parse_json_doc(doc);
  if (!j.is_object()) throw ParseError("basis document must be an object");
  if (!j.contains("acq_tags") || !j["acq_tags"].is_object())
    throw ParseError("basis document is missing acq_tags");
  BasisSet b;
  try {
    const auto& t = j["acq_tags"];
    b.tags.field_strength = t.at("field_strength").get<double>();
    b.tags.sequence = t.at("sequence").get<std::string>();
    b.tags.echo_time = t.at("echo_time").get<double>();
    b.name = j.value("name", std::string{});
    b.spectral_width = j.value("spectral_width", b.spectral_width);
    b.transmitter_freq = j.value("transmitter_freq", b.transmitter_freq);
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad acq_tags: ") + e.what());
  }
  if (!j.contains("entries") || !j["entries"].is_array())
    throw ParseError("basis document has no entries array");
  for (const auto& e : j["entries"]) {
    if (!e.contains("name") || !e["name"].is_string()) throw ParseError("entry without name");
    const auto name = e["name"].get<std::string>();
    b.entries.push_back({name, deinterleave(e.value("data", json::array()), "entry " + name)});
  }
  try {
    b.validate();
  } catch (const ArgumentError& e) {
    throw ParseError(e.what());
  }
  return b;
}

inline std::string write_basis(const BasisSet& b) {
  json entries = json::array();
  for (const auto& e : b.entries) entries.push_back({{"name", e.name}, {"data", interleave(e.m)}});
  return json{{"format", kBasisFormat},
              {"name", b.name},
              {"acq_tags",
               {{"field_strength", b.tags.field_strength},
                {"sequence", b.tags.sequence},
                {"echo_time", b.tags.echo_time}}},
              {"spectral_width", b.spectral_width},
              {"transmitter_freq", b.transmitter_freq},
              {"entries", entries}}
      .dump();
}

}  // namespace mrsq::io
