#pragma once

// Upload parsing and server-side anonymization. Nothing outside the metadata
// whitelist reaches the store.

#include <fmt/format.h>

#include <map>
#include <string>

#include "mrsq/io/anonymize.hpp"
#include "mrsq/io/native.hpp"
#include "mrsq/io/raw.hpp"

namespace mrsq::platform {

struct Upload {
  std::string filename;
  std::string content;
  /// Form fields: group, age, sex, plus acquisition overrides
  /// (spectral_width, transmitter_freq, echo_time, repetition_time,
  /// field_strength, sequence).
  std::map<std::string, std::string> fields;
};

struct Ingested {
  Spectrum spectrum;        // meta anonymized, opaque_id set
  std::string format;       // "raw" or "native"
  std::string original;     // upload with identifying header fields removed
  std::string canonical;    // native spectrum document
};

namespace detail {

inline const std::set<std::string>& raw_header_whitelist() {
  static const std::set<std::string> keys = {"HZPPPM", "DELTAT", "ECHOT", "BZERO",
                                             "SEQ",    "FMTDAT", "VOLUME", "TRAMP"};
  return keys;
}

inline bool looks_raw(const Upload& u) {
  const std::string name = io::detail::upper(u.filename);
  if (name.ends_with(".RAW")) return true;
  if (name.ends_with(".JSON")) return false;
  return io::detail::upper(u.content.substr(0, 256)).find("$NMID") != std::string::npos;
}

inline AcquisitionParams sidecar(const std::map<std::string, std::string>& f, AcquisitionParams acq) {
  auto num = [&](const char* key, double& dst) {
    auto it = f.find(key);
    if (it == f.end() || it->second.empty()) return;
    double v = 0.0;
    if (!io::detail::parse_real(io::detail::trim(it->second), v) || !std::isfinite(v))
      throw ArgumentError(std::string("field ") + key + " is not numeric");
    dst = v;
  };
  num("spectral_width", acq.spectral_width);
  num("transmitter_freq", acq.transmitter_freq);
  num("echo_time", acq.echo_time);
  num("repetition_time", acq.repetition_time);
  num("field_strength", acq.field_strength);
  if (auto it = f.find("sequence"); it != f.end() && !it->second.empty()) acq.sequence = it->second;
  return acq;
}

/// Rebuilds the namelist header from whitelisted keys; data lines are kept verbatim.
inline std::string sanitize_raw(std::string_view text, const io::RawFile& rf, const std::string& id) {
  const std::string up = io::detail::upper(text);
  const auto end = up.find("$END");
  const auto nl = text.find('\n', end);
  const std::string_view data = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
  std::string out = fmt::format(" $NMID\n ID='{}'\n", id);
  for (const auto& [k, v] : rf.header)
    if (raw_header_whitelist().count(k)) out += fmt::format(" {}='{}'\n", k, v);
  out += " $END\n";
  out += data;
  return out;
}

}  // namespace detail

inline Ingested ingest(const Upload& u) {
  if (u.content.empty()) throw ArgumentError("upload is empty");
  Ingested out;
  io::RawMetadata meta;
  if (detail::looks_raw(u)) {
    out.format = "raw";
    const io::RawFile rf = io::parse_raw_file(u.content);
    out.spectrum = io::parse_raw(u.content, detail::sidecar(u.fields, {}));
    // header extensions win over defaults, form fields win over both
    out.spectrum.acq = detail::sidecar(u.fields, out.spectrum.acq);
    meta = rf.header;
    for (const auto& [k, v] : u.fields) meta[k] = v;
    out.spectrum.meta = io::anonymize(meta);
    out.original = detail::sanitize_raw(u.content, rf, out.spectrum.meta.opaque_id);
  } else {
    out.format = "native";
    auto ns = io::parse_native_spectrum(u.content);
    out.spectrum = std::move(ns.spectrum);
    out.spectrum.acq = detail::sidecar(u.fields, out.spectrum.acq);
    meta = std::move(ns.meta);
    for (const auto& [k, v] : u.fields) meta[k] = v;
    out.spectrum.meta = io::anonymize(meta);
  }
  try {
    out.spectrum.validate();
  } catch (const ArgumentError& e) {
    throw ParseError(e.what());
  }
  out.canonical = io::write_native_spectrum(out.spectrum);
  if (out.format == "native") out.original = out.canonical;
  return out;
}

}  // namespace mrsq::platform
