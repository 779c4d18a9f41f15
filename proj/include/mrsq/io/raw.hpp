#pragma once

// LCModel .RAW text format: a $NMID namelist header terminated by $END,
// followed by whitespace-separated real/imaginary pairs.

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "mrsq/signal/types.hpp"

namespace mrsq::io {

struct RawFile {
  std::map<std::string, std::string> header;  // keys upper-cased, quotes stripped
  ComplexVec points;
};

namespace detail {

inline std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Parses "KEY=value, KEY2='quoted, value'" pairs from one namelist line.
inline void parse_namelist_line(std::string_view line, std::map<std::string, std::string>& out) {
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (std::isspace(static_cast<unsigned char>(line[i])) || line[i] == ','))
      ++i;
    const auto eq = line.find('=', i);
    if (eq == std::string_view::npos) return;
    const std::string key = upper(trim(line.substr(i, eq - i)));
    i = eq + 1;
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::string value;
    if (i < line.size() && (line[i] == '\'' || line[i] == '"')) {
      const char q = line[i++];
      const auto end = line.find(q, i);
      value = std::string(line.substr(i, end == std::string_view::npos ? line.npos : end - i));
      i = end == std::string_view::npos ? line.size() : end + 1;
    } else {
      const auto end = line.find(',', i);
      value = std::string(trim(line.substr(i, end == std::string_view::npos ? line.npos : end - i)));
      i = end == std::string_view::npos ? line.size() : end + 1;
    }
    out[key] = value;
  }
}

// Fortran-style real: accepts D as exponent marker.
inline bool parse_real(std::string_view tok, double& out) {
  std::string t(tok);
  std::replace(t.begin(), t.end(), 'D', 'E');
  std::replace(t.begin(), t.end(), 'd', 'e');
  const char* b = t.data();
  const char* e = t.data() + t.size();
  if (b != e && *b == '+') ++b;
  auto [ptr, ec] = std::from_chars(b, e, out);
  return ec == std::errc{} && ptr == e;
}

}  // namespace detail

inline RawFile parse_raw_file(std::string_view text) {
  RawFile rf;
  std::size_t line_no = 0;
  std::size_t header_line = 0;
  bool in_header = false, header_done = false;
  std::size_t last_line = 0;
  std::vector<double> values;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = nl + 1;
    ++line_no;
    const std::string up = detail::upper(line);
    if (!header_done) {
      if (!in_header) {
        const auto at = up.find("$NMID");
        if (at == std::string::npos) {
          if (!detail::trim(line).empty())
            throw ParseError("expected $NMID header before data", line_no);
          if (pos > text.size()) break;
          continue;
        }
        in_header = true;
        header_line = line_no;
        line = line.substr(at + 5);
      }
      const std::string up2 = detail::upper(line);
      const auto end = up2.find("$END");
      detail::parse_namelist_line(end == std::string::npos ? line : line.substr(0, end), rf.header);
      if (end != std::string::npos) {
        header_done = true;
        in_header = false;
      }
      if (pos > text.size()) break;
      continue;
    }
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      std::size_t j = i;
      while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
      if (j > i) {
        double v = 0.0;
        if (!detail::parse_real(line.substr(i, j - i), v))
          throw ParseError("non-numeric token '" + std::string(line.substr(i, j - i)) + "'",
                           line_no);
        values.push_back(v);
        last_line = line_no;
      }
      i = j;
    }
    if (pos > text.size()) break;
  }
  if (!header_done) {
    if (header_line == 0) throw ParseError("missing $NMID header", 1);
    throw ParseError("$NMID block opened here is not terminated by $END", header_line);
  }
  if (values.size() % 2 != 0)
    throw ParseError("odd number of numeric tokens (" + std::to_string(values.size()) + ")",
                     last_line);
  if (values.empty()) throw ParseError("no data points after $END", line_no);
  rf.points.resize(values.size() / 2);
  for (std::size_t k = 0; k < rf.points.size(); ++k)
    rf.points[k] = {values[2 * k], values[2 * k + 1]};
  return rf;
}

/// Parses a .RAW file. Acquisition parameters missing from the header are taken
/// from `sidecar`; recognised header extensions are HZPPPM (MHz), DELTAT (s),
/// ECHOT (ms), BZERO (T) and SEQ.
inline Spectrum parse_raw(std::string_view text, const AcquisitionParams& sidecar = {}) {
  RawFile rf = parse_raw_file(text);
  Spectrum s;
  s.acq = sidecar;
  auto num = [&](const char* key, double& dst) {
    auto it = rf.header.find(key);
    if (it == rf.header.end()) return false;
    double v = 0.0;
    if (!detail::parse_real(detail::trim(it->second), v))
      throw ParseError(std::string("header field ") + key + " is not numeric");
    dst = v;
    return true;
  };
  num("HZPPPM", s.acq.transmitter_freq);
  double deltat = 0.0;
  if (num("DELTAT", deltat)) {
    if (!(deltat > 0.0)) throw ParseError("DELTAT must be positive");
    s.acq.spectral_width = 1.0 / deltat;
  }
  num("ECHOT", s.acq.echo_time);
  num("BZERO", s.acq.field_strength);
  if (auto it = rf.header.find("SEQ"); it != rf.header.end()) s.acq.sequence = it->second;
  s.acq.num_points = rf.points.size();
  s.fid = std::move(rf.points);
  return s;
}

/// Serializes a spectrum as .RAW: six significant figures, two values per line.
/// `extra` adds header entries (e.g. HZPPPM, DELTAT); values are written quoted.
inline std::string write_raw(const Spectrum& s, std::string_view id,
                             const std::map<std::string, std::string>& extra = {}) {
  if (s.fid.empty()) throw SerializationError("cannot write an empty fid");
  for (const auto& z : s.fid)
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
      throw SerializationError("fid contains non-finite samples");
  std::string out;
  out.reserve(32 * s.fid.size() + 128);
  out += " $NMID\n";
  out += fmt::format(" ID='{}', FMTDAT='(2E15.6)'\n", id);
  out += " VOLUME=1.0, TRAMP=1.0\n";
  for (const auto& [k, v] : extra) out += fmt::format(" {}='{}'\n", k, v);
  out += " $END\n";
  for (const auto& z : s.fid) out += fmt::format("{:15.5E}{:15.5E}\n", z.real(), z.imag());
  return out;
}

}  // namespace mrsq::io
