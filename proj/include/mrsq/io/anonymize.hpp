#pragma once

#include <fmt/format.h>

#include <map>
#include <random>

#include "mrsq/io/raw.hpp"
#include "mrsq/signal/types.hpp"

namespace mrsq::io {

/// 128-bit random hex identifier, independent of any input.
inline std::string fresh_opaque_id() {
  static thread_local std::random_device rd;
  std::string out;
  for (int i = 0; i < 4; ++i) out += fmt::format("{:08x}", rd());
  return out;
}

/// Whitelist projection of uploaded metadata. Only age, sex and group label
/// survive; every other key is dropped. Unparseable whitelisted values are
/// dropped as well.
inline SubjectMeta anonymize(const std::map<std::string, std::string>& raw) {
  SubjectMeta m;
  m.opaque_id = fresh_opaque_id();
  for (const auto& [key, value] : raw) {
    const std::string k = detail::upper(detail::trim(key));
    const std::string v = detail::upper(detail::trim(value));
    if (k == "AGE") {
      double age = 0.0;
      if (detail::parse_real(v, age) && age >= 0.0 && age < 200.0) m.age = age;
    } else if (k == "SEX" || k == "GENDER") {
      if (v == "F" || v == "FEMALE") m.sex = Sex::female;
      else if (v == "M" || v == "MALE") m.sex = Sex::male;
      else if (!v.empty()) m.sex = Sex::other;
    } else if (k == "GROUP" || k == "GROUP_LABEL") {
      if (v == "HEALTHY" || v == "CONTROL") m.group = GroupLabel::healthy;
      else if (v == "PATIENT") m.group = GroupLabel::patient;
    }
  }
  return m;
}

}  // namespace mrsq::io
