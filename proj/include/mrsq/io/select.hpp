#pragma once

#include <algorithm>
#include <cmath>
#include <optional>

#include "mrsq/signal/types.hpp"

namespace mrsq::io {

struct SelectionRule {
  double field_tolerance = 0.1;  // T, inclusive
  double echo_tolerance = 5.0;   // ms, strict
};

inline bool basis_matches(const BasisSet& b, const AcquisitionParams& acq,
                          const SelectionRule& rule = {}) {
  return std::abs(b.tags.field_strength - acq.field_strength) <= rule.field_tolerance &&
         b.tags.sequence == acq.sequence &&
         std::abs(b.tags.echo_time - acq.echo_time) < rule.echo_tolerance;
}

inline std::string describe(const BasisSet& b) {
  return b.name + " (" + std::to_string(b.tags.field_strength) + " T/" + b.tags.sequence +
         "/TE " + std::to_string(b.tags.echo_time) + ")";
}

/// Picks the unique catalog entry compatible with the acquisition, or the entry
/// named by `override_name`. Zero or several matches are errors.
inline const BasisSet& select_basis(std::span<const BasisSet> catalog, const AcquisitionParams& acq,
                                    const std::optional<std::string>& override_name = std::nullopt,
                                    const SelectionRule& rule = {}) {
  if (catalog.empty()) throw SelectionError("basis catalog is empty");
  if (override_name) {
    for (const auto& b : catalog)
      if (b.name == *override_name) return b;
    throw SelectionError("no basis set named '" + *override_name + "'");
  }
  std::vector<const BasisSet*> hits;
  for (const auto& b : catalog)
    if (basis_matches(b, acq, rule)) hits.push_back(&b);
  if (hits.size() == 1) return *hits.front();
  auto list = [](std::vector<std::string> names) {
    std::sort(names.begin(), names.end());
    std::string s;
    for (const auto& n : names) s += (s.empty() ? "" : ", ") + n;
    return s;
  };
  std::vector<std::string> names;
  if (hits.empty()) {
    for (const auto& b : catalog) names.push_back(describe(b));
    throw SelectionError("no basis set matches the acquisition; candidates: " + list(names));
  }
  for (const auto* b : hits) names.push_back(describe(*b));
  throw SelectionError("ambiguous basis selection between: " + list(names));
}

}  // namespace mrsq::io
