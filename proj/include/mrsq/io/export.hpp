#pragma once

#include <fmt/format.h>

#include "mrsq/io/json.hpp"

namespace mrsq::io {

enum class ExportFormat { csv, json };

inline std::string fmt_number(double v) {
  return std::isfinite(v) ? fmt::format("{:.6g}", v) : std::string("NA");
}

/// Escapes a CSV field when it contains a delimiter, quote or newline.
inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// One row per (dataset, metabolite) in input then basis order.
inline std::string export_results(std::span<const QuantResult> results, ExportFormat format) {
  if (results.empty()) throw ArgumentError("nothing to export");
  if (format == ExportFormat::csv) {
    std::string out = "dataset_id,metabolite,concentration,ratio_to_tCr,sd_percent,method\n";
    for (const auto& r : results)
      for (std::size_t i = 0; i < r.metabolites.size(); ++i) {
        const double abs = r.absolute ? r.conc[i] : std::numeric_limits<double>::quiet_NaN();
        const double sd = i < r.sd_percent.size() ? r.sd_percent[i]
                                                  : std::numeric_limits<double>::quiet_NaN();
        out += fmt::format("{},{},{},{},{},{}\n", csv_field(r.dataset_id),
                           csv_field(r.metabolites[i]), fmt_number(abs),
                           fmt_number(r.ratio_to_tCr[i]), fmt_number(sd), to_string(r.method));
      }
    return out;
  }
  json rows = json::array();
  for (const auto& r : results)
    for (std::size_t i = 0; i < r.metabolites.size(); ++i) {
      auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
      rows.push_back({{"dataset_id", r.dataset_id},
                      {"metabolite", r.metabolites[i]},
                      {"concentration", r.absolute ? num(r.conc[i]) : json(nullptr)},
                      {"ratio_to_tCr", num(r.ratio_to_tCr[i])},
                      {"sd_percent", i < r.sd_percent.size() ? num(r.sd_percent[i]) : json(nullptr)},
                      {"method", r.method}});
    }
  return rows.dump(2) + "\n";
}

}  // namespace mrsq::io
