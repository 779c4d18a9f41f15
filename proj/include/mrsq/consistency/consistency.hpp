#pragma once

// Agreement between the two quantifiers: Bland-Altman statistics and
// reference-range checks on healthy-subject ratios.

#include <fmt/format.h>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mrsq/error.hpp"
#include "mrsq/io/json.hpp"
#include "mrsq/stats/indicators.hpp"

namespace mrsq::consistency {

enum class MeanDiffTest { one_sample_t, z };

struct AgreementPoint {
  double mean = 0.0;
  double diff = 0.0;
};

struct BlandAltman {
  std::string indicator;
  std::size_t n = 0;
  double mean_diff = 0.0;
  double sd_diff = 0.0;
  double loa_low = 0.0, loa_high = 0.0;
  double pct_within = 100.0;
  double statistic = 0.0;  // t (or z) of the mean difference
  double p_value = 1.0;
  bool degenerate = false;  // zero spread of differences: limits collapse, p is not a test result
  std::vector<AgreementPoint> points;
};

inline constexpr double kLoaZ = 1.96;

/// Differences x - y, limits mean ± 1.96 SD, and a two-tailed test of the
/// mean difference against 0. A spread below 1e-12 of the data scale counts
/// as zero.
inline BlandAltman bland_altman(std::span<const double> x, std::span<const double> y,
                                MeanDiffTest test = MeanDiffTest::one_sample_t) {
  if (x.size() != y.size())
    throw ArgumentError(fmt::format("bland_altman: lengths differ ({} vs {})", x.size(), y.size()));
  if (x.size() < 3) throw ArgumentError("bland_altman needs at least 3 pairs");
  BlandAltman ba;
  ba.n = x.size();
  double scale = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw ArgumentError("bland_altman: non-finite value");
    ba.points.push_back({0.5 * (x[i] + y[i]), x[i] - y[i]});
    scale = std::max({scale, std::abs(x[i]), std::abs(y[i])});
  }
  const double n = static_cast<double>(ba.n);
  for (const auto& p : ba.points) ba.mean_diff += p.diff / n;
  double ss = 0.0;
  for (const auto& p : ba.points) ss += (p.diff - ba.mean_diff) * (p.diff - ba.mean_diff);
  ba.sd_diff = std::sqrt(ss / (n - 1.0));
  if (ba.sd_diff <= 1e-12 * std::max(scale, 1e-300)) {
    ba.sd_diff = 0.0;
    ba.degenerate = true;
  }
  ba.loa_low = ba.mean_diff - kLoaZ * ba.sd_diff;
  ba.loa_high = ba.mean_diff + kLoaZ * ba.sd_diff;
  if (ba.degenerate) {
    ba.pct_within = 100.0;
    const bool zero = std::abs(ba.mean_diff) <= 1e-12 * std::max(scale, 1e-300);
    ba.statistic = zero ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), ba.mean_diff);
    ba.p_value = zero ? 1.0 : 0.0;
    return ba;
  }
  std::size_t inside = 0;
  for (const auto& p : ba.points) inside += p.diff >= ba.loa_low && p.diff <= ba.loa_high;
  ba.pct_within = 100.0 * static_cast<double>(inside) / n;
  ba.statistic = ba.mean_diff / (ba.sd_diff / std::sqrt(n));
  const double a = std::abs(ba.statistic);
  if (test == MeanDiffTest::one_sample_t) {
    const boost::math::students_t_distribution<> t(n - 1.0);
    ba.p_value = 2.0 * boost::math::cdf(boost::math::complement(t, a));
  } else {
    ba.p_value = 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal_distribution<>(), a));
  }
  ba.p_value = std::clamp(ba.p_value, 0.0, 1.0);
  return ba;
}

// --- reference ranges --------------------------------------------------------

struct ReferenceRange {
  std::string indicator;
  double low = 0.0, mean = 0.0, high = 0.0;

  void validate() const {
    if (!(low < mean && mean < high))
      throw ConfigError(fmt::format("reference range {}: need low < mean < high", indicator));
  }
};

using ReferenceRanges = std::map<std::string, ReferenceRange>;

/// {"tNAA/tCr": {"low": .., "mean": .., "high": ..}, ...}
inline ReferenceRanges parse_reference_ranges(const json& j) {
  if (!j.is_object()) throw ConfigError("reference ranges must be an object keyed by indicator");
  ReferenceRanges out;
  for (const auto& [name, v] : j.items()) {
    try {
      ReferenceRange r{name, v.at("low").get<double>(), v.at("mean").get<double>(), v.at("high").get<double>()};
      r.validate();
      out[name] = r;
    } catch (const json::exception& e) {
      throw ConfigError(fmt::format("reference range {}: {}", name, e.what()));
    }
  }
  return out;
}

struct RangeCheck {
  ReferenceRange range;
  std::size_t n_within = 0, n_below = 0, n_above = 0;
  stats::BoxplotStats boxplot;
};

/// Classification against the closed interval [low, high].
inline RangeCheck range_check(std::span<const double> values, const ReferenceRange& range) {
  if (values.empty()) throw ArgumentError("range_check needs at least one value");
  range.validate();
  RangeCheck rc;
  rc.range = range;
  for (double v : values) {
    if (v < range.low) ++rc.n_below;
    else if (v > range.high) ++rc.n_above;
    else ++rc.n_within;
  }
  rc.boxplot = stats::boxplot_stats(values);
  return rc;
}

// --- report ------------------------------------------------------------------

inline std::vector<stats::Indicator> default_consistency_indicators() {
  std::vector<stats::Indicator> out;
  for (const char* s : {"tNAA/tCr", "tCho/tCr", "Glx/tCr", "Ins/tCr", "GSH/tCr"})
    out.push_back(stats::parse_indicator(s));
  return out;
}

struct ConsistencyOptions {
  ReferenceRanges ranges;
  MeanDiffTest test = MeanDiffTest::one_sample_t;
  /// Group label per dataset id; subjects not labelled healthy are rejected
  /// unless allow_non_healthy is set. Empty map skips the gate.
  std::map<std::string, GroupLabel> labels;
  bool allow_non_healthy = false;
};

struct IndicatorConsistency {
  std::string indicator;
  BlandAltman agreement;
  std::vector<std::string> subjects;
  std::optional<RangeCheck> range_a, range_b;  // present when a range is configured
  std::vector<std::string> warnings;
};

struct ConsistencyReport {
  std::vector<IndicatorConsistency> indicators;
  std::vector<std::string> warnings;
};

inline ConsistencyReport consistency_report(std::span<const QuantResult> results_a,
                                            std::span<const QuantResult> results_b,
                                            const std::vector<stats::Indicator>& indicators,
                                            const ConsistencyOptions& opt = {}) {
  if (indicators.empty()) throw ArgumentError("consistency_report: no indicators");
  std::map<std::string, const QuantResult*> by_id_b;
  for (const auto& r : results_b) by_id_b[r.dataset_id] = &r;
  std::vector<std::string> unmatched;
  std::map<std::string, bool> in_a;
  for (const auto& r : results_a) {
    in_a[r.dataset_id] = true;
    if (!by_id_b.count(r.dataset_id)) unmatched.push_back(r.dataset_id);
  }
  for (const auto& r : results_b)
    if (!in_a.count(r.dataset_id)) unmatched.push_back(r.dataset_id);
  if (!unmatched.empty()) {
    std::string ids;
    for (const auto& u : unmatched) ids += (ids.empty() ? "" : ", ") + u;
    throw SelectionError("subjects not quantified by both methods: " + ids);
  }
  if (!opt.labels.empty() && !opt.allow_non_healthy)
    for (const auto& r : results_a) {
      const auto it = opt.labels.find(r.dataset_id);
      if (it == opt.labels.end() || it->second != GroupLabel::healthy)
        throw SelectionError("consistency analysis is limited to healthy subjects: " + r.dataset_id);
    }

  // b reordered to match a
  std::vector<QuantResult> ordered_b;
  for (const auto& r : results_a) ordered_b.push_back(*by_id_b.at(r.dataset_id));

  ConsistencyReport rep;
  for (const auto& ind : indicators) {
    IndicatorConsistency ic;
    ic.indicator = ind.name;
    const auto va = stats::compute_indicator(results_a, ind);
    const auto vb = stats::compute_indicator(ordered_b, ind);
    std::map<std::string, double> b_values;
    for (std::size_t i = 0; i < vb.subjects.size(); ++i) b_values[vb.subjects[i]] = vb.values[i];
    std::vector<double> x, y;
    for (std::size_t i = 0; i < va.subjects.size(); ++i)
      if (auto it = b_values.find(va.subjects[i]); it != b_values.end()) {
        ic.subjects.push_back(va.subjects[i]);
        x.push_back(va.values[i]);
        y.push_back(it->second);
      }
    ic.warnings = va.warnings;
    ic.warnings.insert(ic.warnings.end(), vb.warnings.begin(), vb.warnings.end());
    ic.agreement = bland_altman(x, y, opt.test);
    ic.agreement.indicator = ind.name;
    if (auto it = opt.ranges.find(ind.name); it != opt.ranges.end()) {
      ic.range_a = range_check(x, it->second);
      ic.range_b = range_check(y, it->second);
    }
    rep.warnings.insert(rep.warnings.end(), ic.warnings.begin(), ic.warnings.end());
    rep.indicators.push_back(std::move(ic));
  }
  return rep;
}

// --- export ------------------------------------------------------------------

inline json to_json(const RangeCheck& rc) {
  return {{"low", rc.range.low},       {"mean", rc.range.mean},     {"high", rc.range.high},
          {"n_within", rc.n_within},   {"n_below", rc.n_below},     {"n_above", rc.n_above},
          {"boxplot", stats::to_json(rc.boxplot)}};
}

inline json to_json(const ConsistencyReport& rep) {
  json out = json::array();
  for (const auto& ic : rep.indicators) {
    const auto& ba = ic.agreement;
    json pts = json::array();
    for (std::size_t i = 0; i < ba.points.size(); ++i)
      pts.push_back({{"subject", ic.subjects[i]}, {"mean", ba.points[i].mean}, {"diff", ba.points[i].diff}});
    json item = {{"indicator", ic.indicator},
                 {"bland_altman",
                  {{"n", ba.n},
                   {"mean_diff", ba.mean_diff},
                   {"sd_diff", ba.sd_diff},
                   {"loa_low", ba.loa_low},
                   {"loa_high", ba.loa_high},
                   {"pct_within", ba.pct_within},
                   {"statistic", std::isfinite(ba.statistic) ? json(ba.statistic) : json(nullptr)},
                   {"p_value", ba.p_value},
                   {"degenerate", ba.degenerate},
                   {"points", pts}}},
                 {"warnings", ic.warnings}};
    if (ic.range_a) item["range_a"] = to_json(*ic.range_a);
    if (ic.range_b) item["range_b"] = to_json(*ic.range_b);
    out.push_back(item);
  }
  return out;
}

/// Summary rows plus one point row per subject.
inline std::string to_csv(const ConsistencyReport& rep) {
  std::string out = "indicator,n,mean_diff,sd_diff,loa_low,loa_high,pct_within,statistic,p_value,degenerate\n";
  for (const auto& ic : rep.indicators) {
    const auto& b = ic.agreement;
    out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", io::csv_field(ic.indicator), b.n,
                       io::fmt_number(b.mean_diff), io::fmt_number(b.sd_diff), io::fmt_number(b.loa_low),
                       io::fmt_number(b.loa_high), io::fmt_number(b.pct_within),
                       io::fmt_number(b.statistic), io::fmt_number(b.p_value), b.degenerate);
  }
  out += "\nindicator,subject,mean,diff\n";
  for (const auto& ic : rep.indicators)
    for (std::size_t i = 0; i < ic.agreement.points.size(); ++i)
      out += fmt::format("{},{},{},{}\n", io::csv_field(ic.indicator), io::csv_field(ic.subjects[i]),
                         io::fmt_number(ic.agreement.points[i].mean),
                         io::fmt_number(ic.agreement.points[i].diff));
  return out;
}

}  // namespace mrsq::consistency
