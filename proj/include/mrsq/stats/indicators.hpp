#pragma once

// Metabolite-ratio indicators, box-plot summaries and report export.

#include <fmt/format.h>

#include <algorithm>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mrsq/error.hpp"
#include "mrsq/io/export.hpp"
#include "mrsq/quant_result.hpp"
#include "mrsq/stats/tests.hpp"

namespace mrsq::stats {

struct Indicator {
  std::string name;
  std::vector<std::string> numerator;
  std::vector<std::string> denominator;

  void validate() const {
    if (numerator.empty()) throw ArgumentError("indicator " + name + ": empty numerator");
    if (denominator.empty()) throw ArgumentError("indicator " + name + ": empty denominator");
  }
};

/// Group names expanded to their member metabolites.
inline const std::map<std::string, std::vector<std::string>>& metabolite_aliases() {
  static const std::map<std::string, std::vector<std::string>> m = {
      {"tNAA", {"NAA", "NAAG"}},
      {"tCr", {"Cr", "PCr"}},
      {"tCho", {"GPC", "PCh"}},
      {"Glx", {"Glu", "Gln"}},
  };
  return m;
}

/// Parses "A+B/C+D" where each term is a metabolite or an alias.
inline Indicator parse_indicator(std::string_view text) {
  const auto slash = text.find('/');
  if (slash == std::string_view::npos || text.find('/', slash + 1) != std::string_view::npos)
    throw ArgumentError("indicator must have the form numerator/denominator: " + std::string(text));
  auto terms = [&](std::string_view side) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= side.size()) {
      const auto plus = side.find('+', start);
      const auto end = plus == std::string_view::npos ? side.size() : plus;
      std::string t(side.substr(start, end - start));
      t.erase(0, t.find_first_not_of(" \t"));
      t.erase(t.find_last_not_of(" \t") + 1);
      if (t.empty()) throw ArgumentError("empty term in indicator: " + std::string(text));
      out.push_back(t);
      if (plus == std::string_view::npos) break;
      start = plus + 1;
    }
    return out;
  };
  Indicator ind{std::string(text), terms(text.substr(0, slash)), terms(text.substr(slash + 1))};
  ind.validate();
  return ind;
}

inline std::vector<Indicator> glioma_indicators() {
  return {parse_indicator("tCho/tCr"), parse_indicator("tCho/tNAA"), parse_indicator("tNAA/tCr")};
}

inline std::vector<Indicator> parkinsons_indicators() {
  return {parse_indicator("tNAA/tCr"), parse_indicator("tCho/tCr"), parse_indicator("tNAA/tCho")};
}

inline std::vector<Indicator> default_indicators(std::string_view set) {
  if (set == "glioma") return glioma_indicators();
  if (set == "parkinsons") return parkinsons_indicators();
  throw ArgumentError("unknown indicator set: " + std::string(set));
}

namespace detail {

/// Indices contributing to one term. An alias resolves to whichever members
/// are present; a term matching nothing is an error naming it.
inline std::vector<std::size_t> resolve_term(const QuantResult& r, const std::string& term) {
  if (auto i = r.index_of(term)) return {*i};
  std::vector<std::size_t> out;
  const auto& aliases = metabolite_aliases();
  if (auto it = aliases.find(term); it != aliases.end())
    for (const auto& member : it->second)
      if (auto i = r.index_of(member)) out.push_back(*i);
  if (out.empty())
    throw SelectionError("dataset " + r.dataset_id + " has no metabolite " + term);
  return out;
}

inline double sum_terms(const QuantResult& r, const std::vector<std::string>& terms) {
  double s = 0.0;
  for (const auto& t : terms)
    for (auto i : resolve_term(r, t)) s += r.conc[i];
  return s;
}

}  // namespace detail

struct IndicatorValues {
  std::string indicator;
  std::vector<std::string> subjects;  // included subjects, aligned with values
  RealVec values;
  std::vector<std::string> excluded;
  std::vector<std::string> warnings;
};

/// Σ numerator conc / Σ denominator conc per subject.
inline IndicatorValues compute_indicator(std::span<const QuantResult> results, const Indicator& ind) {
  ind.validate();
  IndicatorValues out;
  out.indicator = ind.name;
  for (const auto& r : results) {
    const double num = detail::sum_terms(r, ind.numerator);
    const double den = detail::sum_terms(r, ind.denominator);
    if (!(den != 0.0) || !std::isfinite(num) || !std::isfinite(den)) {
      out.excluded.push_back(r.dataset_id);
      out.warnings.push_back(fmt::format("{}: {} denominator is zero or undefined, subject excluded",
                                         r.dataset_id, ind.name));
      continue;
    }
    out.subjects.push_back(r.dataset_id);
    out.values.push_back(num / den);
  }
  return out;
}

// --- box plots ---------------------------------------------------------------

/// Quartiles use linear interpolation between order statistics at
/// h = (n - 1) p (Hyndman-Fan type 7). Whisker ends (min, max) are the most
/// extreme values within 1.5 IQR of the quartiles; the rest are outliers.
struct BoxplotStats {
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
  RealVec outliers;
};

inline double quantile_sorted(std::span<const double> s, double p) {
  const double h = static_cast<double>(s.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

inline BoxplotStats boxplot_stats(std::span<const double> values) {
  if (values.empty()) throw ArgumentError("boxplot_stats needs at least one value");
  detail::check_finite(values, "boxplot_stats");
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  BoxplotStats b;
  b.q1 = quantile_sorted(s, 0.25);
  b.median = quantile_sorted(s, 0.5);
  b.q3 = quantile_sorted(s, 0.75);
  const double iqr = b.q3 - b.q1;
  const double lo = b.q1 - 1.5 * iqr, hi = b.q3 + 1.5 * iqr;
  b.min = b.q1;
  b.max = b.q3;
  for (double v : s) {
    if (v < lo || v > hi) {
      b.outliers.push_back(v);
      continue;
    }
    b.min = std::min(b.min, v);
    b.max = std::max(b.max, v);
  }
  return b;
}

// --- group comparison --------------------------------------------------------

/// Indicator values for two groups, then select_and_test.
inline TestReport compare_groups(std::span<const QuantResult> group_a,
                                 std::span<const QuantResult> group_b, const Indicator& ind,
                                 LeveneCenter center = LeveneCenter::mean) {
  const auto a = compute_indicator(group_a, ind);
  const auto b = compute_indicator(group_b, ind);
  TestReport r = select_and_test(a.values, b.values, center);
  r.indicator = ind.name;
  return r;
}

// --- export ------------------------------------------------------------------

inline std::string reports_csv(std::span<const TestReport> reports) {
  std::string out =
      "indicator,mean_a,sd_a,n_a,mean_b,sd_b,n_b,test,statistic,df,p_value,significant,"
      "shapiro_p_a,shapiro_p_b,levene_p\n";
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : reports)
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", io::csv_field(r.indicator),
                       io::fmt_number(r.group_a.mean), io::fmt_number(r.group_a.sd), r.group_a.n,
                       io::fmt_number(r.group_b.mean), io::fmt_number(r.group_b.sd), r.group_b.n,
                       to_string(r.test_used), io::fmt_number(r.statistic),
                       io::fmt_number(r.df.value_or(nan)), io::fmt_number(r.p_value),
                       r.significant ? "true" : "false", io::fmt_number(r.shapiro_p_a.value_or(nan)),
                       io::fmt_number(r.shapiro_p_b.value_or(nan)),
                       io::fmt_number(r.levene_p.value_or(nan)));
  return out;
}

/// Three-line table: header, one row per indicator with mean ± SD per group,
/// statistic and p.
inline std::string summary_table(std::span<const TestReport> reports, std::string_view label_a = "group A",
                                 std::string_view label_b = "group B") {
  std::string out = fmt::format("{:<12} {:>18} {:>18} {:>14} {:>10} {:>8}\n", "indicator", label_a,
                                label_b, "test", "statistic", "p");
  for (const auto& r : reports)
    out += fmt::format("{:<12} {:>18} {:>18} {:>14} {:>10.3f} {:>8.3f}{}\n", r.indicator,
                       fmt::format("{:.3f}±{:.3f}", r.group_a.mean, r.group_a.sd),
                       fmt::format("{:.3f}±{:.3f}", r.group_b.mean, r.group_b.sd),
                       to_string(r.test_used), r.statistic, r.p_value, r.significant ? " *" : "");
  return out;
}

inline mrsq::json to_json(const TestReport& r) {
  auto num = [](double v) { return std::isfinite(v) ? mrsq::json(v) : mrsq::json(nullptr); };
  auto opt = [&](const std::optional<double>& v) { return v ? num(*v) : mrsq::json(nullptr); };
  auto grp = [&](const GroupSummary& g) { return mrsq::json{{"mean", num(g.mean)}, {"sd", num(g.sd)}, {"n", g.n}}; };
  return {{"indicator", r.indicator},      {"group_a", grp(r.group_a)},
          {"group_b", grp(r.group_b)},     {"test_used", to_string(r.test_used)},
          {"statistic", num(r.statistic)}, {"df", opt(r.df)},
          {"p_value", num(r.p_value)},     {"significant", r.significant},
          {"shapiro_p_a", opt(r.shapiro_p_a)}, {"shapiro_p_b", opt(r.shapiro_p_b)},
          {"levene_p", opt(r.levene_p)},   {"exact", r.exact},
          {"path", r.path}};
}

inline mrsq::json to_json(const BoxplotStats& b) {
  return {{"min", b.min}, {"q1", b.q1}, {"median", b.median}, {"q3", b.q3}, {"max", b.max},
          {"outliers", b.outliers}};
}

}  // namespace mrsq::stats
