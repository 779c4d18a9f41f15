#pragma once

// Two-group hypothesis tests: Shapiro-Wilk normality gate, Levene, Student
// and Welch t, Mann-Whitney U, and the gate that chooses between them.

#include <algorithm>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mrsq/error.hpp"

namespace mrsq::stats {

inline constexpr double kAlpha = 0.05;

enum class TestKind { student_t, welch_t, mann_whitney };

inline std::string to_string(TestKind k) {
  switch (k) {
    case TestKind::student_t: return "student_t";
    case TestKind::welch_t: return "welch_t";
    case TestKind::mann_whitney: return "mann_whitney";
  }
  return "?";
}

struct GroupSummary {
  double mean = 0.0;
  double sd = 0.0;  // sample SD (n - 1)
  std::size_t n = 0;
};

struct TestReport {
  std::string indicator;
  GroupSummary group_a, group_b;
  TestKind test_used = TestKind::student_t;
  double statistic = 0.0;  // t, or U of group a
  std::optional<double> df;
  double p_value = 1.0;
  bool significant = false;
  std::optional<double> shapiro_p_a, shapiro_p_b, levene_p;
  bool exact = false;  // Mann-Whitney exact enumeration
  std::string path;    // human-readable gate decisions
};

namespace detail {

inline double clamp_p(double p) { return std::clamp(std::isnan(p) ? 1.0 : p, 0.0, 1.0); }

inline double mean(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double variance(std::span<const double> x) {
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

inline double normal_sf(double z) {
  return boost::math::cdf(boost::math::complement(boost::math::normal_distribution<>(), z));
}

inline double poly(std::span<const double> c, double x) {
  double r = 0.0;
  for (std::size_t i = c.size(); i-- > 0;) r = r * x + c[i];
  return r;
}

inline void check_finite(std::span<const double> x, const char* what) {
  for (double v : x)
    if (!std::isfinite(v)) throw ArgumentError(std::string(what) + ": non-finite value");
}

}  // namespace detail

inline GroupSummary summarize(std::span<const double> x) {
  GroupSummary g;
  g.n = x.size();
  if (g.n == 0) return g;
  g.mean = detail::mean(x);
  g.sd = g.n > 1 ? std::sqrt(detail::variance(x)) : 0.0;
  return g;
}

// --- Shapiro-Wilk ------------------------------------------------------------

struct ShapiroWilk {
  double w = 1.0;
  double p_value = 1.0;
};

/// Royston's (1995) approximation for 3 <= n <= 5000.
inline ShapiroWilk shapiro_wilk(std::span<const double> sample) {
  const std::size_t n = sample.size();
  if (n < 3) throw ArgumentError("shapiro_wilk needs at least 3 values");
  if (n > 5000) throw ArgumentError("shapiro_wilk supports at most 5000 values");
  detail::check_finite(sample, "shapiro_wilk");
  std::vector<double> x(sample.begin(), sample.end());
  std::sort(x.begin(), x.end());
  if (x.front() == x.back()) throw DegenerateError("shapiro_wilk: constant sample");

  const boost::math::normal_distribution<> nd;
  const double dn = static_cast<double>(n);
  std::vector<double> m(n);
  double summ2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = boost::math::quantile(nd, (static_cast<double>(i + 1) - 0.375) / (dn + 0.25));
    summ2 += m[i] * m[i];
  }
  const double ssumm2 = std::sqrt(summ2);
  const double rsn = 1.0 / std::sqrt(dn);
  static constexpr double c1[] = {0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056};
  static constexpr double c2[] = {0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};

  // coefficients for the upper half; a[n-1-i] = -a[i]
  std::vector<double> a(n, 0.0);
  if (n == 3) {
    a[0] = -std::sqrt(0.5);
    a[2] = std::sqrt(0.5);
  } else {
    const double an = m[n - 1] / ssumm2 + detail::poly(c1, rsn);
    std::size_t first;
    double fac;
    if (n > 5) {
      const double an1 = m[n - 2] / ssumm2 + detail::poly(c2, rsn);
      fac = std::sqrt((summ2 - 2 * m[n - 1] * m[n - 1] - 2 * m[n - 2] * m[n - 2]) /
                      (1 - 2 * an * an - 2 * an1 * an1));
      a[n - 2] = an1;
      first = 2;
    } else {
      fac = std::sqrt((summ2 - 2 * m[n - 1] * m[n - 1]) / (1 - 2 * an * an));
      first = 1;
    }
    a[n - 1] = an;
    for (std::size_t i = first; i < n - first; ++i) a[n - 1 - i] = m[n - 1 - i] / fac;
    for (std::size_t i = 0; i < first; ++i) a[i] = -a[n - 1 - i];
  }

  const double mean = detail::mean(x);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += a[i] * x[i];
    den += (x[i] - mean) * (x[i] - mean);
  }
  ShapiroWilk r;
  r.w = std::min(1.0, num * num / den);

  if (n == 3) {
    const double pi6 = 6.0 / std::numbers::pi;
    r.p_value = detail::clamp_p(pi6 * (std::asin(std::sqrt(r.w)) - std::asin(std::sqrt(0.75))));
    return r;
  }
  const double w1 = std::log(1.0 - r.w);
  double z;
  if (n <= 11) {
    static constexpr double g[] = {-2.273, 0.459};
    static constexpr double c3[] = {0.5440, -0.39978, 0.025054, -6.714e-4};
    static constexpr double c4[] = {1.3822, -0.77857, 0.062767, -0.0020322};
    const double gamma = detail::poly(g, dn);
    if (w1 >= gamma) return {r.w, 0.0};  // far tail
    const double mu = detail::poly(c3, dn);
    const double sigma = std::exp(detail::poly(c4, dn));
    z = (-std::log(gamma - w1) - mu) / sigma;
  } else {
    static constexpr double c5[] = {-1.5861, -0.31082, -0.083751, 0.0038915};
    static constexpr double c6[] = {-0.4803, -0.082676, 0.0030302};
    const double xx = std::log(dn);
    const double mu = detail::poly(c5, xx);
    const double sigma = std::exp(detail::poly(c6, xx));
    z = (w1 - mu) / sigma;
  }
  r.p_value = detail::clamp_p(detail::normal_sf(z));
  return r;
}

// --- Levene ------------------------------------------------------------------

enum class LeveneCenter { mean, median };

struct Levene {
  double w = 0.0;
  double p_value = 1.0;
};

inline Levene levene(std::span<const double> a, std::span<const double> b,
                     LeveneCenter center = LeveneCenter::mean) {
  if (a.size() < 2 || b.size() < 2) throw ArgumentError("levene needs at least 2 values per group");
  detail::check_finite(a, "levene");
  detail::check_finite(b, "levene");
  auto centre_of = [&](std::span<const double> x) {
    if (center == LeveneCenter::mean) return detail::mean(x);
    std::vector<double> s(x.begin(), x.end());
    std::sort(s.begin(), s.end());
    const std::size_t k = s.size();
    return k % 2 ? s[k / 2] : 0.5 * (s[k / 2 - 1] + s[k / 2]);
  };
  auto deviations = [&](std::span<const double> x) {
    const double c = centre_of(x);
    std::vector<double> z;
    for (double v : x) z.push_back(std::abs(v - c));
    return z;
  };
  const auto za = deviations(a), zb = deviations(b);
  const double ma = detail::mean(za), mb = detail::mean(zb);
  const double na = static_cast<double>(za.size()), nb = static_cast<double>(zb.size());
  const double grand = (ma * na + mb * nb) / (na + nb);
  const double between = na * (ma - grand) * (ma - grand) + nb * (mb - grand) * (mb - grand);
  double within = 0.0;
  for (double z : za) within += (z - ma) * (z - ma);
  for (double z : zb) within += (z - mb) * (z - mb);
  const double df2 = na + nb - 2.0;
  if (within == 0.0) {
    if (between == 0.0) throw DegenerateError("levene: no spread within or between groups");
    return {std::numeric_limits<double>::infinity(), 0.0};
  }
  Levene r;
  r.w = df2 * between / within;
  const boost::math::fisher_f_distribution<> f(1.0, df2);
  r.p_value = detail::clamp_p(boost::math::cdf(boost::math::complement(f, r.w)));
  return r;
}

// --- t tests -----------------------------------------------------------------

inline TestReport t_test(std::span<const double> a, std::span<const double> b, bool equal_var) {
  if (a.size() < 2 || b.size() < 2) throw ArgumentError("t-test needs at least 2 values per group");
  detail::check_finite(a, "t-test");
  detail::check_finite(b, "t-test");
  TestReport r;
  r.group_a = summarize(a);
  r.group_b = summarize(b);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double va = detail::variance(a), vb = detail::variance(b);
  if (va == 0.0 && vb == 0.0) throw DegenerateError("t-test: both groups have zero variance");
  const double diff = r.group_a.mean - r.group_b.mean;
  double se, df;
  if (equal_var) {
    df = na + nb - 2.0;
    const double sp2 = ((na - 1) * va + (nb - 1) * vb) / df;
    se = std::sqrt(sp2 * (1.0 / na + 1.0 / nb));
    r.test_used = TestKind::student_t;
  } else {
    const double qa = va / na, qb = vb / nb;
    se = std::sqrt(qa + qb);
    df = (qa + qb) * (qa + qb) / (qa * qa / (na - 1) + qb * qb / (nb - 1));
    r.test_used = TestKind::welch_t;
  }
  r.statistic = diff / se;
  r.df = df;
  const boost::math::students_t_distribution<> t(df);
  r.p_value = detail::clamp_p(2.0 * boost::math::cdf(boost::math::complement(t, std::abs(r.statistic))));
  r.significant = r.p_value < kAlpha;
  return r;
}

/// Levene gate at alpha = 0.05, then pooled Student or Welch.
inline TestReport two_stage_t_test(std::span<const double> a, std::span<const double> b,
                                   LeveneCenter center = LeveneCenter::mean) {
  if (a.size() < 2 || b.size() < 2) throw ArgumentError("t-test needs at least 2 values per group");
  const Levene lev = levene(a, b, center);
  const bool equal = lev.p_value >= kAlpha;
  TestReport r = t_test(a, b, equal);
  r.levene_p = lev.p_value;
  r.path = equal ? "levene p >= 0.05: student t" : "levene p < 0.05: welch t";
  return r;
}

// --- Mann-Whitney U ----------------------------------------------------------

namespace detail {

/// Mid-ranks (1-based) of the pooled sample, doubled to stay integral.
inline std::vector<long> doubled_midranks(std::span<const double> pooled) {
  const std::size_t n = pooled.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto i, auto j) { return pooled[i] < pooled[j]; });
  std::vector<long> r2(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && pooled[idx[j + 1]] == pooled[idx[i]]) ++j;
    const long twice = static_cast<long>(i + 1 + j + 1);  // 2 * mean of ranks i+1..j+1
    for (std::size_t k = i; k <= j; ++k) r2[idx[k]] = twice;
    i = j + 1;
  }
  return r2;
}

}  // namespace detail

inline constexpr std::size_t kExactMannWhitneyMax = 20;

/// Two-tailed Mann-Whitney U. The statistic is U of group a. Exact
/// permutation p over the observed mid-ranks when n_a + n_b <= 20, normal
/// approximation with tie and continuity corrections otherwise.
inline TestReport mann_whitney_u(std::span<const double> a, std::span<const double> b,
                                 std::optional<bool> force_exact = std::nullopt) {
  if (a.empty() || b.empty()) throw ArgumentError("mann_whitney_u needs non-empty groups");
  detail::check_finite(a, "mann_whitney_u");
  detail::check_finite(b, "mann_whitney_u");
  const std::size_t na = a.size(), nb = b.size(), n = na + nb;
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto r2 = detail::doubled_midranks(pooled);
  long ra2 = 0;
  for (std::size_t i = 0; i < na; ++i) ra2 += r2[i];
  // 2U = 2R - n_a (n_a + 1)
  const long u2 = ra2 - static_cast<long>(na * (na + 1));
  const long mu2 = static_cast<long>(na * nb);  // 2 * E[U]

  TestReport r;
  r.test_used = TestKind::mann_whitney;
  r.group_a = summarize(a);
  r.group_b = summarize(b);
  r.statistic = static_cast<double>(u2) / 2.0;
  const bool exact = force_exact.value_or(n <= kExactMannWhitneyMax);
  r.exact = exact;
  if (exact) {
    if (n > 40) throw ArgumentError("exact Mann-Whitney limited to 40 values");
    // count[k][s]: subsets of size k with doubled rank sum s
    const long total = std::accumulate(r2.begin(), r2.end(), 0L);
    std::vector<std::vector<long double>> count(na + 1, std::vector<long double>(static_cast<std::size_t>(total) + 1, 0.0L));
    count[0][0] = 1.0L;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = std::min(i + 1, na); k >= 1; --k)
        for (long s = total; s >= r2[i]; --s)
          count[k][static_cast<std::size_t>(s)] += count[k - 1][static_cast<std::size_t>(s - r2[i])];
    const long obs = std::labs(u2 - mu2);  // |2U - 2E[U]|
    long double hit = 0.0L, all = 0.0L;
    const long shift = static_cast<long>(na * (na + 1));
    for (long s = 0; s <= total; ++s) {
      const long double c = count[na][static_cast<std::size_t>(s)];
      if (c == 0.0L) continue;
      all += c;
      if (std::labs((s - shift) - mu2) >= obs) hit += c;
    }
    r.p_value = detail::clamp_p(static_cast<double>(hit / all));
    r.path = "exact permutation distribution";
  } else {
    // tie correction from group sizes of equal values
    std::vector<double> s = pooled;
    std::sort(s.begin(), s.end());
    double ties = 0.0;
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j + 1 < n && s[j + 1] == s[i]) ++j;
      const double t = static_cast<double>(j - i + 1);
      ties += t * t * t - t;
      i = j + 1;
    }
    const double dn = static_cast<double>(n);
    const double var = static_cast<double>(na * nb) / 12.0 * ((dn + 1.0) - ties / (dn * (dn - 1.0)));
    if (!(var > 0.0)) {
      r.p_value = 1.0;
    } else {
      const double dev = std::abs(r.statistic - static_cast<double>(na * nb) / 2.0);
      const double z = std::max(0.0, dev - 0.5) / std::sqrt(var);
      r.p_value = detail::clamp_p(2.0 * detail::normal_sf(z));
    }
    r.path = "normal approximation";
  }
  r.significant = r.p_value < kAlpha;
  return r;
}

// --- gate --------------------------------------------------------------------

/// Shapiro-Wilk on both groups; both normal -> two-stage t-test, else Mann-Whitney.
inline TestReport select_and_test(std::span<const double> a, std::span<const double> b,
                                  LeveneCenter center = LeveneCenter::mean) {
  if (a.size() < 3 || b.size() < 3)
    throw ArgumentError("select_and_test needs at least 3 values per group");
  const double pa = shapiro_wilk(a).p_value;
  const double pb = shapiro_wilk(b).p_value;
  TestReport r;
  if (pa >= kAlpha && pb >= kAlpha) {
    r = two_stage_t_test(a, b, center);
    r.path = "normal (shapiro-wilk p >= 0.05 both groups); " + r.path;
  } else {
    r = mann_whitney_u(a, b);
    r.path = "non-normal (shapiro-wilk p < 0.05); mann-whitney, " + r.path;
  }
  r.shapiro_p_a = pa;
  r.shapiro_p_b = pb;
  return r;
}

}  // namespace mrsq::stats
