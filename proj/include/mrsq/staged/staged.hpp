#pragma once

// Three-stage quantifier: (1) imperfection factors, (2) background,
// (3) non-negative linear least squares for the concentrations. Stages 1 and
// 2 are pluggable engines; the defaults are deterministic searches.

#include <Eigen/Sparse>
#include <chrono>
#include <functional>
#include <map>
#include <mutex>
#include <numbers>
#include <shared_mutex>

#include "mrsq/lcm/spline.hpp"
#include "mrsq/numeric/nelder_mead.hpp"
#include "mrsq/numeric/nnls.hpp"
#include "mrsq/quant_result.hpp"
#include "mrsq/signal/model.hpp"

namespace mrsq::staged {

using lcm::PpmWindow;

struct IfEstimate {
  double phi0 = 0.0;          // rad
  double gamma_global = 0.0;  // s^-1
  RealVec gamma;              // per metabolite, s^-1
  RealVec f;                  // per metabolite, Hz

  void validate(std::size_t n_metabolites) const {
    if (gamma.size() != n_metabolites || f.size() != n_metabolites)
      throw ArgumentError("IF estimate needs one gamma and one f per metabolite");
    if (gamma_global < 0.0) throw ArgumentError("gamma must be non-negative");
    for (double g : gamma)
      if (!(g >= 0.0)) throw ArgumentError("gamma must be non-negative");
  }
};

struct StagedConfig {
  PpmWindow window{0.2, 4.2};
  double reference_ppm = kWaterPpm;
  // stage 1 grids
  double phi0_grid_deg = 45.0;
  double phi0_step_deg = 5.0;
  double gamma_grid_max = 10.0;
  double gamma_step = 1.0;
  double f_grid = 5.0;
  double f_step = 0.5;
  bool refine = true;
  bool refine_gamma_per_metabolite = false;
  // smooth nuisance background during the search; 0 searches with baseline 0
  double search_knot_spacing = 0.4;
  int max_refine_evals = 1500;
  std::size_t refine_max_shifts = 6;  // drifts refined by the simplex, largest first
  // feasible box for the refinement
  double phi0_bound = std::numbers::pi / 2;
  double gamma_bound = 20.0;
  double f_bound = 10.0;
  // stage 2
  double als_lambda = 1e5;
  double als_p = 0.01;
  int als_iterations = 10;
  int background_passes = 3;
  double als_noise_margin = 2.0;  // in robust noise SDs

  void validate() const {
    if (!(phi0_step_deg > 0.0) || !(gamma_step > 0.0) || !(f_step > 0.0))
      throw ConfigError("grid steps must be positive");
    if (!(als_lambda > 0.0) || !(als_p > 0.0 && als_p < 1.0))
      throw ConfigError("als_lambda must be > 0 and als_p in (0, 1)");
    if (als_iterations < 1 || background_passes < 1)
      throw ConfigError("als_iterations and background_passes must be positive");
  }
};

struct StageEngines {
  std::string if_extractor = "deterministic-search";
  std::string background_predictor = "asymmetric-smoothing";
};

namespace detail {

struct Prepared {
  std::vector<std::size_t> bins;  // fit window
  ComplexVec y;                   // data spectrum, full axis
  double scale = 0.0;             // max |Y|
};

inline Prepared prepare(const Spectrum& s, const BasisSet& basis, const StagedConfig& cfg) {
  s.validate();
  basis.validate();
  if (basis.length() != s.fid.size())
    throw ArgumentError("basis length " + std::to_string(basis.length()) +
                        " does not match spectrum length " + std::to_string(s.fid.size()));
  Prepared p;
  p.y = dft(s.fid);
  for (const auto& z : p.y) p.scale = std::max(p.scale, std::abs(z));
  const RealVec axis = ppm_axis(s.acq, cfg.reference_ppm);
  p.bins = ppm_window(axis, cfg.window.lo, cfg.window.hi);
  if (p.bins.size() < 2) throw ArgumentError("fit window covers fewer than two bins");
  return p;
}

inline ComplexVec at_bins(const ComplexVec& v, const std::vector<std::size_t>& bins) {
  ComplexVec out(bins.size());
  for (std::size_t r = 0; r < bins.size(); ++r) out[r] = v[bins[r]];
  return out;
}

inline ComplexVec component(const BasisSet& basis, std::size_t l, double gamma, double f,
                            const AcquisitionParams& acq, const std::vector<std::size_t>& bins) {
  return at_bins(apply_imperfections(basis.entries[l].m, std::max(gamma, 0.0), f, acq), bins);
}

struct LinearFit {
  Eigen::VectorXd c;
  double resid2 = 0.0;
};

/// min ||sum_l c_l cols_l - target||^2 with real c; the last `n_free`
/// coefficients are unconstrained, the rest non-negative.
inline LinearFit complex_nnls(const std::vector<ComplexVec>& cols, const ComplexVec& target,
                              std::size_t n_free = 0) {
  const auto m = static_cast<Eigen::Index>(cols.size());
  Eigen::MatrixXd g(m, m);
  Eigen::VectorXd c(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    const auto& ca = cols[static_cast<std::size_t>(a)];
    double s = 0.0;
    for (std::size_t r = 0; r < target.size(); ++r) s += (std::conj(ca[r]) * target[r]).real();
    c(a) = s;
    for (Eigen::Index b = a; b < m; ++b) {
      const auto& cb = cols[static_cast<std::size_t>(b)];
      double t = 0.0;
      for (std::size_t r = 0; r < target.size(); ++r) t += (std::conj(ca[r]) * cb[r]).real();
      g(a, b) = g(b, a) = t;
    }
  }
  double yy = 0.0;
  for (const auto& z : target) yy += std::norm(z);
  LinearFit out;
  std::vector<bool> nonneg(cols.size(), true);
  for (std::size_t i = cols.size() - std::min(n_free, cols.size()); i < cols.size(); ++i) nonneg[i] = false;
  out.c = numeric::nnls_gram(g, c, nonneg).x;
  out.resid2 = std::max(0.0, yy - 2.0 * c.dot(out.c) + out.c.dot(g * out.c));
  return out;
}

/// Smooth complex background columns over the window: each cubic B-spline
/// appears as B_j and i B_j so its coefficient is a free complex number.
inline std::vector<ComplexVec> spline_columns(const AcquisitionParams& acq, const StagedConfig& cfg) {
  std::vector<ComplexVec> out;
  if (!(cfg.search_knot_spacing > 0.0)) return out;
  const auto d = lcm::spline_design(cfg.window, cfg.search_knot_spacing, acq, cfg.reference_ppm);
  for (Eigen::Index j = 0; j < d.matrix.cols(); ++j) {
    ComplexVec re(d.bins.size()), im(d.bins.size());
    for (std::size_t r = 0; r < d.bins.size(); ++r) {
      re[r] = d.matrix(static_cast<Eigen::Index>(r), j);
      im[r] = Complex{0.0, re[r].real()};
    }
    out.push_back(std::move(re));
    out.push_back(std::move(im));
  }
  return out;
}

inline ComplexVec rotate(const ComplexVec& v, double phi0) {
  // exp[+i phi0] v, i.e. the data seen by an unphased model
  const Complex r = std::polar(1.0, phi0);
  ComplexVec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = r * v[i];
  return out;
}

template <class Fn>
class Registry {
 public:
  Registry(std::string name, Fn fn) { items_.emplace(std::move(name), std::move(fn)); }

  void add(std::string name, Fn fn) {
    std::unique_lock lock(mu_);
    items_[std::move(name)] = std::move(fn);
  }
  Fn find(const std::string& name, const char* kind) const {
    std::shared_lock lock(mu_);
    auto it = items_.find(name);
    if (it == items_.end()) throw ConfigError(std::string("unknown ") + kind + " engine '" + name + "'");
    return it->second;
  }

 private:
  mutable std::shared_mutex mu_;
  std::map<std::string, Fn> items_;
};

}  // namespace detail

// --- stage 1 -----------------------------------------------------------------

namespace detail {

inline Eigen::MatrixXcd as_matrix(const std::vector<ComplexVec>& cols, std::size_t rows) {
  Eigen::MatrixXcd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j)
    m.col(static_cast<Eigen::Index>(j)) =
        Eigen::Map<const Eigen::VectorXcd>(cols[j].data(), static_cast<Eigen::Index>(rows));
  return m;
}

/// Stage-1 residual: metabolite columns (c >= 0) plus a fixed set of smooth
/// nuisance columns with free coefficients. Everything that does not depend
/// on the metabolite columns is computed once.
class SearchFit {
 public:
  SearchFit(ComplexVec y, const std::vector<ComplexVec>& smooth) : y_(std::move(y)) {
    const auto n = static_cast<Eigen::Index>(y_.size());
    yv_ = Eigen::Map<const Eigen::VectorXcd>(y_.data(), n);
    s_ = as_matrix(smooth, y_.size());
    gss_ = (s_.adjoint() * s_).real();
    const Eigen::VectorXcd sy = s_.adjoint() * yv_;
    cs_re_ = sy.real();
    cs_im_ = -sy.imag();  // Re(conj(S) i y)
    yy_ = yv_.squaredNorm();
  }

  /// Fit at data rotation exp[+i phi0]; `m` holds the metabolite columns.
  LinearFit operator()(const Eigen::MatrixXcd& m, double phi0) const {
    const Eigen::Index nm = m.cols(), ns = s_.cols(), nt = nm + ns;
    const Complex rot = std::polar(1.0, phi0);
    Eigen::MatrixXd g(nt, nt);
    Eigen::VectorXd c(nt);
    g.topLeftCorner(nm, nm) = (m.adjoint() * m).real();
    if (ns) {
      const Eigen::MatrixXd gms = (m.adjoint() * s_).real();
      g.topRightCorner(nm, ns) = gms;
      g.bottomLeftCorner(ns, nm) = gms.transpose();
      g.bottomRightCorner(ns, ns) = gss_;
      c.tail(ns) = rot.real() * cs_re_ + rot.imag() * cs_im_;
    }
    c.head(nm) = (m.adjoint() * yv_ * rot).real();
    std::vector<bool> nonneg(static_cast<std::size_t>(nt), false);
    for (Eigen::Index i = 0; i < nm; ++i) nonneg[static_cast<std::size_t>(i)] = true;
    LinearFit out;
    out.c = numeric::nnls_gram(g, c, nonneg).x;
    out.resid2 = std::max(0.0, yy_ - 2.0 * c.dot(out.c) + out.c.dot(g * out.c));
    return out;
  }

 private:
  ComplexVec y_;
  Eigen::VectorXcd yv_;
  Eigen::MatrixXcd s_;
  Eigen::MatrixXd gss_;
  Eigen::VectorXd cs_re_, cs_im_;
  double yy_ = 0.0;
};

}  // namespace detail

/// Deterministic grid search followed by simplex refinement. The residual is
/// the complex NNLS misfit of the metabolite model, with a coarse free spline
/// absorbing broad background so it cannot bias the line widths.
inline IfEstimate search_ifs(const Spectrum& s, const BasisSet& basis, const StagedConfig& cfg) {
  cfg.validate();
  const auto prep = detail::prepare(s, basis, cfg);
  if (prep.scale == 0.0) throw DegenerateError("all-zero data");
  ComplexVec y = detail::at_bins(prep.y, prep.bins);
  for (auto& z : y) z /= prep.scale;
  const std::size_t nm = basis.size();
  const std::size_t nw = prep.bins.size();
  const double deg = std::numbers::pi / 180.0;
  const detail::SearchFit fit(y, detail::spline_columns(s.acq, cfg));
  auto column = [&](std::size_t l, double g, double f) {
    const ComplexVec c = detail::component(basis, l, g, f, s.acq, prep.bins);
    return Eigen::VectorXcd(Eigen::Map<const Eigen::VectorXcd>(c.data(), static_cast<Eigen::Index>(nw)));
  };

  // phi0 x global gamma grid at f = 0
  double best = std::numeric_limits<double>::infinity();
  IfEstimate est;
  est.f.assign(nm, 0.0);
  Eigen::MatrixXcd best_cols;
  Eigen::VectorXd best_c;
  const int n_phi = static_cast<int>(std::floor(2 * cfg.phi0_grid_deg / cfg.phi0_step_deg + 1e-9));
  const int n_gamma = static_cast<int>(std::floor(cfg.gamma_grid_max / cfg.gamma_step + 1e-9));
  for (int gi = 0; gi <= n_gamma; ++gi) {
    const double g = gi * cfg.gamma_step;
    Eigen::MatrixXcd cols(static_cast<Eigen::Index>(nw), static_cast<Eigen::Index>(nm));
    for (std::size_t l = 0; l < nm; ++l) cols.col(static_cast<Eigen::Index>(l)) = column(l, g, 0.0);
    for (int i = 0; i <= n_phi; ++i) {
      const double phi = (-cfg.phi0_grid_deg + i * cfg.phi0_step_deg) * deg;
      const auto r = fit(cols, phi);
      if (r.resid2 < best) {
        best = r.resid2;
        est.phi0 = phi;
        est.gamma_global = g;
        best_cols = cols;
        best_c = r.c;
      }
    }
  }
  est.gamma.assign(nm, est.gamma_global);

  // per-metabolite drift grid, dominant metabolites first
  std::vector<std::size_t> order;
  for (std::size_t l = 0; l < nm; ++l)
    if (best_c(static_cast<Eigen::Index>(l)) > 0.0) order.push_back(l);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    return best_c(static_cast<Eigen::Index>(a)) > best_c(static_cast<Eigen::Index>(b));
  });
  const int n_f = static_cast<int>(std::floor(2 * cfg.f_grid / cfg.f_step + 1e-9));
  for (std::size_t l : order) {
    const auto li = static_cast<Eigen::Index>(l);
    Eigen::VectorXcd keep = best_cols.col(li);
    for (int i = 0; i <= n_f; ++i) {
      const double f = -cfg.f_grid + i * cfg.f_step;
      best_cols.col(li) = column(l, est.gamma_global, f);
      const auto r = fit(best_cols, est.phi0);
      if (r.resid2 < best) {
        best = r.resid2;
        est.f[l] = f;
        keep = best_cols.col(li);
      }
    }
    best_cols.col(li) = keep;
  }
  if (!cfg.refine) return est;

  // simplex refinement over [phi0, gamma (global or per metabolite), f of the
  // dominant metabolites]; the rest keep their grid drift
  const bool per = cfg.refine_gamma_per_metabolite;
  const std::size_t ng = per ? nm : 1;
  if (order.size() > cfg.refine_max_shifts) order.resize(cfg.refine_max_shifts);
  const std::size_t nf = order.size();
  const auto dim = static_cast<Eigen::Index>(1 + ng + nf);
  auto unpack = [&](const Eigen::VectorXd& x, double& phi0, RealVec& gamma, RealVec& f) {
    phi0 = std::clamp(x(0), -cfg.phi0_bound, cfg.phi0_bound);
    gamma.resize(nm);
    f = est.f;
    for (std::size_t l = 0; l < nm; ++l)
      gamma[l] = std::clamp(x(static_cast<Eigen::Index>(1 + (per ? l : 0))), 0.0, cfg.gamma_bound);
    for (std::size_t i = 0; i < nf; ++i)
      f[order[i]] = std::clamp(x(static_cast<Eigen::Index>(1 + ng + i)), -cfg.f_bound, cfg.f_bound);
  };
  Eigen::VectorXd x0(dim), step(dim);
  x0(0) = est.phi0;
  step(0) = 2.0 * deg;
  for (std::size_t i = 0; i < ng; ++i) {
    x0(static_cast<Eigen::Index>(1 + i)) = est.gamma_global;
    step(static_cast<Eigen::Index>(1 + i)) = 0.5 * cfg.gamma_step;
  }
  for (std::size_t i = 0; i < nf; ++i) {
    x0(static_cast<Eigen::Index>(1 + ng + i)) = est.f[order[i]];
    step(static_cast<Eigen::Index>(1 + ng + i)) = 0.5 * cfg.f_step;
  }
  // component cache: a column is recomputed only when its (gamma, f) moved
  Eigen::MatrixXcd cols = best_cols;
  RealVec cached_g(nm, est.gamma_global), cached_f = est.f;
  auto obj = [&](const Eigen::VectorXd& x) {
    double phi0;
    RealVec gamma, f;
    unpack(x, phi0, gamma, f);
    for (std::size_t l = 0; l < nm; ++l)
      if (gamma[l] != cached_g[l] || f[l] != cached_f[l]) {
        cols.col(static_cast<Eigen::Index>(l)) = column(l, gamma[l], f[l]);
        cached_g[l] = gamma[l];
        cached_f[l] = f[l];
      }
    // out-of-box points are charged by their distance so the simplex walks back
    double excess = std::max(0.0, std::abs(x(0)) - cfg.phi0_bound);
    for (Eigen::Index i = 1; i < x.size(); ++i) {
      const bool is_gamma = i < static_cast<Eigen::Index>(1 + ng);
      excess += is_gamma ? std::max({0.0, -x(i), x(i) - cfg.gamma_bound})
                         : std::max(0.0, std::abs(x(i)) - cfg.f_bound);
    }
    return fit(cols, phi0).resid2 * (1.0 + excess);
  };
  numeric::NelderMeadOptions opt;
  opt.ftol = 1e-12;
  opt.xtol = 1e-6;
  // a restart guards against early simplex collapse; both share the budget
  Eigen::VectorXd x = x0;
  int budget = cfg.max_refine_evals;
  for (int round = 0; round < 2 && budget > static_cast<int>(dim) + 1; ++round) {
    opt.max_evals = budget;
    const auto r = numeric::nelder_mead(obj, x, step, opt);
    budget -= r.evals;
    if (r.value <= best) {
      best = r.value;
      x = r.x;
    }
  }
  unpack(x, est.phi0, est.gamma, est.f);
  if (!per) {
    est.gamma_global = est.gamma[0];
  } else {
    double sum = 0.0;
    for (double g : est.gamma) sum += g;
    est.gamma_global = sum / static_cast<double>(nm);
  }
  return est;
}

// --- stage 2 -----------------------------------------------------------------

namespace detail {

inline Eigen::SparseMatrix<double> second_difference_gram(Eigen::Index n) {
  std::vector<Eigen::Triplet<double>> t;
  for (Eigen::Index i = 0; i + 2 < n; ++i) {
    const double c[3] = {1.0, -2.0, 1.0};
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) t.emplace_back(i + a, i + b, c[a] * c[b]);
  }
  Eigen::SparseMatrix<double> m(n, n);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

}  // namespace detail

/// Robust noise SD of a slowly varying signal: MAD of first differences.
inline double difference_noise_sd(std::span<const double> y) {
  if (y.size() < 3) return 0.0;
  RealVec d(y.size() - 1);
  for (std::size_t i = 0; i + 1 < y.size(); ++i) d[i] = std::abs(y[i + 1] - y[i]);
  std::nth_element(d.begin(), d.begin() + static_cast<long>(d.size() / 2), d.end());
  return d[d.size() / 2] / (0.6744897501960817 * std::sqrt(2.0));
}

/// Whittaker smoother min sum w_i (y_i - z_i)^2 + lambda ||D2 z||^2 with
/// asymmetric weights: p where y exceeds z by more than `margin`, 1 - p
/// elsewhere. p = 0.5 is the symmetric smoother.
inline RealVec asymmetric_smooth(std::span<const double> y, double lambda, double p, int iterations,
                                 double margin = 0.0) {
  const auto n = static_cast<Eigen::Index>(y.size());
  if (n < 3) return RealVec(y.begin(), y.end());
  const Eigen::SparseMatrix<double> dtd = lambda * detail::second_difference_gram(n);
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);
  Eigen::VectorXd w = Eigen::VectorXd::Ones(n), z = yv;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  const bool symmetric = p == 0.5;
  for (int it = 0; it < (symmetric ? 1 : iterations); ++it) {
    Eigen::SparseMatrix<double> a = dtd;
    for (Eigen::Index i = 0; i < n; ++i) a.coeffRef(i, i) += w(i);
    solver.compute(a);
    if (solver.info() != Eigen::Success) throw DegenerateError("smoother system is singular");
    z = solver.solve(w.cwiseProduct(yv));
    Eigen::VectorXd nw(n);
    for (Eigen::Index i = 0; i < n; ++i) nw(i) = yv(i) > z(i) + margin ? p : 1.0 - p;
    if (nw == w) break;
    w = nw;
  }
  return RealVec(z.data(), z.data() + n);
}

/// Default background engine: subtract the current metabolite model, then fit
/// an asymmetric smoother to the real part of the residual and a symmetric
/// one to the imaginary part. The first model comes from a fit with a free
/// coarse spline; later passes refit the metabolites to Y - B.
inline Baseline smooth_background(const Spectrum& s, const BasisSet& basis, const IfEstimate& ifs,
                                  const StagedConfig& cfg) {
  cfg.validate();
  ifs.validate(basis.size());
  const auto prep = detail::prepare(s, basis, cfg);
  Baseline out{ComplexVec(s.fid.size())};
  if (prep.scale == 0.0) return out;
  const std::size_t nw = prep.bins.size();
  ComplexVec y = detail::at_bins(prep.y, prep.bins);
  for (auto& z : y) z /= prep.scale;
  const Complex ph = std::polar(1.0, -ifs.phi0);
  std::vector<ComplexVec> cols;
  for (std::size_t l = 0; l < basis.size(); ++l) {
    cols.push_back(detail::component(basis, l, ifs.gamma[l], ifs.f[l], s.acq, prep.bins));
    for (auto& z : cols.back()) z *= ph;
  }
  const auto smooth = detail::spline_columns(s.acq, cfg);
  ComplexVec b(nw);
  for (int pass = 0; pass < cfg.background_passes; ++pass) {
    ComplexVec target(nw);
    for (std::size_t r = 0; r < nw; ++r) target[r] = y[r] - b[r];
    detail::LinearFit fit;
    if (pass == 0 && !smooth.empty()) {
      std::vector<ComplexVec> joint = cols;
      joint.insert(joint.end(), smooth.begin(), smooth.end());
      fit = detail::complex_nnls(joint, target, smooth.size());
    } else {
      fit = detail::complex_nnls(cols, target);
    }
    RealVec re(nw), im(nw);
    for (std::size_t r = 0; r < nw; ++r) {
      Complex m{};
      for (std::size_t l = 0; l < cols.size(); ++l) m += fit.c(static_cast<Eigen::Index>(l)) * cols[l][r];
      re[r] = (y[r] - m).real();
      im[r] = (y[r] - m).imag();
    }
    // points inside the noise band keep full weight so noise does not drag the fit down
    const double margin = cfg.als_noise_margin * difference_noise_sd(re);
    const RealVec zr = asymmetric_smooth(re, cfg.als_lambda, cfg.als_p, cfg.als_iterations, margin);
    const RealVec zi = asymmetric_smooth(im, cfg.als_lambda, 0.5, 1);
    for (std::size_t r = 0; r < nw; ++r) b[r] = {zr[r], zi[r]};
  }
  for (std::size_t r = 0; r < nw; ++r) out.b[prep.bins[r]] = b[r] * prep.scale;
  return out;
}

// --- engines -------------------------------------------------------------

using IfEngine = std::function<IfEstimate(const Spectrum&, const BasisSet&, const StagedConfig&)>;
using BackgroundEngine =
    std::function<Baseline(const Spectrum&, const BasisSet&, const IfEstimate&, const StagedConfig&)>;

namespace detail {

inline Registry<IfEngine>& if_engines() {
  static Registry<IfEngine> r("deterministic-search", search_ifs);
  return r;
}

inline Registry<BackgroundEngine>& background_engines() {
  static Registry<BackgroundEngine> r("asymmetric-smoothing", smooth_background);
  return r;
}

}  // namespace detail

inline void register_if_engine(std::string name, IfEngine fn) {
  detail::if_engines().add(std::move(name), std::move(fn));
}

inline void register_background_engine(std::string name, BackgroundEngine fn) {
  detail::background_engines().add(std::move(name), std::move(fn));
}

inline IfEstimate extract_ifs(const Spectrum& s, const BasisSet& basis,
                              const std::string& engine = "deterministic-search",
                              const StagedConfig& cfg = {}) {
  return detail::if_engines().find(engine, "IF extraction")(s, basis, cfg);
}

inline Baseline predict_background(const Spectrum& s, const BasisSet& basis, const IfEstimate& ifs,
                                   const std::string& engine = "asymmetric-smoothing",
                                   const StagedConfig& cfg = {}) {
  return detail::background_engines().find(engine, "background")(s, basis, ifs, cfg);
}

// --- stage 3 -----------------------------------------------------------------

/// Phased, perturbed basis columns over the fit window.
inline std::vector<ComplexVec> stage3_columns(const Spectrum& s, const BasisSet& basis,
                                              const IfEstimate& ifs,
                                              const std::vector<std::size_t>& bins) {
  const Complex ph = std::polar(1.0, -ifs.phi0);
  std::vector<ComplexVec> cols;
  for (std::size_t l = 0; l < basis.size(); ++l) {
    cols.push_back(detail::component(basis, l, ifs.gamma[l], ifs.f[l], s.acq, bins));
    for (auto& z : cols.back()) z *= ph;
  }
  return cols;
}

/// min || exp[-i phi0] sum_l C_l M_l(gamma_l, f_l) - (Y - B) || over C >= 0 on the window.
inline RealVec solve_concentrations(const Spectrum& s, const BasisSet& basis, const IfEstimate& ifs,
                                    const Baseline& baseline, const StagedConfig& cfg = {}) {
  ifs.validate(basis.size());
  const auto prep = detail::prepare(s, basis, cfg);
  if (!baseline.b.empty() && baseline.b.size() != s.fid.size())
    throw ArgumentError("baseline length mismatch");
  const auto cols = stage3_columns(s, basis, ifs, prep.bins);
  const auto nw = static_cast<Eigen::Index>(prep.bins.size());
  const auto nm = static_cast<Eigen::Index>(basis.size());

  // full column rank check on the stacked real system
  Eigen::MatrixXd a(2 * nw, nm);
  for (Eigen::Index l = 0; l < nm; ++l)
    for (Eigen::Index r = 0; r < nw; ++r) {
      const Complex z = cols[static_cast<std::size_t>(l)][static_cast<std::size_t>(r)];
      a(r, l) = z.real();
      a(nw + r, l) = z.imag();
    }
  Eigen::VectorXd norms = a.colwise().norm();
  for (Eigen::Index l = 0; l < nm; ++l)
    if (norms(l) > 0.0) a.col(l) /= norms(l);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinV);
  const Eigen::VectorXd sv = svd.singularValues();
  const double tol = 1e-10 * std::max(1.0, sv(0));
  std::vector<bool> involved(static_cast<std::size_t>(nm), false);
  bool deficient = false;
  for (Eigen::Index i = 0; i < nm; ++i) {
    if (sv(i) > tol) continue;
    deficient = true;
    for (Eigen::Index l = 0; l < nm; ++l)
      if (std::abs(svd.matrixV()(l, i)) > 1e-6) involved[static_cast<std::size_t>(l)] = true;
  }
  for (Eigen::Index l = 0; l < nm; ++l)
    if (norms(l) == 0.0) deficient = involved[static_cast<std::size_t>(l)] = true;
  if (deficient) {
    std::string names;
    for (Eigen::Index l = 0; l < nm; ++l)
      if (involved[static_cast<std::size_t>(l)])
        names += (names.empty() ? "" : ", ") + basis.entries[static_cast<std::size_t>(l)].name;
    throw RankDeficientError("rank-deficient design; collinear entries: " + names);
  }

  ComplexVec target(prep.bins.size());
  for (std::size_t r = 0; r < target.size(); ++r)
    target[r] = prep.y[prep.bins[r]] - (baseline.b.empty() ? Complex{} : baseline.b[prep.bins[r]]);
  const auto fit = detail::complex_nnls(cols, target);
  return RealVec(fit.c.data(), fit.c.data() + fit.c.size());
}

// --- pipeline --------------------------------------------------------------

struct StagedReport {
  QuantResult result;
  IfEstimate ifs;
  Baseline background;
  RealVec conc;  // absolute stage-3 solution, input units
};

inline StagedReport quantify_staged_detailed(const Spectrum& s, const BasisSet& basis,
                                             const StageEngines& engines = {},
                                             const StagedConfig& cfg = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  StagedReport rep;
  try {
    rep.ifs = extract_ifs(s, basis, engines.if_extractor, cfg);
  } catch (const Error& e) {
    throw StageError("stage 1 (imperfection factors)", e.what());
  }
  try {
    rep.background = predict_background(s, basis, rep.ifs, engines.background_predictor, cfg);
  } catch (const Error& e) {
    throw StageError("stage 2 (background)", e.what());
  }
  try {
    rep.conc = solve_concentrations(s, basis, rep.ifs, rep.background, cfg);
  } catch (const Error& e) {
    throw StageError("stage 3 (concentrations)", e.what());
  }

  QuantResult& r = rep.result;
  const std::size_t n = s.fid.size();
  const ComplexVec y = dft(s.fid);
  r.method = QuantMethod::staged;
  r.dataset_id = s.meta.opaque_id;
  r.metabolites = basis.names();
  r.ratio_to_tCr = ratios_to_tcr(r.metabolites, rep.conc);
  r.conc = r.ratio_to_tCr;
  r.absolute = false;
  if (std::any_of(r.conc.begin(), r.conc.end(), [](double v) { return !std::isfinite(v); }))
    r.warnings.push_back("no creatine signal; ratios to tCr undefined");
  r.sd_percent.assign(basis.size(), std::numeric_limits<double>::quiet_NaN());
  r.ppm = ppm_axis(s.acq, cfg.reference_ppm);
  r.input.resize(n);
  r.fitted.assign(n, 0.0);
  r.baseline.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    r.input[k] = y[k].real();
    r.baseline[k] = rep.background.b[k].real();
    r.fitted[k] = r.baseline[k];
  }
  const Complex ph = std::polar(1.0, -rep.ifs.phi0);
  for (std::size_t l = 0; l < basis.size(); ++l) {
    const ComplexVec e = apply_imperfections(basis.entries[l].m, rep.ifs.gamma[l], rep.ifs.f[l], s.acq);
    ComponentFit c{basis.entries[l].name, RealVec(n)};
    for (std::size_t k = 0; k < n; ++k) {
      c.spectrum[k] = (ph * rep.conc[l] * e[k]).real();
      r.fitted[k] += c.spectrum[k];
    }
    r.per_metabolite_fit.push_back(std::move(c));
  }
  r.residual.resize(n);
  for (std::size_t k = 0; k < n; ++k) r.residual[k] = r.input[k] - r.fitted[k];
  r.converged = true;
  r.phi0 = rep.ifs.phi0;
  r.phi1 = 0.0;
  r.gamma = rep.ifs.gamma;
  r.shift_hz = rep.ifs.f;
  r.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

/// Relative concentrations (ratios to tCr) from the three-stage pipeline.
inline QuantResult quantify_staged(const Spectrum& s, const BasisSet& basis,
                                   const StageEngines& engines = {}, const StagedConfig& cfg = {}) {
  return quantify_staged_detailed(s, basis, engines, cfg).result;
}

}  // namespace mrsq::staged
