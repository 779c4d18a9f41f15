#pragma once

// Linear-combination model fit. Separable scheme: an outer bounded
// Levenberg-Marquardt loop over phases, damping, frequency drift and
// lineshape; at every outer iterate the concentrations (>= 0) and spline
// baseline coefficients are solved exactly by regularized NNLS.

#include <chrono>

#include "mrsq/lcm/crlb.hpp"
#include "mrsq/lcm/objective.hpp"
#include "mrsq/numeric/nnls.hpp"
#include "mrsq/quant_result.hpp"

namespace mrsq::lcm {

/// Index layout of the nonlinear parameter vector.
struct ThetaLayout {
  std::size_t n_met;
  std::size_t n_shape;  // free lineshape logits (kernel size - 1), 0 when fixed

  std::size_t phi0() const { return 0; }
  std::size_t phi1() const { return 1; }
  std::size_t gamma(std::size_t l) const { return 2 + l; }
  std::size_t f(std::size_t l) const { return 2 + n_met + l; }
  std::size_t shape(std::size_t j) const { return 2 + 2 * n_met + j; }
  std::size_t size() const { return 2 + 2 * n_met + n_shape; }
};

class LcmProblem {
 public:
  LcmProblem(const Spectrum& data, const BasisSet& basis, const FitConfig& cfg)
      : basis_(basis), cfg_(cfg), acq_(data.acq) {
    cfg_.validate();
    data.validate();
    basis.validate();
    if (basis.length() != data.fid.size())
      throw ArgumentError("basis length " + std::to_string(basis.length()) +
                          " does not match spectrum length " + std::to_string(data.fid.size()));
    if (std::abs(basis.spectral_width - data.acq.spectral_width) >
        1e-6 * data.acq.spectral_width)
      throw ArgumentError("basis spectral width differs from the spectrum's");
    y_ = dft(data.fid);
    double ymax = 0.0;
    for (const auto& z : y_) ymax = std::max(ymax, std::abs(z));
    if (ymax == 0.0) throw DegenerateError("all-zero data");
    spline_ = spline_design(cfg_.window, cfg_.knot_spacing, acq_, cfg_.reference_ppm);
    sigma_ = estimate_noise_sigma(y_, acq_, cfg_.noise_windows, cfg_.reference_ppm);
    sigma_eff_ = sigma_;
    if (!(sigma_ > 0.0)) sigma_eff_ = 1e-9 * ymax;
    nm_ = basis.size();
    nb_ = spline_.n_basis();
    hw_ = cfg_.lineshape_half_width;
    if (2 * hw_ + 1 > y_.size()) throw ArgumentError("lineshape kernel wider than spectrum");
    layout_ = {nm_, cfg_.fit_lineshape ? 2 * hw_ : 0};
    d2h_ = second_difference(nb_);
    d2s_ = second_difference(2 * hw_ + 1);
    const auto nw = static_cast<Eigen::Index>(spline_.bins.size());
    yw_.resize(nw);
    for (Eigen::Index r = 0; r < nw; ++r) yw_(r) = y_[spline_.bins[static_cast<std::size_t>(r)]].real() / sigma_eff_;
  }

  const ThetaLayout& layout() const { return layout_; }
  const SplineDesign& spline() const { return spline_; }
  double sigma() const { return sigma_; }
  double sigma_eff() const { return sigma_eff_; }
  const ComplexVec& data_spectrum() const { return y_; }
  std::size_t n_linear() const { return nm_ + nb_; }
  std::size_t n_residuals() const {
    return spline_.bins.size() + static_cast<std::size_t>(d2h_.rows()) + 2 * nm_ +
           (cfg_.fit_lineshape ? static_cast<std::size_t>(d2s_.rows()) : 0);
  }

  Eigen::VectorXd initial_theta() const {
    Eigen::VectorXd t = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout_.size()));
    for (std::size_t l = 0; l < nm_; ++l) t(idx(layout_.gamma(l))) = std::clamp(cfg_.gamma0, 0.0, cfg_.gamma_max);
    for (std::size_t j = 0; j < layout_.n_shape; ++j) t(idx(layout_.shape(j))) = kShapeStart;
    return t;
  }

  void lower_upper(Eigen::VectorXd& lo, Eigen::VectorXd& hi) const {
    const auto n = static_cast<Eigen::Index>(layout_.size());
    lo.resize(n);
    hi.resize(n);
    lo(0) = -cfg_.phi0_bound;
    hi(0) = cfg_.phi0_bound;
    lo(1) = -cfg_.phi1_bound;
    hi(1) = cfg_.phi1_bound;
    for (std::size_t l = 0; l < nm_; ++l) {
      lo(idx(layout_.gamma(l))) = 0.0;
      hi(idx(layout_.gamma(l))) = cfg_.gamma_max;
      lo(idx(layout_.f(l))) = -cfg_.f_bound;
      hi(idx(layout_.f(l))) = cfg_.f_bound;
    }
    for (std::size_t j = 0; j < layout_.n_shape; ++j) {
      lo(idx(layout_.shape(j))) = -30.0;
      hi(idx(layout_.shape(j))) = 30.0;
    }
  }

  /// Lineshape from its logits (softmax with the centre logit pinned at 0).
  Lineshape lineshape(const Eigen::VectorXd& theta) const {
    if (!cfg_.fit_lineshape) return Lineshape::identity(hw_);
    const std::size_t k = 2 * hw_ + 1;
    RealVec logit(k, 0.0);
    for (std::size_t i = 0, j = 0; i < k; ++i)
      if (i != hw_) logit[i] = theta(idx(layout_.shape(j++)));
    const double mx = *std::max_element(logit.begin(), logit.end());
    double sum = 0.0;
    Lineshape s{RealVec(k)};
    for (std::size_t i = 0; i < k; ++i) sum += (s.coeffs[i] = std::exp(logit[i] - mx));
    for (auto& v : s.coeffs) v /= sum;
    return s;
  }

  /// Full parameter set for a (theta, linear) pair.
  LcmParams params(const Eigen::VectorXd& theta, const Eigen::VectorXd& x) const {
    LcmParams p;
    p.phi0 = theta(0);
    p.phi1 = theta(1);
    for (std::size_t l = 0; l < nm_; ++l) {
      p.gamma.push_back(theta(idx(layout_.gamma(l))));
      p.f.push_back(theta(idx(layout_.f(l))));
      p.C.push_back(x(idx(l)));
    }
    for (std::size_t j = 0; j < nb_; ++j) p.H.push_back(x(idx(nm_ + j)));
    p.S = lineshape(theta);
    return p;
  }

  /// Design matrix of the linear block (columns C then H), divided by sigma.
  Eigen::MatrixXd linear_design(const Eigen::VectorXd& theta) const {
    const auto parts = model_parts(theta, false);
    return design_from(parts);
  }

  /// Regularized NNLS for (C, H) at fixed theta.
  Eigen::VectorXd solve_linear(const Eigen::VectorXd& theta) const {
    return solve_linear_from(design_from(model_parts(theta, false)));
  }

  /// Residual vector: [data; baseline penalty; gamma prior; f prior; lineshape penalty].
  Eigen::VectorXd residual(const Eigen::VectorXd& theta, const Eigen::VectorXd& x) const {
    const Eigen::MatrixXd a = design_from(model_parts(theta, false));
    return residual_from(theta, a, x);
  }

  double objective_value(const Eigen::VectorXd& theta, const Eigen::VectorXd& x) const {
    return residual(theta, x).squaredNorm();
  }

  /// Analytic d residual / d theta at fixed linear parameters.
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& theta, const Eigen::VectorXd& x) const {
    const auto parts = model_parts(theta, true);
    const auto nw = spline_.bins.size();
    const auto rows = static_cast<Eigen::Index>(n_residuals());
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(layout_.size()));
    const Lineshape& s = parts.shape;
    const long h = static_cast<long>(hw_);
    const long n = static_cast<long>(y_.size());
    const double c0 = static_cast<double>(carrier_bin(y_.size()));
    const double dt = acq_.dwell_time();

    // G = sum_l C_l E_l over the full axis, needed for the lineshape derivatives.
    ComplexVec g(y_.size());
    for (std::size_t l = 0; l < nm_; ++l) {
      const double c = x(idx(l));
      if (c == 0.0) continue;
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += c * parts.e[l][k];
    }
    for (std::size_t r = 0; r < nw; ++r) {
      const auto rr = static_cast<Eigen::Index>(r);
      const std::size_t k = spline_.bins[r];
      const Complex p = parts.phase[k];
      Complex inner{};
      for (std::size_t l = 0; l < nm_; ++l) inner += x(idx(l)) * parts.q[l][r];
      for (std::size_t j = 0; j < nb_; ++j)
        inner += x(idx(nm_ + j)) * spline_.matrix(rr, static_cast<Eigen::Index>(j));
      const Complex pi = p * inner;
      jac(rr, 0) = pi.imag() / sigma_eff_;
      jac(rr, 1) = pi.imag() * (static_cast<double>(k) - c0) * dt / sigma_eff_;
      for (std::size_t l = 0; l < nm_; ++l) {
        const double c = x(idx(l));
        if (c == 0.0) continue;
        Complex dg{}, df{};
        for (long j = -h; j <= h; ++j) {
          const long src = static_cast<long>(k) - j;
          if (src < 0 || src >= n) continue;
          dg += s.at(j) * parts.de_gamma[l][static_cast<std::size_t>(src)];
          df += s.at(j) * parts.de_f[l][static_cast<std::size_t>(src)];
        }
        jac(rr, idx(layout_.gamma(l))) = c * (p * dg).real() / sigma_eff_;
        jac(rr, idx(layout_.f(l))) = c * (p * df).real() / sigma_eff_;
      }
      if (layout_.n_shape) {
        Complex sg{};
        for (long j = -h; j <= h; ++j) {
          const long src = static_cast<long>(k) - j;
          if (src >= 0 && src < n) sg += s.at(j) * g[static_cast<std::size_t>(src)];
        }
        for (long j = -h, jj = 0; j <= h; ++j) {
          if (j == 0) continue;
          const long src = static_cast<long>(k) - j;
          const Complex gj = (src >= 0 && src < n) ? g[static_cast<std::size_t>(src)] : Complex{};
          jac(rr, idx(layout_.shape(static_cast<std::size_t>(jj)))) =
              (p * (s.at(j) * (gj - sg))).real() / sigma_eff_;
          ++jj;
        }
      }
    }
    Eigen::Index row = static_cast<Eigen::Index>(nw) + d2h_.rows();
    for (std::size_t l = 0; l < nm_; ++l) jac(row++, idx(layout_.gamma(l))) = 1.0 / cfg_.sigma_gamma;
    for (std::size_t l = 0; l < nm_; ++l) jac(row++, idx(layout_.f(l))) = 1.0 / cfg_.sigma_f;
    if (layout_.n_shape) {
      // dS_i/du_j = S_i (delta_ij - S_j)
      const std::size_t k = 2 * hw_ + 1;
      Eigen::MatrixXd ds = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k),
                                                 static_cast<Eigen::Index>(layout_.n_shape));
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0, jj = 0; j < k; ++j) {
          if (j == hw_) continue;
          ds(idx(i), idx(jj)) = s.coeffs[i] * ((i == j ? 1.0 : 0.0) - s.coeffs[j]);
          ++jj;
        }
      const Eigen::MatrixXd block = cfg_.alpha_S * d2s_ * ds;
      for (Eigen::Index i = 0; i < block.rows(); ++i)
        for (std::size_t jj = 0; jj < layout_.n_shape; ++jj)
          jac(row + i, idx(layout_.shape(jj))) = block(i, idx(jj));
    }
    return jac;
  }

  /// Linearized model for the Cramér-Rao bound: columns [C, H, phi0, phi1, gamma, f].
  FisherState fisher_state(const Eigen::VectorXd& theta, const Eigen::VectorXd& x) const {
    const Eigen::MatrixXd a = design_from(model_parts(theta, false));
    const Eigen::MatrixXd jt = jacobian(theta, x);
    const auto nw = static_cast<Eigen::Index>(spline_.bins.size());
    const auto nlin = static_cast<Eigen::Index>(n_linear());
    const auto nnl = static_cast<Eigen::Index>(2 + 2 * nm_);
    FisherState st;
    st.data_jacobian.resize(nw, nlin + nnl);
    st.data_jacobian.leftCols(nlin) = a * sigma_eff_;
    st.data_jacobian.rightCols(nnl) = jt.topLeftCorner(nw, nnl) * sigma_eff_;
    st.noise_scaled = Eigen::MatrixXd::Zero(d2h_.rows(), nlin + nnl);
    st.noise_scaled.block(0, static_cast<Eigen::Index>(nm_), d2h_.rows(), d2h_.cols()) =
        cfg_.alpha_B * d2h_;
    st.prior = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(2 * nm_), nlin + nnl);
    for (std::size_t l = 0; l < nm_; ++l) {
      st.prior(idx(l), nlin + idx(layout_.gamma(l))) = 1.0 / cfg_.sigma_gamma;
      st.prior(idx(nm_ + l), nlin + idx(layout_.f(l))) = 1.0 / cfg_.sigma_f;
    }
    for (std::size_t l = 0; l < nm_; ++l) {
      st.conc_columns.push_back(idx(l));
      st.conc.push_back(x(idx(l)));
    }
    return st;
  }

  struct Parts {
    Lineshape shape;
    ComplexVec phase;                 // full axis
    std::vector<ComplexVec> e;        // M_l(gamma_l, f_l), full axis
    std::vector<ComplexVec> q;        // S * M_l at window bins
    std::vector<ComplexVec> de_gamma;  // only with derivatives
    std::vector<ComplexVec> de_f;
  };

  Parts model_parts(const Eigen::VectorXd& theta, bool with_derivatives) const {
    Parts p;
    p.shape = lineshape(theta);
    p.phase = phase_ramp(theta(0), theta(1), acq_);
    const long h = static_cast<long>(hw_);
    const long n = static_cast<long>(y_.size());
    for (std::size_t l = 0; l < nm_; ++l) {
      const double g = theta(idx(layout_.gamma(l)));
      const double f = theta(idx(layout_.f(l)));
      if (with_derivatives) {
        auto d = apply_imperfections_with_derivatives(basis_.entries[l].m, g, f, acq_);
        p.e.push_back(std::move(d.value));
        p.de_gamma.push_back(std::move(d.d_gamma));
        p.de_f.push_back(std::move(d.d_f));
      } else {
        p.e.push_back(apply_imperfections(basis_.entries[l].m, g, f, acq_));
      }
      ComplexVec q(spline_.bins.size());
      for (std::size_t r = 0; r < q.size(); ++r) {
        const long k = static_cast<long>(spline_.bins[r]);
        Complex acc{};
        for (long j = -h; j <= h; ++j)
          if (k - j >= 0 && k - j < n) acc += p.shape.at(j) * p.e[l][static_cast<std::size_t>(k - j)];
        q[r] = acc;
      }
      p.q.push_back(std::move(q));
    }
    return p;
  }

  Eigen::MatrixXd design_from(const Parts& parts) const {
    const auto nw = static_cast<Eigen::Index>(spline_.bins.size());
    Eigen::MatrixXd a(nw, static_cast<Eigen::Index>(n_linear()));
    for (Eigen::Index r = 0; r < nw; ++r) {
      const Complex p = parts.phase[spline_.bins[static_cast<std::size_t>(r)]];
      for (std::size_t l = 0; l < nm_; ++l)
        a(r, idx(l)) = (p * parts.q[l][static_cast<std::size_t>(r)]).real() / sigma_eff_;
      for (std::size_t j = 0; j < nb_; ++j)
        a(r, idx(nm_ + j)) = p.real() * spline_.matrix(r, idx(j)) / sigma_eff_;
    }
    return a;
  }

  Eigen::VectorXd solve_linear_from(const Eigen::MatrixXd& a) const {
    Eigen::MatrixXd g = a.transpose() * a;
    const double w = cfg_.alpha_B / sigma_eff_;
    g.bottomRightCorner(idx(nb_), idx(nb_)) += w * w * d2h_.transpose() * d2h_;
    const Eigen::VectorXd c = a.transpose() * yw_;
    std::vector<bool> nonneg(n_linear(), false);
    for (std::size_t l = 0; l < nm_; ++l) nonneg[l] = true;
    return numeric::nnls_gram(g, c, nonneg).x;
  }

  Eigen::VectorXd residual_from(const Eigen::VectorXd& theta, const Eigen::MatrixXd& a,
                                const Eigen::VectorXd& x) const {
    Eigen::VectorXd r(static_cast<Eigen::Index>(n_residuals()));
    const auto nw = a.rows();
    r.head(nw) = a * x - yw_;
    Eigen::Index row = nw;
    r.segment(row, d2h_.rows()) = (cfg_.alpha_B / sigma_eff_) * (d2h_ * x.tail(idx(nb_)));
    row += d2h_.rows();
    for (std::size_t l = 0; l < nm_; ++l)
      r(row++) = (theta(idx(layout_.gamma(l))) - cfg_.gamma0) / cfg_.sigma_gamma;
    for (std::size_t l = 0; l < nm_; ++l) r(row++) = theta(idx(layout_.f(l))) / cfg_.sigma_f;
    if (cfg_.fit_lineshape) {
      const Lineshape s = lineshape(theta);
      const Eigen::Map<const Eigen::VectorXd> sv(s.coeffs.data(), idx(s.coeffs.size()));
      r.segment(row, d2s_.rows()) = cfg_.alpha_S * (d2s_ * sv);
    }
    return r;
  }

  static Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

 private:
  static constexpr double kShapeStart = -8.0;

  const BasisSet& basis_;
  FitConfig cfg_;
  AcquisitionParams acq_;
  SplineDesign spline_;
  ComplexVec y_;
  Eigen::VectorXd yw_;
  double sigma_ = 0.0, sigma_eff_ = 0.0;
  std::size_t nm_ = 0, nb_ = 0, hw_ = 0;
  ThetaLayout layout_{0, 0};
  Eigen::MatrixXd d2h_, d2s_;
};

/// Everything the fit produces beyond the exported result.
struct FitReport {
  QuantResult result;
  LcmParams params;
  FisherState fisher;
  double noise_sigma = 0.0;
  int iterations = 0;
};

namespace detail {

inline std::vector<std::string> collinear_entries(const Eigen::MatrixXd& design, std::size_t nm,
                                                  const BasisSet& basis, double threshold) {
  std::vector<bool> flag(nm, false);
  for (std::size_t a = 0; a < nm; ++a)
    for (std::size_t b = a + 1; b < nm; ++b) {
      const Eigen::VectorXd u = design.col(LcmProblem::idx(a));
      const Eigen::VectorXd v = design.col(LcmProblem::idx(b));
      const Eigen::VectorXd uc = u.array() - u.mean();
      const Eigen::VectorXd vc = v.array() - v.mean();
      const double den = uc.norm() * vc.norm();
      if (den > 0.0 && std::abs(uc.dot(vc)) / den > threshold) flag[a] = flag[b] = true;
    }
  std::vector<std::string> out;
  for (std::size_t l = 0; l < nm; ++l)
    if (flag[l]) out.push_back(basis.entries[l].name);
  return out;
}

}  // namespace detail

/// Full fit with diagnostics.
inline FitReport fit_detailed(const Spectrum& spectrum, const BasisSet& basis,
                              const FitConfig& cfg = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const LcmProblem prob(spectrum, basis, cfg);
  const auto& lay = prob.layout();
  Eigen::VectorXd lo, hi;
  prob.lower_upper(lo, hi);
  auto clamp = [&](Eigen::VectorXd t) { return Eigen::VectorXd(t.cwiseMax(lo).cwiseMin(hi)); };

  struct Point {
    Eigen::VectorXd theta, x;
    double obj;
  };
  auto evaluate = [&](const Eigen::VectorXd& theta) {
    const Eigen::MatrixXd a = prob.design_from(prob.model_parts(theta, false));
    const Eigen::VectorXd x = prob.solve_linear_from(a);
    return Point{theta, x, prob.residual_from(theta, a, x).squaredNorm()};
  };

  // Coarse zero-order phase search for the starting point.
  Point cur = evaluate(prob.initial_theta());
  for (double ph = -cfg.phi0_bound; ph <= cfg.phi0_bound + 1e-12; ph += cfg.phi0_grid_step) {
    Eigen::VectorXd t = prob.initial_theta();
    t(0) = std::clamp(ph, -cfg.phi0_bound, cfg.phi0_bound);
    Point p = evaluate(t);
    if (p.obj < cur.obj) cur = std::move(p);
  }

  FitReport rep;
  QuantResult& res = rep.result;
  res.objective_trace.push_back(cur.obj);
  double lambda = 1e-2;
  bool converged = false;
  int it = 0;
  for (; it < cfg.max_outer_iters; ++it) {
    const Eigen::MatrixXd j = prob.jacobian(cur.theta, cur.x);
    const Eigen::VectorXd r = prob.residual(cur.theta, cur.x);
    const Eigen::MatrixXd jtj = j.transpose() * j;
    const Eigen::VectorXd g = j.transpose() * r;
    Eigen::VectorXd diag = jtj.diagonal();
    const double floor = 1e-12 * std::max(diag.maxCoeff(), 1e-300);
    diag = diag.cwiseMax(floor);
    Eigen::MatrixXd lhs = jtj;
    lhs.diagonal() += lambda * diag;
    const Eigen::VectorXd step = lhs.ldlt().solve(-g);
    Point trial = evaluate(clamp(cur.theta + step));
    if (std::isfinite(trial.obj) && trial.obj < cur.obj) {
      const double rel = (cur.obj - trial.obj) / std::max(cur.obj, 1e-300);
      cur = std::move(trial);
      res.objective_trace.push_back(cur.obj);
      lambda = std::max(lambda / 3.0, 1e-10);
      if (rel < cfg.tol) {
        converged = true;
        ++it;
        break;
      }
    } else {
      lambda *= 4.0;
      if (lambda > 1e10) {
        converged = true;  // no descent direction left
        ++it;
        break;
      }
    }
  }
  rep.iterations = it;

  const LcmParams p = prob.params(cur.theta, cur.x);
  rep.params = p;
  rep.noise_sigma = prob.sigma();
  rep.fisher = prob.fisher_state(cur.theta, cur.x);
  const CrlbResult crlb = crlb_percent(rep.fisher, prob.sigma());

  const std::size_t n = spectrum.fid.size();
  const ComplexVec& y = prob.data_spectrum();
  const ComplexVec ph = phase_ramp(p.phi0, p.phi1, spectrum.acq);
  res.method = QuantMethod::lcm;
  res.metabolites = basis.names();
  res.conc = p.C;
  res.absolute = true;
  res.ratio_to_tCr = ratios_to_tcr(res.metabolites, res.conc);
  res.sd_percent = crlb.sd_percent;
  res.ppm = ppm_axis(spectrum.acq, cfg.reference_ppm);
  res.input.resize(n);
  res.fitted.assign(n, 0.0);
  res.baseline.assign(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) res.input[k] = y[k].real();
  for (std::size_t l = 0; l < basis.size(); ++l) {
    const ComplexVec e = apply_imperfections(basis.entries[l].m, p.gamma[l], p.f[l], spectrum.acq);
    const ComplexVec q = lineshape_convolve(e, p.S);
    ComponentFit comp{basis.entries[l].name, RealVec(n)};
    for (std::size_t k = 0; k < n; ++k) {
      comp.spectrum[k] = (ph[k] * p.C[l] * q[k]).real();
      res.fitted[k] += comp.spectrum[k];
    }
    res.per_metabolite_fit.push_back(std::move(comp));
  }
  const auto& sp = prob.spline();
  for (std::size_t r = 0; r < sp.bins.size(); ++r) {
    double b = 0.0;
    for (std::size_t j = 0; j < p.H.size(); ++j)
      b += p.H[j] * sp.matrix(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
    res.baseline[sp.bins[r]] = ph[sp.bins[r]].real() * b;
    res.fitted[sp.bins[r]] += res.baseline[sp.bins[r]];
  }
  res.residual.resize(n);
  for (std::size_t k = 0; k < n; ++k) res.residual[k] = res.input[k] - res.fitted[k];
  res.objective_trace.shrink_to_fit();
  res.converged = converged;
  if (!converged)
    res.warnings.push_back("fit did not converge within " + std::to_string(cfg.max_outer_iters) +
                           " outer iterations");
  if (!(prob.sigma() > 0.0)) res.warnings.push_back("noise window has zero variance; noise-free data assumed");
  if (crlb.any_degenerate) res.warnings.push_back("singular Fisher information; affected %SD set to 999");
  res.collinear = detail::collinear_entries(prob.design_from(prob.model_parts(cur.theta, false)),
                                            basis.size(), basis, cfg.collinear_threshold);
  if (!res.collinear.empty()) res.warnings.push_back("collinear basis entries flagged");
  res.phi0 = p.phi0;
  res.phi1 = p.phi1;
  res.gamma = p.gamma;
  res.shift_hz = p.f;
  res.dataset_id = spectrum.meta.opaque_id;
  res.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

/// Quantifies a spectrum against a basis set.
inline QuantResult fit(const Spectrum& spectrum, const BasisSet& basis, const FitConfig& cfg = {}) {
  return fit_detailed(spectrum, basis, cfg).result;
}

}  // namespace mrsq::lcm
