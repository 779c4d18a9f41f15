#pragma once

#include <Eigen/Dense>
#include <algorithm>

#include "mrsq/signal/types.hpp"

namespace mrsq::lcm {

inline constexpr double kMaxSdPercent = 999.0;
inline constexpr double kAcceptableSdPercent = 20.0;

inline bool sd_acceptable(double sd_percent) { return sd_percent < kAcceptableSdPercent; }

/// Linearized model at the solution, split by how each block scales with the
/// noise level.
struct FisherState {
  Eigen::MatrixXd data_jacobian;  // d Re{model}/d param over the fit window, unscaled
  Eigen::MatrixXd noise_scaled;   // penalty rows measured in noise units (divided by sigma)
  Eigen::MatrixXd prior;          // rows independent of sigma
  std::vector<Eigen::Index> conc_columns;
  RealVec conc;
};

struct CrlbResult {
  RealVec sd_percent;
  std::vector<bool> degenerate;
  bool any_degenerate = false;
};

/// %SD_l = 100 sqrt([F^-1]_ll) / C_l with F = (J^T J + N^T N)/sigma^2 + P^T P,
/// clamped to [0, 999]. Metabolites touched by a null direction of F get 999.
inline CrlbResult crlb_percent(const FisherState& st, double sigma) {
  const std::size_t nc = st.conc.size();
  if (st.conc_columns.size() != nc) throw ArgumentError("crlb: conc/column count mismatch");
  CrlbResult out{RealVec(nc, 0.0), std::vector<bool>(nc, false), false};
  auto clamp_sd = [](double v) { return std::clamp(v, 0.0, kMaxSdPercent); };
  if (sigma < 0.0) throw ArgumentError("crlb: negative sigma");
  if (sigma == 0.0) {
    for (std::size_t l = 0; l < nc; ++l) out.sd_percent[l] = st.conc[l] > 0.0 ? 0.0 : kMaxSdPercent;
    return out;
  }
  const Eigen::Index p = st.data_jacobian.cols();
  Eigen::MatrixXd fisher = st.data_jacobian.transpose() * st.data_jacobian;
  if (st.noise_scaled.size()) fisher += st.noise_scaled.transpose() * st.noise_scaled;
  fisher /= sigma * sigma;
  if (st.prior.size()) fisher += st.prior.transpose() * st.prior;
  if (fisher.rows() != p) throw ArgumentError("crlb: inconsistent Fisher blocks");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fisher);
  const Eigen::VectorXd ev = es.eigenvalues();
  const double thresh = 1e-12 * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  Eigen::VectorXd inv_ev = Eigen::VectorXd::Zero(p);
  for (Eigen::Index i = 0; i < p; ++i) inv_ev(i) = ev(i) > thresh ? 1.0 / ev(i) : 0.0;
  const Eigen::MatrixXd& v = es.eigenvectors();
  for (std::size_t l = 0; l < nc; ++l) {
    const Eigen::Index col = st.conc_columns[l];
    bool null_hit = false;
    for (Eigen::Index i = 0; i < p; ++i)
      if (ev(i) <= thresh && std::abs(v(col, i)) > 1e-6) null_hit = true;
    if (null_hit) {
      out.sd_percent[l] = kMaxSdPercent;
      out.degenerate[l] = true;
      out.any_degenerate = true;
      continue;
    }
    const double var = (v.row(col).array().square() * inv_ev.transpose().array()).sum();
    out.sd_percent[l] = st.conc[l] > 0.0 ? clamp_sd(100.0 * std::sqrt(var) / st.conc[l])
                                         : kMaxSdPercent;
  }
  return out;
}

}  // namespace mrsq::lcm
