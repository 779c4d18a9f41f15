#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "mrsq/signal/model.hpp"

namespace mrsq::lcm {

struct PpmWindow {
  double lo = 0.2;
  double hi = 4.2;
};

/// Uniform cubic B-spline basis evaluated at the bins of a ppm window.
struct SplineDesign {
  std::vector<std::size_t> bins;  // spectrum indices, ascending
  Eigen::MatrixXd matrix;         // bins.size() x n_basis
  double spacing = 0.0;           // actual knot spacing (ppm)
  std::size_t intervals = 0;

  std::size_t n_basis() const { return static_cast<std::size_t>(matrix.cols()); }
};

namespace detail {

// Cardinal cubic B-spline supported on [0, 4].
inline double cubic_bspline(double u) {
  if (u < 0.0 || u >= 4.0) return 0.0;
  if (u < 1.0) return u * u * u / 6.0;
  if (u < 2.0) return (-3.0 * u * u * u + 12.0 * u * u - 12.0 * u + 4.0) / 6.0;
  if (u < 3.0) return (3.0 * u * u * u - 24.0 * u * u + 60.0 * u - 44.0) / 6.0;
  const double v = 4.0 - u;
  return v * v * v / 6.0;
}

}  // namespace detail

/// Number of knot intervals covering the window; the spacing is shrunk so the
/// knots fall uniformly on both window edges.
inline std::size_t spline_intervals(const PpmWindow& w, double knot_spacing) {
  const double ratio = (w.hi - w.lo) / knot_spacing;
  return static_cast<std::size_t>(std::max(1.0, std::ceil(ratio - 1e-9)));
}

/// Second-difference operator (rows n-2, cols n).
inline Eigen::MatrixXd second_difference(std::size_t n) {
  if (n < 3) return Eigen::MatrixXd::Zero(0, static_cast<Eigen::Index>(n));
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n - 2),
                                            static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    d(i, i) = 1.0;
    d(i, i + 1) = -2.0;
    d(i, i + 2) = 1.0;
  }
  return d;
}

/// Cubic B-spline design over the bins of `window`; intervals + 3 basis
/// functions, rows summing to one.
inline SplineDesign spline_design(const PpmWindow& window, double knot_spacing,
                                  const AcquisitionParams& acq,
                                  double reference_ppm = kWaterPpm) {
  if (!(knot_spacing > 0.0)) throw ArgumentError("knot spacing must be positive");
  if (!(window.hi > window.lo)) throw ArgumentError("empty fit window");
  if (window.hi - window.lo < 4.0 * knot_spacing - 1e-9)
    throw ArgumentError("fit window is narrower than four knot spacings");
  const RealVec axis = ppm_axis(acq, reference_ppm);
  if (window.lo < axis.back() || window.hi > axis.front())
    throw ArgumentError("fit window extends beyond the ppm axis");
  SplineDesign d;
  d.bins = ppm_window(axis, window.lo, window.hi);
  if (d.bins.size() < 2) throw ArgumentError("fit window covers fewer than two bins");
  d.intervals = spline_intervals(window, knot_spacing);
  d.spacing = (window.hi - window.lo) / static_cast<double>(d.intervals);
  const std::size_t nb = d.intervals + 3;
  d.matrix = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d.bins.size()),
                                   static_cast<Eigen::Index>(nb));
  for (std::size_t r = 0; r < d.bins.size(); ++r) {
    const double t = (axis[d.bins[r]] - window.lo) / d.spacing;
    for (std::size_t j = 0; j < nb; ++j)
      d.matrix(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
          detail::cubic_bspline(t - static_cast<double>(j) + 3.0);
  }
  return d;
}

}  // namespace mrsq::lcm
