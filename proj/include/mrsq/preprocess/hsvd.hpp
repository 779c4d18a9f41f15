#pragma once

// Hankel-SVD decomposition of a FID into damped complex exponentials.

#include <Eigen/Dense>
#include <algorithm>
#include <random>

#include "mrsq/signal/fft.hpp"

namespace mrsq::preprocess {

struct HsvdConfig {
  std::size_t rank = 25;
  std::size_t hankel_rows = 0;  // 0 = N/2
  std::size_t oversample = 10;
  std::size_t power_iterations = 3;
  std::uint64_t seed = 0x5eed;
};

struct Mode {
  double frequency;  // Hz
  double damping;    // s^-1
  Complex amplitude;
  Complex pole;      // exp[(-damping + i 2 pi frequency) dt]
};

namespace detail {

inline std::size_t next_pow2(std::size_t n) { return std::bit_ceil(n); }

/// Fast products with the L x M Hankel matrix H[i][j] = x[i + j] via FFT correlation.
class HankelOperator {
 public:
  HankelOperator(std::span<const Complex> x, std::size_t rows)
      : x_(x.begin(), x.end()), rows_(rows), cols_(x.size() - rows + 1),
        nfft_(next_pow2(x.size() + std::max(rows, x.size() - rows + 1))) {
    xf_.assign(nfft_, Complex{});
    std::copy(x_.begin(), x_.end(), xf_.begin());
    mrsq::detail::fft_pow2(xf_, -1);
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  /// H * v, v of length cols.
  Eigen::VectorXcd apply(const Eigen::VectorXcd& v) const { return correlate(v, rows_, cols_); }

  /// H^H * u, u of length rows.
  Eigen::VectorXcd apply_adjoint(const Eigen::VectorXcd& u) const {
    return correlate(u.conjugate(), cols_, rows_).conjugate();
  }

 private:
  // out_i = sum_j x[i + j] v_j for i < out_len, j < v_len.
  Eigen::VectorXcd correlate(const Eigen::VectorXcd& v, std::size_t out_len,
                             std::size_t v_len) const {
    ComplexVec w(nfft_);
    for (std::size_t j = 0; j < v_len; ++j) w[j] = v(static_cast<Eigen::Index>(v_len - 1 - j));
    mrsq::detail::fft_pow2(w, -1);
    for (std::size_t k = 0; k < nfft_; ++k) w[k] *= xf_[k];
    mrsq::detail::fft_pow2(w, +1);
    Eigen::VectorXcd out(static_cast<Eigen::Index>(out_len));
    const double scale = 1.0 / static_cast<double>(nfft_);
    for (std::size_t i = 0; i < out_len; ++i)
      out(static_cast<Eigen::Index>(i)) = w[i + v_len - 1] * scale;
    return out;
  }

  ComplexVec x_;
  std::size_t rows_, cols_, nfft_;
  ComplexVec xf_;
};

inline Eigen::MatrixXcd orthonormalize(const Eigen::MatrixXcd& y) {
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(y);
  return qr.householderQ() * Eigen::MatrixXcd::Identity(y.rows(), y.cols());
}

/// Leading `rank` left singular vectors of the Hankel matrix (randomized range
/// finder with power iterations; dense SVD for small problems).
inline Eigen::MatrixXcd signal_subspace(const HankelOperator& h, std::span<const Complex> x,
                                        const HsvdConfig& cfg) {
  const auto L = static_cast<Eigen::Index>(h.rows());
  const auto M = static_cast<Eigen::Index>(h.cols());
  const auto K = static_cast<Eigen::Index>(cfg.rank);
  if (L * M <= 128 * 128) {
    Eigen::MatrixXcd H(L, M);
    for (Eigen::Index i = 0; i < L; ++i)
      for (Eigen::Index j = 0; j < M; ++j) H(i, j) = x[static_cast<std::size_t>(i + j)];
    Eigen::BDCSVD<Eigen::MatrixXcd> svd(H, Eigen::ComputeThinU);
    return svd.matrixU().leftCols(K);
  }
  const Eigen::Index k = std::min<Eigen::Index>(K + static_cast<Eigen::Index>(cfg.oversample),
                                                std::min(L, M));
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> nd;
  Eigen::MatrixXcd y(L, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::VectorXcd omega(M);
    for (Eigen::Index j = 0; j < M; ++j) omega(j) = {nd(rng), nd(rng)};
    y.col(c) = h.apply(omega);
  }
  Eigen::MatrixXcd q = orthonormalize(y);
  for (std::size_t it = 0; it < cfg.power_iterations; ++it) {
    Eigen::MatrixXcd z(M, k);
    for (Eigen::Index c = 0; c < k; ++c) z.col(c) = h.apply_adjoint(q.col(c));
    z = orthonormalize(z);
    for (Eigen::Index c = 0; c < k; ++c) y.col(c) = h.apply(z.col(c));
    q = orthonormalize(y);
  }
  // B^H = H^H Q  (M x k); left singular vectors of B are right singular vectors of B^H.
  Eigen::MatrixXcd bh(M, k);
  for (Eigen::Index c = 0; c < k; ++c) bh.col(c) = h.apply_adjoint(q.col(c));
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(bh, Eigen::ComputeThinV);
  return q * svd.matrixV().leftCols(K);
}

}  // namespace detail

inline void validate(const HsvdConfig& cfg, std::size_t n) {
  const std::size_t rows = cfg.hankel_rows ? cfg.hankel_rows : n / 2;
  if (cfg.rank < 1) throw ConfigError("rank must be at least 1");
  if (rows >= n) throw ConfigError("hankel_rows must be smaller than the signal length");
  if (cfg.rank >= rows) throw ConfigError("rank must be smaller than hankel_rows");
  if (cfg.rank > n - rows + 1) throw ConfigError("rank exceeds the Hankel column count");
}

/// Least-squares amplitudes of the given poles for signal x.
inline Eigen::VectorXcd fit_amplitudes(std::span<const Complex> x, std::span<const Complex> poles) {
  const auto n = static_cast<Eigen::Index>(x.size());
  const auto k = static_cast<Eigen::Index>(poles.size());
  Eigen::MatrixXcd v(n, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    Complex p{1.0, 0.0};
    for (Eigen::Index r = 0; r < n; ++r) {
      v(r, c) = p;
      p *= poles[static_cast<std::size_t>(c)];
    }
  }
  Eigen::VectorXcd rhs(n);
  for (Eigen::Index r = 0; r < n; ++r) rhs(r) = x[static_cast<std::size_t>(r)];
  return v.colPivHouseholderQr().solve(rhs);
}

/// Decomposes `fid` into `cfg.rank` exponential modes, sorted by frequency.
inline std::vector<Mode> hsvd_components(std::span<const Complex> fid, double dwell,
                                         const HsvdConfig& cfg = {}) {
  if (fid.size() < 4) throw ArgumentError("HSVD needs at least 4 points");
  validate(cfg, fid.size());
  if (std::all_of(fid.begin(), fid.end(), [](Complex z) { return z == Complex{}; }))
    throw DegenerateError("HSVD of an all-zero signal");
  const std::size_t rows = cfg.hankel_rows ? cfg.hankel_rows : fid.size() / 2;
  const detail::HankelOperator h(fid, rows);
  const Eigen::MatrixXcd u = detail::signal_subspace(h, fid, cfg);
  const auto L = u.rows();
  const Eigen::MatrixXcd up = u.topRows(L - 1);
  const Eigen::MatrixXcd down = u.bottomRows(L - 1);
  const Eigen::MatrixXcd z = up.colPivHouseholderQr().solve(down);
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(z, false);
  std::vector<Complex> poles(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) poles[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
  std::sort(poles.begin(), poles.end(),
            [](Complex a, Complex b) { return std::arg(a) < std::arg(b); });
  const Eigen::VectorXcd amp = fit_amplitudes(fid, poles);
  std::vector<Mode> modes;
  for (std::size_t i = 0; i < poles.size(); ++i) {
    const Complex p = poles[i];
    modes.push_back({std::arg(p) / (2.0 * std::numbers::pi * dwell), -std::log(std::abs(p)) / dwell,
                     amp(static_cast<Eigen::Index>(i)), p});
  }
  return modes;
}

/// Sum of modes sampled at n = 0..n_points-1.
inline ComplexVec reconstruct(std::span<const Mode> modes, std::size_t n_points) {
  ComplexVec out(n_points);
  for (const auto& m : modes) {
    Complex p = m.amplitude;
    for (std::size_t n = 0; n < n_points; ++n) {
      out[n] += p;
      p *= m.pole;
    }
  }
  return out;
}

}  // namespace mrsq::preprocess
