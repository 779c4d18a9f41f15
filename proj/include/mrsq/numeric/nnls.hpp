#pragma once

// Lawson-Hanson active-set least squares where a subset of the variables is
// constrained to be non-negative and the rest are free.

#include <Eigen/Dense>
#include <vector>

#include "mrsq/error.hpp"

namespace mrsq::numeric {

struct NnlsResult {
  Eigen::VectorXd x;
  int iterations = 0;
  bool converged = true;
};

/// Minimizes x^T G x - 2 c^T x (i.e. ||A x - b||^2 with G = A^T A, c = A^T b)
/// subject to x_i >= 0 wherever `nonneg[i]` is true.
inline NnlsResult nnls_gram(const Eigen::MatrixXd& G, const Eigen::VectorXd& c,
                            const std::vector<bool>& nonneg, int max_iter = 0) {
  const Eigen::Index n = G.rows();
  if (G.cols() != n || c.size() != n || static_cast<Eigen::Index>(nonneg.size()) != n)
    throw ArgumentError("nnls: dimension mismatch");
  if (max_iter <= 0) max_iter = static_cast<int>(10 * n + 50);
  const double tol = 1e-12 * std::max(1.0, G.diagonal().cwiseAbs().maxCoeff());

  std::vector<bool> passive(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) passive[static_cast<std::size_t>(i)] = !nonneg[static_cast<std::size_t>(i)];

  auto solve_passive = [&](Eigen::VectorXd& s) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < n; ++i)
      if (passive[static_cast<std::size_t>(i)]) idx.push_back(i);
    s = Eigen::VectorXd::Zero(n);
    if (idx.empty()) return;
    const auto m = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd gp(m, m);
    Eigen::VectorXd cp(m);
    for (Eigen::Index a = 0; a < m; ++a) {
      cp(a) = c(idx[static_cast<std::size_t>(a)]);
      for (Eigen::Index b = 0; b < m; ++b)
        gp(a, b) = G(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gp);
    Eigen::VectorXd sp;
    if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
        ldlt.vectorD().minCoeff() > 1e-14 * ldlt.vectorD().maxCoeff())
      sp = ldlt.solve(cp);
    else
      sp = gp.completeOrthogonalDecomposition().solve(cp);
    for (Eigen::Index a = 0; a < m; ++a) s(idx[static_cast<std::size_t>(a)]) = sp(a);
  };

  NnlsResult res;
  Eigen::VectorXd x;
  solve_passive(x);
  // Free variables only: done once the constrained ones are all at zero.
  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it + 1;
    const Eigen::VectorXd w = c - G * x;
    Eigen::Index best = -1;
    double wmax = tol;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto u = static_cast<std::size_t>(i);
      if (nonneg[u] && !passive[u] && w(i) > wmax) {
        wmax = w(i);
        best = i;
      }
    }
    if (best < 0) {
      res.x = x;
      return res;
    }
    passive[static_cast<std::size_t>(best)] = true;
    for (int inner = 0; inner < max_iter; ++inner) {
      Eigen::VectorXd s;
      solve_passive(s);
      double alpha = 1.0;
      bool feasible = true;
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto u = static_cast<std::size_t>(i);
        if (nonneg[u] && passive[u] && s(i) <= 0.0) {
          feasible = false;
          const double denom = x(i) - s(i);
          if (denom > 0.0) alpha = std::min(alpha, x(i) / denom);
        }
      }
      if (feasible) {
        x = s;
        break;
      }
      if (!(alpha >= 0.0)) alpha = 0.0;
      x += alpha * (s - x);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto u = static_cast<std::size_t>(i);
        if (nonneg[u] && passive[u] && x(i) <= 1e-14 * std::max(1.0, x.cwiseAbs().maxCoeff())) {
          passive[u] = false;
          x(i) = 0.0;
        }
      }
    }
  }
  res.x = x;
  for (Eigen::Index i = 0; i < n; ++i)
    if (nonneg[static_cast<std::size_t>(i)] && res.x(i) < 0.0) res.x(i) = 0.0;
  res.converged = false;
  return res;
}

/// ||A x - b||^2 with x_i >= 0 where nonneg[i].
inline NnlsResult nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                       const std::vector<bool>& nonneg) {
  return nnls_gram(A.transpose() * A, A.transpose() * b, nonneg);
}

}  // namespace mrsq::numeric
