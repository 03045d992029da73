#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <vector>

#include "cll/core.hpp"

namespace cll {

namespace detail {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Flip each column so its largest-magnitude entry is positive (ties take the
// lowest index); removes the eigenvector sign ambiguity.
inline void fix_signs(Eigen::MatrixXd& V) {
  for (Eigen::Index c = 0; c < V.cols(); ++c) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index r = 0; r < V.rows(); ++r)
      if (std::abs(V(r, c)) > best) {
        best = std::abs(V(r, c));
        arg = r;
      }
    if (V(arg, c) < 0.0) V.col(c) = -V.col(c);
  }
}

// First standard basis vector with a nontrivial residual against the columns
// of V[0..filled), orthonormalized. Exists whenever filled < d.
inline Eigen::VectorXd complete_direction(const Eigen::MatrixXd& V,
                                          Eigen::Index filled) {
  for (Eigen::Index j = 0; j < V.rows(); ++j) {
    Eigen::VectorXd cand = Eigen::VectorXd::Zero(V.rows());
    cand(j) = 1.0;
    for (Eigen::Index c = 0; c < filled; ++c)
      cand -= V.col(c).dot(cand) * V.col(c);
    double nrm = cand.norm();
    if (nrm > 1e-3) return cand / nrm;
  }
  throw NumericError("could not complete an orthonormal basis");
}

}  // namespace detail

// Principal-component embedding: center the columns, then project onto the
// top-e principal directions. Uses the d x d scatter matrix when d <= N and
// the N x N Gram matrix otherwise; directions whose variance vanishes are
// replaced by an orthonormal completion (their coordinates are ~0 anyway).
// The decomposition is exact, so the seed only keys downstream consumers.
inline Matrix pca_embed(const Matrix& X, int e, std::uint64_t seed = 0) {
  (void)seed;
  const auto N = static_cast<Eigen::Index>(X.rows);
  const auto d = static_cast<Eigen::Index>(X.cols);
  if (N < 1 || d < 1) throw DataError("pca_embed: empty input");
  if (e < 1 || e > std::min(N, d))
    throw ConfigError("embed dim " + std::to_string(e) +
                      " outside [1, min(N, d)]");
  for (double v : X.data)
    if (!std::isfinite(v)) throw NumericError("non-finite feature input");

  Eigen::Map<const detail::EMat> Xm(X.data.data(), N, d);
  Eigen::RowVectorXd mean = Xm.colwise().mean();
  detail::EMat Xc = Xm.rowwise() - mean;

  Eigen::MatrixXd V(d, e);
  if (d <= N) {
    Eigen::MatrixXd S = Xc.transpose() * Xc;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    if (es.info() != Eigen::Success)
      throw NumericError("eigendecomposition failed");
    for (int c = 0; c < e; ++c) V.col(c) = es.eigenvectors().col(d - 1 - c);
  } else {
    Eigen::MatrixXd G = Xc * Xc.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    if (es.info() != Eigen::Success)
      throw NumericError("eigendecomposition failed");
    double lmax = std::max(es.eigenvalues()(N - 1), 0.0);
    double lam_tol = std::max(lmax * 1e-10, 1e-30);
    Eigen::Index filled = 0;
    for (int c = 0; c < e; ++c) {
      double lam = es.eigenvalues()(N - 1 - c);
      if (lam > lam_tol) {
        Eigen::VectorXd v = Xc.transpose() * es.eigenvectors().col(N - 1 - c);
        V.col(filled++) = v / v.norm();
      }
    }
    // Rank-deficient tail: pad with directions orthogonal to what we have.
    while (filled < e) {
      V.col(filled) = detail::complete_direction(V, filled);
      ++filled;
    }
  }
  detail::fix_signs(V);

  Matrix out(X.rows, static_cast<std::size_t>(e));
  Eigen::Map<detail::EMat> Em(out.data.data(), N, e);
  Em = Xc * V;
  for (double v : out.data)
    if (!std::isfinite(v)) throw NumericError("non-finite embedding");
  return out;
}

}  // namespace cll
