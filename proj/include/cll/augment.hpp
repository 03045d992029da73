#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "cll/core.hpp"
#include "cll/rng.hpp"

namespace cll {

// lambda = g1 / (g1 + g2) with g ~ Gamma(alpha, 1). For very small alpha both
// gammas can underflow to zero; the distributional limit is a fair coin on
// {0, 1}, so that is the fallback.
inline double sample_beta(double alpha, Rng& rng) {
  if (!(alpha > 0.0)) throw ConfigError("beta concentration must be > 0");
  double g1 = rng.next_gamma(alpha);
  double g2 = rng.next_gamma(alpha);
  if (g1 + g2 == 0.0) return (rng.next_u64() & 1) ? 1.0 : 0.0;
  return g1 / (g1 + g2);
}

// Three Gamma(alpha, 1) draws normalized onto the 2-simplex; the underflow
// fallback degenerates to a uniformly chosen vertex.
inline std::array<double, 3> sample_dirichlet3(double alpha, Rng& rng) {
  if (!(alpha > 0.0)) throw ConfigError("dirichlet concentration must be > 0");
  std::array<double, 3> g{rng.next_gamma(alpha), rng.next_gamma(alpha),
                          rng.next_gamma(alpha)};
  double sum = g[0] + g[1] + g[2];
  if (sum == 0.0) {
    std::array<double, 3> v{0.0, 0.0, 0.0};
    v[rng.next_below(3)] = 1.0;
    return v;
  }
  return {g[0] / sum, g[1] / sum, g[2] / sum};
}

struct MixedPair {
  std::vector<double> x;
  SoftLabel y;
};

// x-tilde = lambda*xi + (1-lambda)*xj; the soft label puts lambda on ybar_i
// and 1-lambda on ybar_j, accumulating when they coincide.
inline MixedPair mix_pair(std::span<const double> xi, std::span<const double> xj,
                          int ybar_i, int ybar_j, double lambda, int K) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw ConfigError("mix coefficient outside [0, 1]");
  if (xi.size() != xj.size()) throw DataError("mix_pair: width mismatch");
  if (ybar_i < 0 || ybar_i >= K || ybar_j < 0 || ybar_j >= K)
    throw DataError("mix_pair: label out of range");
  MixedPair out;
  out.x.resize(xi.size());
  for (std::size_t k = 0; k < xi.size(); ++k)
    out.x[k] = lambda * xi[k] + (1.0 - lambda) * xj[k];
  out.y.assign(K, 0.0);
  out.y[ybar_i] += lambda;
  out.y[ybar_j] += 1.0 - lambda;
  return out;
}

// Synthetic rows plus the bookkeeping needed for noise accounting: which
// rows of the real batch each output came from and the coefficients used.
// Pair-based policies leave sources[2] = -1 and lambdas[2] = 0.
struct SyntheticBatch {
  Matrix inputs;
  std::vector<SoftLabel> labels;
  std::vector<std::array<double, 3>> lambdas;
  std::vector<std::array<std::int64_t, 3>> sources;
  int K = 0;
};

// Classic mixup: zip the batch against a seeded random permutation of
// itself (fixed points allowed), one Beta(alpha, alpha) coefficient per
// pair. Row r draws from the stream keyed (seed, 1, r).
inline SyntheticBatch make_batch_mixup(const Matrix& X,
                                       const std::vector<int>& ybar, int K,
                                       double alpha, std::uint64_t seed) {
  if (X.rows != ybar.size()) throw DataError("mixup: row/label mismatch");
  if (X.rows < 2) throw DataError("mixup needs a batch of at least 2");
  Rng root(seed);
  std::vector<std::size_t> perm(X.rows);
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  Rng perm_rng = root.fork(0);
  perm_rng.shuffle(perm);

  SyntheticBatch out;
  out.K = K;
  out.inputs = Matrix(X.rows, X.cols);
  for (std::size_t i = 0; i < X.rows; ++i) {
    std::size_t j = perm[i];
    Rng r = root.fork(1, i);
    double lam = sample_beta(alpha, r);
    auto mixed = mix_pair(X.row(i), X.row(j), ybar[i], ybar[j], lam, K);
    std::copy(mixed.x.begin(), mixed.x.end(), out.inputs.row(i).begin());
    out.labels.push_back(std::move(mixed.y));
    out.lambdas.push_back({lam, 1.0 - lam, 0.0});
    out.sources.push_back({static_cast<std::int64_t>(i),
                           static_cast<std::int64_t>(j), -1});
  }
  return out;
}

namespace detail {

// Indices grouped by cluster id in ascending id order.
inline std::map<int, std::vector<std::size_t>> group_by_cluster(
    const std::vector<int>& cluster) {
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < cluster.size(); ++i) {
    if (cluster[i] < 0) throw DataError("negative cluster id");
    groups[cluster[i]].push_back(i);
  }
  return groups;
}

}  // namespace detail

// Intra-cluster mixup: every cluster with at least two members contributes
// as many outputs as it has members, each mixing a uniformly drawn pair of
// distinct in-cluster rows. Smaller clusters are skipped, so the result can
// be empty. Output t of cluster u draws from the stream keyed (seed, 1, u, t).
inline SyntheticBatch make_batch_icm(const Matrix& X,
                                     const std::vector<int>& ybar,
                                     const std::vector<int>& cluster, int K,
                                     double alpha, std::uint64_t seed) {
  if (X.rows != ybar.size() || X.rows != cluster.size())
    throw DataError("icm: row/label/cluster mismatch");
  Rng root(seed);
  SyntheticBatch out;
  out.K = K;
  std::vector<std::vector<double>> rows;
  for (const auto& [u, members] : detail::group_by_cluster(cluster)) {
    std::size_t m = members.size();
    if (m < 2) continue;
    for (std::size_t t = 0; t < m; ++t) {
      Rng r = root.fork(1, u, t);
      std::size_t a = r.next_below(m);
      std::size_t b = (a + 1 + r.next_below(m - 1)) % m;
      std::size_t i = members[a], j = members[b];
      double lam = sample_beta(alpha, r);
      auto mixed = mix_pair(X.row(i), X.row(j), ybar[i], ybar[j], lam, K);
      rows.push_back(std::move(mixed.x));
      out.labels.push_back(std::move(mixed.y));
      out.lambdas.push_back({lam, 1.0 - lam, 0.0});
      out.sources.push_back({static_cast<std::int64_t>(i),
                             static_cast<std::int64_t>(j), -1});
    }
  }
  out.inputs = Matrix(rows.size(), X.cols);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i].begin(), rows[i].end(), out.inputs.row(i).begin());
  return out;
}

// Inverse-distance label weights for a three-source mixture. A source that
// coincides with x-tilde exactly would blow up 1/d, so its distance is
// replaced by the floor constant C.
inline std::array<double, 3> idw_weights(std::span<const double> xt,
                                         std::span<const double> s1,
                                         std::span<const double> s2,
                                         std::span<const double> s3,
                                         double C) {
  if (!(C > 0.0)) throw ConfigError("idw floor constant must be > 0");
  auto dist = [&](std::span<const double> s) {
    double acc = 0.0;
    for (std::size_t k = 0; k < xt.size(); ++k) {
      double d = xt[k] - s[k];
      acc += d * d;
    }
    double r = std::sqrt(acc);
    return r == 0.0 ? C : r;
  };
  std::array<double, 3> inv{1.0 / dist(s1), 1.0 / dist(s2), 1.0 / dist(s3)};
  double sum = inv[0] + inv[1] + inv[2];
  return {inv[0] / sum, inv[1] / sum, inv[2] / sum};
}

// Three-source intra-cluster mixup: Dirichlet(alpha) coefficients combine
// the inputs, while the soft label weights each source's complementary
// label by inverse distance from the realized x-tilde. Needs clusters of
// size >= 3; smaller ones are skipped.
inline SyntheticBatch make_batch_micm(const Matrix& X,
                                      const std::vector<int>& ybar,
                                      const std::vector<int>& cluster, int K,
                                      double alpha, double C,
                                      std::uint64_t seed) {
  if (X.rows != ybar.size() || X.rows != cluster.size())
    throw DataError("micm: row/label/cluster mismatch");
  Rng root(seed);
  SyntheticBatch out;
  out.K = K;
  std::vector<std::vector<double>> rows;
  for (const auto& [u, members] : detail::group_by_cluster(cluster)) {
    std::size_t m = members.size();
    if (m < 3) continue;
    for (std::size_t t = 0; t < m; ++t) {
      Rng r = root.fork(1, u, t);
      std::size_t a = r.next_below(m);
      std::size_t b = (a + 1 + r.next_below(m - 1)) % m;
      std::size_t pos = r.next_below(m - 2);
      std::size_t c = 0;
      for (std::size_t walk = 0;; ++walk) {
        if (walk == a || walk == b) continue;
        if (pos == 0) {
          c = walk;
          break;
        }
        --pos;
      }
      auto lam = sample_dirichlet3(alpha, r);
      std::size_t i = members[a], j = members[b], k = members[c];
      for (int src : {ybar[i], ybar[j], ybar[k]})
        if (src < 0 || src >= K) throw DataError("micm: label out of range");
      std::vector<double> x(X.cols);
      auto xi = X.row(i), xj = X.row(j), xk = X.row(k);
      for (std::size_t kk = 0; kk < X.cols; ++kk)
        x[kk] = lam[0] * xi[kk] + lam[1] * xj[kk] + lam[2] * xk[kk];
      auto w = idw_weights(x, xi, xj, xk, C);
      SoftLabel y(K, 0.0);
      y[ybar[i]] += w[0];
      y[ybar[j]] += w[1];
      y[ybar[k]] += w[2];
      rows.push_back(std::move(x));
      out.labels.push_back(std::move(y));
      out.lambdas.push_back(lam);
      out.sources.push_back({static_cast<std::int64_t>(i),
                             static_cast<std::int64_t>(j),
                             static_cast<std::int64_t>(k)});
    }
  }
  out.inputs = Matrix(rows.size(), X.cols);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i].begin(), rows[i].end(), out.inputs.row(i).begin());
  return out;
}

namespace detail {

inline void check_sources(const SyntheticBatch& b, const std::vector<int>& y,
                          const std::vector<int>& ybar) {
  if (y.size() != ybar.size())
    throw DataError("ordinary/complementary label length mismatch");
  for (const auto& s : b.sources)
    for (int t = 0; t < 3; ++t) {
      if (t == 2 && s[t] < 0) continue;
      if (s[t] < 0 || static_cast<std::size_t>(s[t]) >= y.size())
        throw DataError("synthetic source index out of range");
    }
}

// True when some source's complementary label hits another source's
// ordinary label — the mixing noise event.
inline bool is_noisy(const std::array<std::int64_t, 3>& s,
                     const std::vector<int>& y, const std::vector<int>& ybar) {
  int n = s[2] < 0 ? 2 : 3;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      if (a != b && ybar[s[a]] == y[s[b]]) return true;
  return false;
}

}  // namespace detail

// Fraction of synthetic rows whose label mixture contaminates: any source
// contributes a complementary label equal to another source's true class.
inline double noise_ratio(const SyntheticBatch& b, const std::vector<int>& y,
                          const std::vector<int>& ybar) {
  detail::check_sources(b, y, ybar);
  if (b.sources.empty()) return 0.0;
  std::size_t noisy = 0;
  for (const auto& s : b.sources) noisy += detail::is_noisy(s, y, ybar);
  return static_cast<double>(noisy) / static_cast<double>(b.sources.size());
}

// Oracle-label filters (proof-of-concept diagnostics; they read the true
// classes of the sources). MixupNf drops noisy rows, IntraClassNf keeps
// same-class sources, ExtraClassNf keeps cross-class rows that are also
// noise-free.
inline SyntheticBatch oracle_filter(const SyntheticBatch& b,
                                    const std::vector<int>& y,
                                    const std::vector<int>& ybar,
                                    MixKind mode) {
  if (mode != MixKind::MixupNf && mode != MixKind::IntraClassNf &&
      mode != MixKind::ExtraClassNf)
    throw ConfigError("oracle_filter: not a filtering policy");
  detail::check_sources(b, y, ybar);
  auto keep = [&](std::size_t row) {
    const auto& s = b.sources[row];
    int n = s[2] < 0 ? 2 : 3;
    bool noise_free = !detail::is_noisy(s, y, ybar);
    bool same_class = true;
    for (int a = 1; a < n; ++a) same_class &= y[s[a]] == y[s[0]];
    switch (mode) {
      case MixKind::MixupNf: return noise_free;
      case MixKind::IntraClassNf: return same_class;
      default: return !same_class && noise_free;  // ExtraClassNf
    }
  };
  SyntheticBatch out;
  out.K = b.K;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < b.sources.size(); ++i)
    if (keep(i)) rows.push_back(i);
  out.inputs = Matrix(rows.size(), b.inputs.cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto src = b.inputs.row(rows[r]);
    std::copy(src.begin(), src.end(), out.inputs.row(r).begin());
    out.labels.push_back(b.labels[rows[r]]);
    out.lambdas.push_back(b.lambdas[rows[r]]);
    out.sources.push_back(b.sources[rows[r]]);
  }
  return out;
}

}  // namespace cll
