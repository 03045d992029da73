#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "cll/core.hpp"
#include "cll/rng.hpp"

namespace cll {

// Row-stochastic K x K matrix with zero diagonal: P(r, c) is the chance
// that an example of true class r receives complementary label c.
struct TransitionMatrix {
  int K = 0;
  Matrix P;
};

inline void validate_transition(const TransitionMatrix& T) {
  if (T.K <= 2) throw ConfigError("transition matrix needs K > 2");
  if (T.P.rows != static_cast<std::size_t>(T.K) ||
      T.P.cols != static_cast<std::size_t>(T.K))
    throw ConfigError("transition matrix shape does not match K");
  for (int r = 0; r < T.K; ++r) {
    if (T.P.at(r, r) != 0.0)
      throw ConfigError("transition matrix diagonal must be zero");
    double sum = 0.0;
    for (int c = 0; c < T.K; ++c) {
      if (T.P.at(r, c) < 0.0)
        throw ConfigError("transition matrix entries must be non-negative");
      sum += T.P.at(r, c);
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw ConfigError("transition matrix row " + std::to_string(r) +
                        " does not sum to 1");
  }
}

// Uniform complementary noise: every wrong class equally likely.
inline TransitionMatrix uniform_transition(int K) {
  if (K <= 2) throw ConfigError("uniform transition needs K > 2");
  TransitionMatrix T{K, Matrix(K, K, 0.0)};
  double p = 1.0 / (K - 1);
  for (int r = 0; r < K; ++r)
    for (int c = 0; c < K; ++c)
      if (c != r) T.P.at(r, c) = p;
  return T;
}

// Biased complementary noise with geometric decay over circular class
// offsets: offset o = ((c - r) mod K) in 1..K-1 gets unnormalized weight
// q^(o-1), q = rho^(-1/(K-2)). Each row's max/min off-diagonal ratio is
// rho (up to double rounding); rho = 1 reduces to the uniform matrix.
inline TransitionMatrix biased_transition(int K, double rho) {
  if (K <= 2) throw ConfigError("biased transition needs K > 2");
  if (!(rho >= 1.0)) throw ConfigError("transition bias rho must be >= 1");
  TransitionMatrix T{K, Matrix(K, K, 0.0)};
  double q = std::pow(rho, -1.0 / (K - 2));
  std::vector<double> w(K);
  double sum = 0.0;
  for (int o = 1; o < K; ++o) {
    w[o] = std::pow(q, o - 1);
    sum += w[o];
  }
  for (int r = 0; r < K; ++r)
    for (int o = 1; o < K; ++o) T.P.at(r, (r + o) % K) = w[o] / sum;
  return T;
}

// Exponential class-size decay: keep n_k = round(n0 * rho^(-k/(K-1)))
// examples of class k, where n0 is the size of class 0. The head/tail
// ratio n_0/n_(K-1) is rho up to count rounding. Selection within a class
// is a seeded uniform draw without replacement; the result is sorted
// ascending over original positions.
inline std::vector<std::int64_t> longtail_subsample(const std::vector<int>& y,
                                                    int K, double rho,
                                                    std::uint64_t seed) {
  if (K <= 2) throw ConfigError("longtail subsample needs K > 2");
  if (!(rho >= 1.0)) throw ConfigError("imbalance rho must be >= 1");
  std::vector<std::vector<std::int64_t>> by_class(K);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0 || y[i] >= K)
      throw DataError("label " + std::to_string(y[i]) +
                      " out of range for K=" + std::to_string(K));
    by_class[y[i]].push_back(static_cast<std::int64_t>(i));
  }
  double n0 = static_cast<double>(by_class[0].size());
  Rng root(seed);
  std::vector<std::int64_t> kept;
  for (int k = 0; k < K; ++k) {
    auto nk = static_cast<std::int64_t>(
        std::llround(n0 * std::pow(rho, -static_cast<double>(k) / (K - 1))));
    if (nk < 1)
      throw DataError("class " + std::to_string(k) +
                      " would keep zero examples; rho too large for n0=" +
                      std::to_string(static_cast<std::int64_t>(n0)));
    auto& pool = by_class[k];
    if (nk > static_cast<std::int64_t>(pool.size()))
      throw DataError("class " + std::to_string(k) + " has " +
                      std::to_string(pool.size()) + " examples, needs " +
                      std::to_string(nk));
    Rng r = root.fork(static_cast<std::uint64_t>(k));
    // partial Fisher-Yates: first nk entries are the sample
    for (std::int64_t i = 0; i < nk; ++i) {
      std::size_t j = i + r.next_below(pool.size() - i);
      std::swap(pool[i], pool[j]);
    }
    kept.insert(kept.end(), pool.begin(), pool.begin() + nk);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

// Draws one complementary label per example by inverse CDF over row y[i]
// of T. The draw for index i comes from the stream keyed (seed, i), so
// results do not depend on evaluation order and any subset of indices
// reproduces exactly.
inline std::vector<int> sample_complementary(const std::vector<int>& y,
                                             const TransitionMatrix& T,
                                             std::uint64_t seed) {
  validate_transition(T);
  Rng root(seed);
  std::vector<int> ybar(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    int r = y[i];
    if (r < 0 || r >= T.K)
      throw DataError("label " + std::to_string(r) +
                      " out of range for K=" + std::to_string(T.K));
    double u = root.fork(static_cast<std::uint64_t>(i)).next_double();
    double cum = 0.0;
    int pick = -1;
    for (int c = 0; c < T.K; ++c) {
      double p = T.P.at(r, c);
      if (p <= 0.0) continue;
      cum += p;
      pick = c;
      if (u < cum) break;
    }
    if (pick < 0) throw NumericError("transition row has no mass");
    ybar[i] = pick;
  }
  return ybar;
}

// Row-normalized count matrix of observed (y, ybar) pairs. Classes that
// never appear leave an all-zero row.
inline Matrix empirical_transition(const std::vector<int>& y,
                                   const std::vector<int>& ybar, int K) {
  if (y.size() != ybar.size())
    throw DataError("label vectors differ in length");
  Matrix counts(K, K, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0 || y[i] >= K || ybar[i] < 0 || ybar[i] >= K)
      throw DataError("label out of range for K=" + std::to_string(K));
    counts.at(y[i], ybar[i]) += 1.0;
  }
  for (int r = 0; r < K; ++r) {
    double sum = 0.0;
    for (int c = 0; c < K; ++c) sum += counts.at(r, c);
    if (sum > 0.0)
      for (int c = 0; c < K; ++c) counts.at(r, c) /= sum;
  }
  return counts;
}

// Label-generation setups:
//   0: full data, uniform transition
//   1: long-tail subsample (rho_ord), uniform transition
//   2: full data, biased transition (rho_trans)
//   3: long-tail subsample and biased transition combined
struct SetupResult {
  std::vector<std::int64_t> kept;  // original positions, ascending
  TransitionMatrix T;
  std::vector<int> ybar;  // aligned with kept
};

inline SetupResult apply_setup(const std::vector<int>& y, int K, int setup,
                               double rho_ord, double rho_trans,
                               std::uint64_t seed) {
  if (setup < 0 || setup > 3) throw ConfigError("setup must be 0, 1, 2 or 3");
  SetupResult out;
  Rng root(seed);
  if (setup == 1 || setup == 3) {
    out.kept = longtail_subsample(y, K, rho_ord, root.fork(1).next_u64());
  } else {
    out.kept.resize(y.size());
    for (std::size_t i = 0; i < y.size(); ++i)
      out.kept[i] = static_cast<std::int64_t>(i);
  }
  out.T = (setup == 2 || setup == 3) ? biased_transition(K, rho_trans)
                                     : uniform_transition(K);
  std::vector<int> y_kept(out.kept.size());
  for (std::size_t i = 0; i < out.kept.size(); ++i) y_kept[i] = y[out.kept[i]];
  out.ybar = sample_complementary(y_kept, out.T, root.fork(2).next_u64());
  return out;
}

}  // namespace cll
