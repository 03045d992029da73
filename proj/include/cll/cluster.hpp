#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "cll/core.hpp"
#include "cll/dataset_io.hpp"
#include "cll/rng.hpp"

namespace cll {

struct ClusterAssignment {
  std::vector<int> labels;        // cluster id per point, in [0, kc)
  Matrix centroids;               // kc x e
  double inertia = 0.0;           // sum of squared distances to own centroid
  std::vector<double> inertia_history;  // after each assignment pass
  int iterations = 0;
};

namespace detail {

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// k-means++ seeding: first centroid uniform, then each next centroid drawn
// with probability proportional to the squared distance to the nearest
// chosen one. All-duplicate degenerate pools fall back to a uniform draw.
inline std::vector<std::size_t> kmeanspp_indices(const Matrix& E, int kc,
                                                 Rng& rng) {
  const std::size_t N = E.rows;
  std::vector<std::size_t> chosen;
  chosen.push_back(rng.next_below(N));
  std::vector<double> d2(N);
  for (std::size_t i = 0; i < N; ++i)
    d2[i] = sq_dist(E.row(i), E.row(chosen[0]));
  while (chosen.size() < static_cast<std::size_t>(kc)) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick;
    if (total > 0.0) {
      double r = rng.next_double() * total;
      double cum = 0.0;
      pick = N - 1;
      for (std::size_t i = 0; i < N; ++i) {
        cum += d2[i];
        if (r < cum) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.next_below(N);
    }
    chosen.push_back(pick);
    for (std::size_t i = 0; i < N; ++i)
      d2[i] = std::min(d2[i], sq_dist(E.row(i), E.row(pick)));
  }
  return chosen;
}

}  // namespace detail

// Lloyd's algorithm with k-means++ seeding. Assignment ties break toward the
// lower cluster index; clusters that empty out are reseeded with the point
// currently farthest from its centroid. The assignment pass is data-parallel
// over points; reductions run in index order, so the result depends only on
// (E, kc, seed, max_iter, tol), never on the thread count.
inline ClusterAssignment kmeans(const Matrix& E, int kc, std::uint64_t seed,
                                int max_iter = 300, double tol = 1e-4,
                                int threads = 1) {
  const std::size_t N = E.rows;
  const std::size_t e = E.cols;
  if (kc < 1) throw ConfigError("kmeans: kc must be positive");
  if (static_cast<std::size_t>(kc) > N)
    throw DataError("kmeans: kc " + std::to_string(kc) + " exceeds N " +
                    std::to_string(N));
  if (max_iter < 1) throw ConfigError("kmeans: max_iter must be >= 1");
  if (tol < 0.0) throw ConfigError("kmeans: tol must be >= 0");

  Rng rng(seed);
  ClusterAssignment out;
  out.centroids = Matrix(static_cast<std::size_t>(kc), e);
  for (std::size_t c = 0; auto idx : detail::kmeanspp_indices(E, kc, rng)) {
    std::copy(E.row(idx).begin(), E.row(idx).end(),
              out.centroids.row(c).begin());
    ++c;
  }
  out.labels.assign(N, 0);
  std::vector<double> point_d2(N, 0.0);

  for (int it = 0; it < max_iter; ++it) {
    out.iterations = it + 1;
    parallel_rows(N, threads, [&](std::size_t i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < kc; ++c) {
        double d = detail::sq_dist(E.row(i), out.centroids.row(c));
        if (d < best_d) {  // strict: ties keep the lower index
          best_d = d;
          best = c;
        }
      }
      out.labels[i] = best;
      point_d2[i] = best_d;
    });
    double inertia = 0.0;
    for (double v : point_d2) inertia += v;
    out.inertia = inertia;
    out.inertia_history.push_back(inertia);

    // Means of each cluster; empty ones grab the globally farthest point.
    Matrix next(static_cast<std::size_t>(kc), e, 0.0);
    std::vector<std::size_t> count(kc, 0);
    for (std::size_t i = 0; i < N; ++i) {
      auto row = next.row(out.labels[i]);
      auto x = E.row(i);
      for (std::size_t k = 0; k < e; ++k) row[k] += x[k];
      ++count[out.labels[i]];
    }
    std::vector<bool> taken(N, false);
    for (int c = 0; c < kc; ++c) {
      if (count[c] > 0) {
        auto row = next.row(c);
        for (std::size_t k = 0; k < e; ++k)
          row[k] /= static_cast<double>(count[c]);
      } else {
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < N; ++i)
          if (!taken[i] && point_d2[i] > far_d) {
            far_d = point_d2[i];
            far = i;
          }
        taken[far] = true;
        std::copy(E.row(far).begin(), E.row(far).end(), next.row(c).begin());
      }
    }
    double shift = 0.0;
    for (int c = 0; c < kc; ++c)
      shift = std::max(shift,
                       std::sqrt(detail::sq_dist(next.row(c),
                                                 out.centroids.row(c))));
    out.centroids = std::move(next);
    if (shift < tol) break;
  }

  // Final assignment against the converged centroids.
  parallel_rows(N, threads, [&](std::size_t i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < kc; ++c) {
      double d = detail::sq_dist(E.row(i), out.centroids.row(c));
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    out.labels[i] = best;
    point_d2[i] = best_d;
  });
  double inertia = 0.0;
  for (double v : point_d2) inertia += v;
  out.inertia = inertia;
  out.inertia_history.push_back(inertia);
  return out;
}

// Fraction of points covered by each cluster's plurality class.
inline double cluster_purity(const std::vector<int>& cluster,
                             const std::vector<int>& y) {
  if (cluster.size() != y.size())
    throw DataError("cluster_purity: length mismatch");
  if (cluster.empty()) throw DataError("cluster_purity: empty input");
  int kc = 1 + *std::max_element(cluster.begin(), cluster.end());
  int K = 1 + *std::max_element(y.begin(), y.end());
  std::vector<std::size_t> counts(static_cast<std::size_t>(kc) * K, 0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (cluster[i] < 0 || y[i] < 0)
      throw DataError("cluster_purity: negative id");
    ++counts[static_cast<std::size_t>(cluster[i]) * K + y[i]];
  }
  std::size_t hit = 0;
  for (int c = 0; c < kc; ++c)
    hit += *std::max_element(counts.begin() + static_cast<std::size_t>(c) * K,
                             counts.begin() + static_cast<std::size_t>(c + 1) * K);
  return static_cast<double>(hit) / static_cast<double>(y.size());
}

// Cluster CSV: "index,cluster" rows for indices 0..N-1 in order.
inline void write_cluster_csv(const std::string& path,
                              const std::vector<int>& cluster) {
  std::string text = "index,cluster\n";
  for (std::size_t i = 0; i < cluster.size(); ++i) {
    text += std::to_string(i);
    text += ',';
    text += std::to_string(cluster[i]);
    text += '\n';
  }
  detail::atomic_write(path, text);
}

inline std::vector<int> read_cluster_csv(const std::string& path) {
  auto lines = detail::read_lines(path);
  if (lines.empty() || lines[0] != "index,cluster")
    throw DataError("expected 'index,cluster' header in " + path);
  std::vector<int> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto parts = detail::split(lines[i], ',');
    if (parts.size() != 2)
      throw DataError("malformed cluster row in " + path + ": " + lines[i]);
    auto idx = detail::parse_int(parts[0], "cluster index");
    auto c = detail::parse_int(parts[1], "cluster id");
    if (idx != static_cast<long long>(out.size()))
      throw DataError("cluster rows must be contiguous from 0 in " + path);
    if (c < 0) throw DataError("negative cluster id in " + path);
    out.push_back(static_cast<int>(c));
  }
  return out;
}

}  // namespace cll
