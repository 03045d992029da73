#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "cll/cluster.hpp"
#include "cll/embed.hpp"
#include "cll/rng.hpp"
#include "support.hpp"

using namespace cll;

namespace {

Matrix random_matrix(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  Matrix X(n, d);
  for (auto& v : X.data) v = rng.next_normal();
  return X;
}

double pair_dist(const Matrix& A, std::size_t i, std::size_t j) {
  double s = 0.0;
  for (std::size_t k = 0; k < A.cols; ++k) {
    double d = A.at(i, k) - A.at(j, k);
    s += d * d;
  }
  return std::sqrt(s);
}

// Exhaustive optimal 2-clustering cost on a small point set: try every
// nonempty bipartition, score with per-side means.
double brute_force_two_cluster_cost(const Matrix& E) {
  std::size_t n = E.rows;
  REQUIRE(n <= 12);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t mask = 1; mask + 1 < (1u << n); ++mask) {
    if (mask & 1u) continue;  // fix point 0 on side 0: halves the search
    double cost = 0.0;
    for (int side = 0; side < 2; ++side) {
      std::vector<double> mean(E.cols, 0.0);
      std::size_t cnt = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (((mask >> i) & 1u) != static_cast<std::size_t>(side)) continue;
        ++cnt;
        for (std::size_t k = 0; k < E.cols; ++k) mean[k] += E.at(i, k);
      }
      for (auto& v : mean) v /= static_cast<double>(cnt);
      for (std::size_t i = 0; i < n; ++i) {
        if (((mask >> i) & 1u) != static_cast<std::size_t>(side)) continue;
        for (std::size_t k = 0; k < E.cols; ++k) {
          double d = E.at(i, k) - mean[k];
          cost += d * d;
        }
      }
    }
    best = std::min(best, cost);
  }
  return best;
}

}  // namespace

TEST_CASE("identical rows embed to zero on both decomposition paths") {
  for (auto [n, d] : {std::pair<std::size_t, std::size_t>{6, 3}, {3, 9}}) {
    Matrix X(n, d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < d; ++k) X.at(i, k) = 0.25 * double(k) + 1.0;
    auto E = pca_embed(X, static_cast<int>(std::min(n, d)) - 1, 7);
    for (double v : E.data) REQUIRE(std::abs(v) < 1e-9);
  }
}

TEST_CASE("one-component embedding recovers signed axis distances") {
  // points spread along u = (2,1,-2)/3 from an offset center
  double u[3] = {2.0 / 3.0, 1.0 / 3.0, -2.0 / 3.0};
  std::vector<double> t = {-4.0, -2.5, -1.0, 0.0, 0.5, 1.5, 2.0, 3.0, 5.0, 6.0};
  Matrix X(t.size(), 3);
  for (std::size_t i = 0; i < t.size(); ++i)
    for (int k = 0; k < 3; ++k) X.at(i, k) = 10.0 + t[i] * u[k];
  auto E = pca_embed(X, 1, 0);
  double tbar = 0.0;
  for (double v : t) tbar += v;
  tbar /= static_cast<double>(t.size());
  double sign = (E.at(t.size() - 1, 0) > 0) == (t.back() - tbar > 0) ? 1.0 : -1.0;
  for (std::size_t i = 0; i < t.size(); ++i)
    REQUIRE(E.at(i, 0) == Catch::Approx(sign * (t[i] - tbar)).margin(1e-9));
}

TEST_CASE("two-dimensional embedding matches the closed-form eigen oracle") {
  auto X = random_matrix(10, 2, 31);
  X.at(3, 0) += 4.0;  // break symmetry
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    mx += X.at(i, 0);
    my += X.at(i, 1);
  }
  mx /= 10.0;
  my /= 10.0;
  double a = 0.0, b = 0.0, c = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    double xc = X.at(i, 0) - mx, yc = X.at(i, 1) - my;
    a += xc * xc;
    b += xc * yc;
    c += yc * yc;
  }
  double theta = 0.5 * std::atan2(2.0 * b, a - c);
  auto E = pca_embed(X, 1, 0);
  double s = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    double want = (X.at(i, 0) - mx) * std::cos(theta) +
                  (X.at(i, 1) - my) * std::sin(theta);
    if (s == 0.0 && std::abs(want) > 1e-6) s = E.at(i, 0) / want;
  }
  REQUIRE(std::abs(std::abs(s) - 1.0) < 1e-9);
  for (std::size_t i = 0; i < 10; ++i) {
    double want = (X.at(i, 0) - mx) * std::cos(theta) +
                  (X.at(i, 1) - my) * std::sin(theta);
    REQUIRE(E.at(i, 0) == Catch::Approx(s * want).margin(1e-9));
  }
}

TEST_CASE("full-width embedding preserves pairwise distances") {
  auto X = random_matrix(8, 5, 12);
  auto E = pca_embed(X, 5, 0);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = i + 1; j < 8; ++j)
      REQUIRE(pair_dist(E, i, j) ==
              Catch::Approx(pair_dist(X, i, j)).epsilon(1e-6));
}

TEST_CASE("wide-data path preserves distances through basis completion") {
  // N < d forces the Gram route; centering drops rank to N-1 < e, so the
  // last direction comes from completion and must carry ~zero coordinates.
  auto X = random_matrix(4, 10, 5);
  auto E = pca_embed(X, 4, 0);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j)
      REQUIRE(pair_dist(E, i, j) ==
              Catch::Approx(pair_dist(X, i, j)).epsilon(1e-6));
  for (std::size_t i = 0; i < 4; ++i) REQUIRE(std::abs(E.at(i, 3)) < 1e-6);
}

TEST_CASE("embedding columns are mutually orthogonal with sorted variance") {
  auto X = random_matrix(20, 6, 77);
  auto E = pca_embed(X, 4, 0);
  std::vector<double> sq(4, 0.0);
  for (int cI = 0; cI < 4; ++cI)
    for (std::size_t i = 0; i < 20; ++i) sq[cI] += E.at(i, cI) * E.at(i, cI);
  for (int cI = 0; cI + 1 < 4; ++cI) REQUIRE(sq[cI] >= sq[cI + 1] - 1e-9);
  for (int cI = 0; cI < 4; ++cI)
    for (int cJ = cI + 1; cJ < 4; ++cJ) {
      double dot = 0.0;
      for (std::size_t i = 0; i < 20; ++i) dot += E.at(i, cI) * E.at(i, cJ);
      REQUIRE(std::abs(dot) / std::sqrt(sq[cI] * sq[cJ]) < 1e-6);
    }
  // component sign pinned: seed does not enter the exact decomposition
  auto E2 = pca_embed(X, 4, 999);
  REQUIRE(E.data == E2.data);
}

TEST_CASE("embedding rejects bad widths and non-finite input") {
  auto X = random_matrix(5, 3, 1);
  REQUIRE_THROWS_AS(pca_embed(X, 0, 0), ConfigError);
  REQUIRE_THROWS_AS(pca_embed(X, 4, 0), ConfigError);
  X.at(2, 1) = std::numeric_limits<double>::infinity();
  REQUIRE_THROWS_AS(pca_embed(X, 2, 0), NumericError);
}

TEST_CASE("kmeans recovers the exhaustive-optimal two-blob split") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 100);
    Matrix E(12, 2);
    std::vector<int> truth(12);
    for (std::size_t i = 0; i < 12; ++i) {
      truth[i] = i < 6 ? 0 : 1;
      double cx = truth[i] == 0 ? 0.0 : 10.0;
      E.at(i, 0) = cx + rng.next_normal();
      E.at(i, 1) = cx + rng.next_normal();
    }
    auto a = kmeans(E, 2, seed);
    REQUIRE(a.inertia ==
            Catch::Approx(brute_force_two_cluster_cost(E)).epsilon(1e-9));
    for (std::size_t i = 1; i < 12; ++i)
      REQUIRE((a.labels[i] == a.labels[0]) == (truth[i] == truth[0]));
  }
}

TEST_CASE("kmeans gives zero inertia when every point is its own cluster") {
  auto E = random_matrix(7, 3, 44);
  auto a = kmeans(E, 7, 3);
  REQUIRE(a.inertia == Catch::Approx(0.0).margin(1e-18));
  std::set<int> distinct(a.labels.begin(), a.labels.end());
  REQUIRE(distinct.size() == 7);
}

TEST_CASE("kmeans inertia history never increases") {
  auto E = random_matrix(200, 4, 9);
  auto a = kmeans(E, 8, 17);
  REQUIRE(a.inertia_history.size() >= 2);
  for (std::size_t i = 1; i < a.inertia_history.size(); ++i)
    REQUIRE(a.inertia_history[i] <= a.inertia_history[i - 1] + 1e-9);
  REQUIRE(a.inertia == a.inertia_history.back());
}

TEST_CASE("kmeans assigns every point to its nearest centroid") {
  auto E = random_matrix(150, 3, 21);
  auto a = kmeans(E, 6, 5);
  double recomputed = 0.0;
  for (std::size_t i = 0; i < E.rows; ++i) {
    double own = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      double d = E.at(i, k) - a.centroids.at(a.labels[i], k);
      own += d * d;
    }
    recomputed += own;
    for (int c = 0; c < 6; ++c) {
      double other = 0.0;
      for (std::size_t k = 0; k < 3; ++k) {
        double d = E.at(i, k) - a.centroids.at(c, k);
        other += d * d;
      }
      REQUIRE(own <= other + 1e-12);
    }
  }
  REQUIRE(a.inertia == Catch::Approx(recomputed).epsilon(1e-6));
}

TEST_CASE("kmeans is deterministic and thread-count independent") {
  auto E = random_matrix(300, 5, 2);
  auto a = kmeans(E, 10, 77, 300, 1e-4, 1);
  auto b = kmeans(E, 10, 77, 300, 1e-4, 4);
  REQUIRE(a.labels == b.labels);
  REQUIRE(a.centroids.data == b.centroids.data);
  REQUIRE(a.inertia == b.inertia);
  auto c = kmeans(E, 10, 78);
  REQUIRE(c.labels.size() == a.labels.size());  // different seed still valid
}

TEST_CASE("kmeans survives duplicate-heavy degenerate input") {
  Matrix E(5, 2, 1.5);  // five identical points
  auto a = kmeans(E, 3, 4);
  REQUIRE(a.inertia == Catch::Approx(0.0).margin(1e-18));
  for (int l : a.labels) REQUIRE((l >= 0 && l < 3));
  REQUIRE_THROWS_AS(kmeans(E, 6, 1), DataError);
  REQUIRE_THROWS_AS(kmeans(E, 0, 1), ConfigError);
}

TEST_CASE("purity is 1 on identical partitions and 1/K on one blob") {
  std::vector<int> y = {0, 1, 2, 0, 1, 2};
  REQUIRE(cluster_purity(y, y) == 1.0);
  std::vector<int> ones(30, 0);
  std::vector<int> balanced(30);
  for (int i = 0; i < 30; ++i) balanced[i] = i % 10;
  REQUIRE(cluster_purity(ones, balanced) == Catch::Approx(0.1));
  REQUIRE_THROWS_AS(cluster_purity({0, 1}, {0}), DataError);
}

TEST_CASE("random assignments score near the chance baseline") {
  Rng rng(8);
  std::size_t n = 10000;
  std::vector<int> y(n), cluster(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(i % 10);
    cluster[i] = static_cast<int>(rng.next_below(50));
  }
  double p = cluster_purity(cluster, y);
  REQUIRE(p >= 0.1);
  REQUIRE(p <= 0.15);
}

TEST_CASE("cluster csv round-trips and validates") {
  testsupport::TempDir td;
  std::vector<int> c = {3, 1, 4, 1, 5};
  write_cluster_csv(td.file("c.csv"), c);
  REQUIRE(read_cluster_csv(td.file("c.csv")) == c);
  testsupport::write_text(td.file("bad.csv"), "idx,cluster\n0,1\n");
  REQUIRE_THROWS_AS(read_cluster_csv(td.file("bad.csv")), DataError);
  testsupport::write_text(td.file("gap.csv"), "index,cluster\n0,1\n2,0\n");
  REQUIRE_THROWS_AS(read_cluster_csv(td.file("gap.csv")), DataError);
}
