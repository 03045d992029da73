#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace cll {

// Shared vocabulary across modules.
enum class DatasetKind { Idx, Cifar10, Cifar20 };
enum class LossKind { SclNl, SclExp, Fwd };
enum class MixKind { None, Mixup, Icm, Micm, MixupNf, IntraClassNf, ExtraClassNf };
enum class OptKind { Adam, Sgd };

// Which label set the baseline gradient b averages the complementary loss
// over: every label except the true one (default), or every label except
// the given complementary one.
enum class BForm { ExcludeTrue, ExcludeGiven };

// Soft label: non-negative class weights summing to 1.
using SoftLabel = std::vector<double>;

// Error taxonomy mirrored by CLI exit codes: config 2, data 3, numeric 4.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major matrix of doubles. Rows are the sample axis throughout.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) {
    return {data.data() + r * cols, cols};
  }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }

  bool same_shape(const Matrix& o) const {
    return rows == o.rows && cols == o.cols;
  }
};

// Index of the largest value; ties resolve to the lowest index.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

// Runs fn(begin, end) over [0, total) split into contiguous chunks.
// Chunk boundaries depend only on `total` and `chunks`, never on scheduling,
// so any reduction done per chunk and combined in chunk order is
// deterministic for a fixed chunk count.
template <typename Fn>
void parallel_chunks(std::size_t total, int chunks, int threads, Fn&& fn) {
  if (total == 0) return;
  std::size_t nchunks =
      std::min<std::size_t>(std::max(chunks, 1), total);
  auto bound = [&](std::size_t c) { return c * total / nchunks; };
  if (threads <= 1 || nchunks == 1) {
    for (std::size_t c = 0; c < nchunks; ++c) fn(c, bound(c), bound(c + 1));
    return;
  }
  std::vector<std::thread> pool;
  std::size_t nworkers = std::min<std::size_t>(threads, nchunks);
  std::exception_ptr error;
  std::mutex error_mutex;
  for (std::size_t w = 0; w < nworkers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t c = w; c < nchunks; c += nworkers)
          fn(c, bound(c), bound(c + 1));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// Row-parallel map with no reduction: results are identical for any thread
// count because each index is written independently.
template <typename Fn>
void parallel_rows(std::size_t total, int threads, Fn&& fn) {
  parallel_chunks(total, threads <= 1 ? 1 : threads * 4, threads,
                  [&](std::size_t, std::size_t b, std::size_t e) {
                    for (std::size_t i = b; i < e; ++i) fn(i);
                  });
}

}  // namespace cll
