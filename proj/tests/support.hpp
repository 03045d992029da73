#pragma once

// Shared helpers for the test suites: temp dirs, little-endian/big-endian
// byte builders for fixture files, Kolmogorov-Smirnov statistics, and
// central-difference gradient oracles.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace testsupport {

class TempDir {
 public:
  TempDir() {
    auto base = std::filesystem::temp_directory_path();
    for (int i = 0; i < 1000; ++i) {
      auto p = base / ("cll-test-" + std::to_string(std::random_device{}()));
      std::error_code ec;
      if (std::filesystem::create_directory(p, ec)) {
        path_ = p;
        return;
      }
    }
    throw std::runtime_error("could not create temp dir");
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const {
    return (path_ / name).string();
  }

 private:
  std::filesystem::path path_;
};

inline void write_bytes(const std::string& path,
                        const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

inline std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline void push_be32(std::vector<unsigned char>& v, std::uint32_t x) {
  v.push_back(static_cast<unsigned char>(x >> 24));
  v.push_back(static_cast<unsigned char>(x >> 16));
  v.push_back(static_cast<unsigned char>(x >> 8));
  v.push_back(static_cast<unsigned char>(x));
}

inline void push_le32(std::vector<unsigned char>& v, std::uint32_t x) {
  v.push_back(static_cast<unsigned char>(x));
  v.push_back(static_cast<unsigned char>(x >> 8));
  v.push_back(static_cast<unsigned char>(x >> 16));
  v.push_back(static_cast<unsigned char>(x >> 24));
}

// IDX image/label fixture builders (big-endian headers).
inline std::vector<unsigned char> idx_images(
    std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
    const std::vector<unsigned char>& pixels) {
  std::vector<unsigned char> v;
  push_be32(v, 0x00000803u);
  push_be32(v, n);
  push_be32(v, rows);
  push_be32(v, cols);
  v.insert(v.end(), pixels.begin(), pixels.end());
  return v;
}

inline std::vector<unsigned char> idx_labels(
    std::uint32_t n, const std::vector<unsigned char>& labels) {
  std::vector<unsigned char> v;
  push_be32(v, 0x00000801u);
  push_be32(v, n);
  v.insert(v.end(), labels.begin(), labels.end());
  return v;
}

// One-sample KS statistic against a reference CDF.
inline double ks_statistic(std::vector<double> sample,
                           const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    double f = cdf(sample[i]);
    d = std::max(d, std::abs((i + 1) / n - f));
    d = std::max(d, std::abs(f - i / n));
  }
  return d;
}

// Two-sample KS statistic.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j])
      ++i;
    else
      ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() -
                             static_cast<double>(j) / b.size()));
  }
  return d;
}

// Central-difference derivative of a scalar function of one coordinate.
inline double central_diff(const std::function<double(double)>& f, double x0,
                           double h = 1e-5) {
  return (f(x0 + h) - f(x0 - h)) / (2.0 * h);
}

inline double rel_err(double got, double want) {
  double denom = std::max(std::abs(want), 1e-12);
  return std::abs(got - want) / denom;
}

// Relative L2 distance between two vectors, normalized by the reference norm.
inline double rel_vec_err(const std::vector<double>& got,
                          const std::vector<double>& want) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    double d = got[i] - want[i];
    num += d * d;
    den += want[i] * want[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

}  // namespace testsupport
