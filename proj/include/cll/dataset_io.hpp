#pragma once

#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>
#include <vector>

#include "cll/core.hpp"

namespace cll {

// Ordinary (true) labels. K is the number of classes; every id is in [0, K).
struct OrdinaryLabels {
  std::vector<int> y;
  int K = 0;
};

// Complementary labels: each entry names a class the example does NOT
// belong to. Same id range as OrdinaryLabels.
struct ComplementaryLabels {
  std::vector<int> ybar;
  int K = 0;
};

struct Dataset {
  Matrix X;  // rows are examples, values scaled to [0, 1]
  OrdinaryLabels labels;
};

namespace detail {

inline std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t be32(const unsigned char* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

inline std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
         (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

inline void push_le32(std::vector<unsigned char>& v, std::uint32_t x) {
  v.push_back(static_cast<unsigned char>(x));
  v.push_back(static_cast<unsigned char>(x >> 8));
  v.push_back(static_cast<unsigned char>(x >> 16));
  v.push_back(static_cast<unsigned char>(x >> 24));
}

// Write-then-rename so a crashed run never leaves a half-written file.
inline void atomic_write(const std::string& path,
                         const unsigned char* data, std::size_t size) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open file for writing: " + tmp);
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(size));
    if (!out) throw DataError("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("rename failed: " + path + ": " + ec.message());
}

inline void atomic_write(const std::string& path, const std::string& text) {
  atomic_write(path, reinterpret_cast<const unsigned char*>(text.data()),
               text.size());
}

// Shortest round-trip decimal form; locale-free and byte-stable.
inline std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw DataError("malformed " + what + ": '" + s + "'");
  return v;
}

inline long long parse_int(const std::string& s, const std::string& what) {
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw DataError("malformed " + what + ": '" + s + "'");
  return v;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

}  // namespace detail

// IDX image+label pair (MNIST family). Big-endian headers; image magic
// 0x00000803, label magic 0x00000801. Pixels scale to [0, 1] by /255.
// K is inferred as max label + 1.
inline Dataset load_idx(const std::string& images_path,
                        const std::string& labels_path) {
  auto img = detail::slurp(images_path);
  if (img.size() < 16) throw DataError("truncated IDX image file: " + images_path);
  if (detail::be32(img.data()) != 0x00000803u)
    throw DataError("bad IDX image magic in " + images_path);
  std::uint32_t n = detail::be32(img.data() + 4);
  std::uint32_t rows = detail::be32(img.data() + 8);
  std::uint32_t cols = detail::be32(img.data() + 12);
  std::size_t want = 16 + std::size_t(n) * rows * cols;
  if (img.size() != want)
    throw DataError("truncated IDX image file: " + images_path);

  auto lab = detail::slurp(labels_path);
  if (lab.size() < 8) throw DataError("truncated IDX label file: " + labels_path);
  if (detail::be32(lab.data()) != 0x00000801u)
    throw DataError("bad IDX label magic in " + labels_path);
  std::uint32_t nl = detail::be32(lab.data() + 4);
  if (lab.size() != 8 + std::size_t(nl))
    throw DataError("truncated IDX label file: " + labels_path);
  if (n != nl)
    throw DataError("image/label count mismatch: " + std::to_string(n) +
                    " images vs " + std::to_string(nl) + " labels");

  Dataset ds;
  ds.X = Matrix(n, std::size_t(rows) * cols);
  for (std::size_t i = 0; i < ds.X.data.size(); ++i)
    ds.X.data[i] = img[16 + i] / 255.0;
  ds.labels.y.resize(n);
  int maxlab = -1;
  for (std::uint32_t i = 0; i < n; ++i) {
    ds.labels.y[i] = lab[8 + i];
    maxlab = std::max(maxlab, ds.labels.y[i]);
  }
  ds.labels.K = maxlab + 1;
  return ds;
}

// Images alone, ordinary labels left untouched on disk. For pipelines that
// must not read true labels (complementary training without diagnostics).
inline Matrix load_idx_images(const std::string& images_path) {
  auto img = detail::slurp(images_path);
  if (img.size() < 16)
    throw DataError("truncated IDX image file: " + images_path);
  if (detail::be32(img.data()) != 0x00000803u)
    throw DataError("bad IDX image magic in " + images_path);
  std::uint32_t n = detail::be32(img.data() + 4);
  std::uint32_t rows = detail::be32(img.data() + 8);
  std::uint32_t cols = detail::be32(img.data() + 12);
  if (img.size() != 16 + std::size_t(n) * rows * cols)
    throw DataError("truncated IDX image file: " + images_path);
  Matrix X(n, std::size_t(rows) * cols);
  for (std::size_t i = 0; i < X.data.size(); ++i)
    X.data[i] = img[16 + i] / 255.0;
  return X;
}

// CIFAR binary batches. Plain layout: 1 label byte + 3072 pixel bytes per
// record (K = 10). With coarse = true the CIFAR-100 layout is assumed
// (coarse byte, fine byte, 3072 pixels) and the coarse byte is used
// (K = 20). Pixels scale to [0, 1] by /255.
inline Dataset load_cifar_bin(const std::vector<std::string>& paths,
                              bool coarse) {
  const std::size_t pixels = 3072;
  const std::size_t record = pixels + (coarse ? 2 : 1);
  const int K = coarse ? 20 : 10;

  std::size_t total = 0;
  std::vector<std::vector<unsigned char>> blobs;
  for (const auto& p : paths) {
    auto b = detail::slurp(p);
    if (b.empty() || b.size() % record != 0)
      throw DataError("CIFAR record size mismatch in " + p + ": " +
                      std::to_string(b.size()) + " bytes not a multiple of " +
                      std::to_string(record));
    total += b.size() / record;
    blobs.push_back(std::move(b));
  }
  Dataset ds;
  ds.X = Matrix(total, pixels);
  ds.labels.y.resize(total);
  ds.labels.K = K;
  std::size_t row = 0;
  for (const auto& b : blobs) {
    for (std::size_t off = 0; off < b.size(); off += record, ++row) {
      int label = b[off];
      if (label >= K)
        throw DataError("CIFAR label " + std::to_string(label) +
                        " out of range for K=" + std::to_string(K));
      ds.labels.y[row] = label;
      const unsigned char* px = b.data() + off + (coarse ? 2 : 1);
      for (std::size_t j = 0; j < pixels; ++j)
        ds.X.at(row, j) = px[j] / 255.0;
    }
  }
  return ds;
}

// Pixel rows of CIFAR records with the label byte(s) skipped, not surfaced.
inline Matrix load_cifar_features(const std::vector<std::string>& paths,
                                  bool coarse) {
  auto ds = load_cifar_bin(paths, coarse);
  return std::move(ds.X);
}

// Label CSV: one "index,label" line per example, indices contiguous from 0.
// The bound names the exclusive upper limit for the label column (K for
// class labels, kc for cluster ids).
inline void write_labels_csv(const std::string& path,
                             const std::vector<int>& labels) {
  std::string text;
  text.reserve(labels.size() * 8);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    text += std::to_string(i);
    text += ',';
    text += std::to_string(labels[i]);
    text += '\n';
  }
  detail::atomic_write(path, text);
}

inline std::vector<int> read_labels_csv(const std::string& path, int bound) {
  auto lines = detail::read_lines(path);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  std::vector<int> labels(lines.size(), -1);
  std::vector<bool> seen(lines.size(), false);
  for (const auto& line : lines) {
    auto parts = detail::split(line, ',');
    if (parts.size() != 2)
      throw DataError("malformed label CSV line: '" + line + "'");
    long long idx = detail::parse_int(parts[0], "label CSV index");
    long long lab = detail::parse_int(parts[1], "label CSV value");
    if (idx < 0 || idx >= static_cast<long long>(lines.size()))
      throw DataError("label CSV indices not contiguous from 0: index " +
                      std::to_string(idx) + " with " +
                      std::to_string(lines.size()) + " rows");
    if (seen[idx])
      throw DataError("duplicate label CSV index " + std::to_string(idx));
    if (lab < 0 || lab >= bound)
      throw DataError("label " + std::to_string(lab) +
                      " out of range [0," + std::to_string(bound) + ")");
    seen[idx] = true;
    labels[idx] = static_cast<int>(lab);
  }
  return labels;
}

// Index-map CSV: "new,orig" pairs mapping a kept subset back to original
// row positions. new indices contiguous from 0; orig values unbounded.
inline void write_index_csv(const std::string& path,
                            const std::vector<std::int64_t>& orig) {
  std::string text;
  for (std::size_t i = 0; i < orig.size(); ++i) {
    text += std::to_string(i);
    text += ',';
    text += std::to_string(orig[i]);
    text += '\n';
  }
  detail::atomic_write(path, text);
}

inline std::vector<std::int64_t> read_index_csv(const std::string& path) {
  auto lines = detail::read_lines(path);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  std::vector<std::int64_t> orig(lines.size(), -1);
  std::vector<bool> seen(lines.size(), false);
  for (const auto& line : lines) {
    auto parts = detail::split(line, ',');
    if (parts.size() != 2)
      throw DataError("malformed index CSV line: '" + line + "'");
    long long idx = detail::parse_int(parts[0], "index CSV position");
    long long val = detail::parse_int(parts[1], "index CSV value");
    if (idx < 0 || idx >= static_cast<long long>(lines.size()) || seen[idx])
      throw DataError("index CSV positions not contiguous from 0");
    if (val < 0) throw DataError("negative index CSV value");
    seen[idx] = true;
    orig[idx] = val;
  }
  return orig;
}

// Embedding file: 8-byte magic "CLLEMB01", then u32 LE row count N >= 1,
// u32 LE dimension e >= 1, then N*e float32 little-endian values row-major.
inline void write_embeddings(const std::string& path, const Matrix& E) {
  if (E.rows == 0 || E.cols == 0)
    throw DataError("refusing to write empty embedding matrix");
  std::vector<unsigned char> bytes;
  bytes.reserve(16 + E.data.size() * 4);
  const char magic[8] = {'C', 'L', 'L', 'E', 'M', 'B', '0', '1'};
  bytes.insert(bytes.end(), magic, magic + 8);
  detail::push_le32(bytes, static_cast<std::uint32_t>(E.rows));
  detail::push_le32(bytes, static_cast<std::uint32_t>(E.cols));
  for (double v : E.data) {
    float f = static_cast<float>(v);
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    detail::push_le32(bytes, u);
  }
  detail::atomic_write(path, bytes.data(), bytes.size());
}

inline Matrix read_embeddings(const std::string& path) {
  auto bytes = detail::slurp(path);
  if (bytes.size() < 16) throw DataError("truncated embedding file: " + path);
  if (std::memcmp(bytes.data(), "CLLEMB01", 8) != 0)
    throw DataError("bad embedding magic in " + path);
  std::uint32_t n = detail::le32(bytes.data() + 8);
  std::uint32_t e = detail::le32(bytes.data() + 12);
  if (n == 0 || e == 0)
    throw DataError("embedding file declares zero rows or columns: " + path);
  std::size_t want = 16 + std::size_t(n) * e * 4;
  if (bytes.size() != want)
    throw DataError("truncated embedding file: " + path);
  Matrix E(n, e);
  for (std::size_t i = 0; i < E.data.size(); ++i) {
    std::uint32_t u = detail::le32(bytes.data() + 16 + i * 4);
    float f;
    std::memcpy(&f, &u, 4);
    E.data[i] = f;
  }
  return E;
}

// Results CSV: run_id,seed,epoch,split,metric,value with a header row.
// Doubles use shortest round-trip formatting, so write/read is lossless.
struct ResultRow {
  std::string run_id;
  std::uint64_t seed = 0;
  int epoch = 0;
  std::string split;
  std::string metric;
  double value = 0.0;
};

inline void write_results_csv(const std::string& path,
                              const std::vector<ResultRow>& rows) {
  std::string text = "run_id,seed,epoch,split,metric,value\n";
  for (const auto& r : rows) {
    text += r.run_id;
    text += ',';
    text += std::to_string(r.seed);
    text += ',';
    text += std::to_string(r.epoch);
    text += ',';
    text += r.split;
    text += ',';
    text += r.metric;
    text += ',';
    text += detail::fmt_double(r.value);
    text += '\n';
  }
  detail::atomic_write(path, text);
}

inline std::vector<ResultRow> read_results_csv(const std::string& path) {
  auto lines = detail::read_lines(path);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty() || lines[0] != "run_id,seed,epoch,split,metric,value")
    throw DataError("missing results CSV header in " + path);
  std::vector<ResultRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto parts = detail::split(lines[i], ',');
    if (parts.size() != 6)
      throw DataError("malformed results CSV line: '" + lines[i] + "'");
    ResultRow r;
    r.run_id = parts[0];
    r.seed = static_cast<std::uint64_t>(detail::parse_int(parts[1], "seed"));
    r.epoch = static_cast<int>(detail::parse_int(parts[2], "epoch"));
    r.split = parts[3];
    r.metric = parts[4];
    r.value = detail::parse_double(parts[5], "value");
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace cll
