#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "cll/core.hpp"
#include "cll/dataset_io.hpp"
#include "cll/losses.hpp"
#include "cll/rng.hpp"

namespace cll {

// Fully connected net: dims = {d, h1, ..., K}, ReLU on hidden layers,
// linear output. Weights are stored fan-in major: W(k, j) multiplies input
// k into output j, so inner loops run contiguously over outputs.
struct MlpModel {
  struct Layer {
    Matrix W;  // (in x out)
    std::vector<double> b;
  };
  std::vector<int> dims;
  std::vector<Layer> layers;
};

// He-style scaled uniform init: W ~ U[-L, L] with L = sqrt(6 / fan_in),
// which has standard deviation sqrt(2 / fan_in). Biases start at zero.
// Layer l draws from the stream keyed (seed, l), entry order row-major.
inline MlpModel init_model(const std::vector<int>& dims, std::uint64_t seed) {
  if (dims.size() < 2) throw ConfigError("model needs at least input and output dims");
  for (int d : dims)
    if (d < 1) throw ConfigError("model dims must be positive");
  MlpModel m;
  m.dims = dims;
  Rng root(seed);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    MlpModel::Layer layer;
    layer.W = Matrix(dims[l], dims[l + 1]);
    layer.b.assign(dims[l + 1], 0.0);
    double limit = std::sqrt(6.0 / dims[l]);
    Rng r = root.fork(l);
    for (auto& w : layer.W.data) w = limit * (2.0 * r.next_double() - 1.0);
    m.layers.push_back(std::move(layer));
  }
  return m;
}

inline std::size_t param_count(const MlpModel& m) {
  std::size_t n = 0;
  for (const auto& l : m.layers) n += l.W.data.size() + l.b.size();
  return n;
}

namespace detail {

// One row through the net; act collects input and post-ReLU activations,
// the returned vector is the logits.
inline std::vector<double> forward_row(const MlpModel& m,
                                       std::span<const double> x,
                                       std::vector<std::vector<double>>* act) {
  std::vector<double> h(x.begin(), x.end());
  if (act) {
    act->clear();
    act->push_back(h);
  }
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& L = m.layers[l];
    std::vector<double> z(L.b);
    for (std::size_t k = 0; k < L.W.rows; ++k) {
      double hk = h[k];
      if (hk == 0.0) continue;
      const double* wrow = L.W.data.data() + k * L.W.cols;
      for (std::size_t j = 0; j < L.W.cols; ++j) z[j] += hk * wrow[j];
    }
    bool last = l + 1 == m.layers.size();
    if (!last)
      for (auto& v : z) v = v > 0.0 ? v : 0.0;
    h = std::move(z);
    if (act && !last) act->push_back(h);
  }
  return h;
}

}  // namespace detail

// Batch logits, one row per example. Row-independent, so any thread count
// produces identical bytes.
inline Matrix forward_logits(const MlpModel& m, const Matrix& X,
                             int threads = 1) {
  if (X.cols != static_cast<std::size_t>(m.dims.front()))
    throw DataError("input width " + std::to_string(X.cols) +
                    " does not match model input dim " +
                    std::to_string(m.dims.front()));
  Matrix Z(X.rows, m.dims.back());
  parallel_rows(X.rows, threads, [&](std::size_t i) {
    auto z = detail::forward_row(m, X.row(i), nullptr);
    std::copy(z.begin(), z.end(), Z.row(i).begin());
  });
  for (double v : Z.data)
    if (!std::isfinite(v)) throw NumericError("non-finite logits");
  return Z;
}

inline std::vector<int> predict(const MlpModel& m, const Matrix& X,
                                int threads = 1) {
  auto Z = forward_logits(m, X, threads);
  std::vector<int> out(X.rows);
  for (std::size_t i = 0; i < X.rows; ++i)
    out[i] = static_cast<int>(argmax(Z.row(i)));
  return out;
}

// Fraction of rows whose argmax prediction matches y. Ties pick the lowest
// class index.
inline double evaluate(const MlpModel& m, const Matrix& X,
                       const std::vector<int>& y, int threads = 1) {
  if (X.rows != y.size()) throw DataError("evaluate: row/label count mismatch");
  if (X.rows == 0) throw DataError("evaluate: empty set");
  auto pred = predict(m, X, threads);
  double hits = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) hits += pred[i] == y[i];
  return hits / static_cast<double>(X.rows);
}

struct Gradients {
  std::vector<Matrix> dW;
  std::vector<std::vector<double>> db;
};

inline Gradients zero_gradients(const MlpModel& m) {
  Gradients g;
  for (const auto& l : m.layers) {
    g.dW.emplace_back(l.W.rows, l.W.cols, 0.0);
    g.db.emplace_back(l.b.size(), 0.0);
  }
  return g;
}

inline void axpy_gradients(Gradients& acc, const Gradients& g) {
  for (std::size_t l = 0; l < acc.dW.size(); ++l) {
    for (std::size_t i = 0; i < acc.dW[l].data.size(); ++i)
      acc.dW[l].data[i] += g.dW[l].data[i];
    for (std::size_t i = 0; i < acc.db[l].size(); ++i)
      acc.db[l][i] += g.db[l][i];
  }
}

// Flattened view in layer order, W row-major then b; matches checkpoint
// parameter order.
inline std::vector<double> flatten(const Gradients& g) {
  std::vector<double> v;
  for (std::size_t l = 0; l < g.dW.size(); ++l) {
    v.insert(v.end(), g.dW[l].data.begin(), g.dW[l].data.end());
    v.insert(v.end(), g.db[l].begin(), g.db[l].end());
  }
  return v;
}

namespace detail {

// Adds the gradient of one row's loss into acc, given dLoss/dlogits and the
// activations recorded by forward_row.
inline void accumulate_row_gradient(const MlpModel& m,
                                    const std::vector<std::vector<double>>& act,
                                    std::vector<double> delta, Gradients& acc) {
  for (std::size_t l = m.layers.size(); l-- > 0;) {
    const auto& W = m.layers[l].W;
    auto& dW = acc.dW[l];
    auto& db = acc.db[l];
    const auto& h = act[l];
    for (std::size_t j = 0; j < db.size(); ++j) db[j] += delta[j];
    for (std::size_t k = 0; k < W.rows; ++k) {
      double hk = h[k];
      if (hk == 0.0) continue;
      double* drow = dW.data.data() + k * dW.cols;
      for (std::size_t j = 0; j < dW.cols; ++j) drow[j] += hk * delta[j];
    }
    if (l == 0) break;
    std::vector<double> prev(W.rows, 0.0);
    for (std::size_t k = 0; k < W.rows; ++k) {
      if (h[k] <= 0.0) continue;  // ReLU gate: zero where inactive
      const double* wrow = W.data.data() + k * W.cols;
      double s = 0.0;
      for (std::size_t j = 0; j < W.cols; ++j) s += wrow[j] * delta[j];
      prev[k] = s;
    }
    delta = std::move(prev);
  }
}

}  // namespace detail

// Gradient of a single row's loss with respect to all parameters, given the
// loss gradient at the logits.
inline Gradients backward_row_delta(const MlpModel& m,
                                    std::span<const double> x,
                                    std::vector<double> delta) {
  std::vector<std::vector<double>> act;
  auto logits = detail::forward_row(m, x, &act);
  for (double v : logits)
    if (!std::isfinite(v)) throw NumericError("non-finite logits");
  if (delta.size() != logits.size())
    throw DataError("logit-gradient width mismatch");
  auto acc = zero_gradients(m);
  detail::accumulate_row_gradient(m, act, std::move(delta), acc);
  return acc;
}

struct BackwardResult {
  Gradients grads;  // gradient of the mean loss over the batch
  double mean_loss = 0.0;
};

// Gradient accumulation is split into a fixed number of chunks combined in
// chunk order, so results are bitwise identical for every thread count.
inline constexpr int kGradChunks = 16;

inline BackwardResult backward(const MlpModel& m, const Matrix& X,
                               const std::vector<SoftLabel>& labels,
                               const LossSpec& spec, int threads = 1) {
  if (X.rows != labels.size())
    throw DataError("backward: row/label count mismatch");
  if (X.rows == 0) throw DataError("backward: empty batch");
  const double inv_b = 1.0 / static_cast<double>(X.rows);
  int nchunks = static_cast<int>(std::min<std::size_t>(kGradChunks, X.rows));
  std::vector<Gradients> partial(nchunks);
  std::vector<double> partial_loss(nchunks, 0.0);
  for (auto& p : partial) p = zero_gradients(m);

  parallel_chunks(X.rows, nchunks, threads, [&](std::size_t chunk,
                                                std::size_t begin,
                                                std::size_t end) {
    auto& acc = partial[chunk];
    std::vector<std::vector<double>> act;
    for (std::size_t i = begin; i < end; ++i) {
      auto logits = detail::forward_row(m, X.row(i), &act);
      for (double v : logits)
        if (!std::isfinite(v)) throw NumericError("non-finite logits");
      partial_loss[chunk] +=
          soft_loss(spec, labels[i], softmax(logits)) * inv_b;
      auto delta = loss_grad(spec, labels[i], logits);
      for (auto& v : delta) v *= inv_b;
      detail::accumulate_row_gradient(m, act, std::move(delta), acc);
    }
  });

  BackwardResult out;
  out.grads = std::move(partial[0]);
  out.mean_loss = partial_loss[0];
  for (int c = 1; c < nchunks; ++c) {
    axpy_gradients(out.grads, partial[c]);
    out.mean_loss += partial_loss[c];
  }
  return out;
}

// Optimizers. Weight decay is decoupled: it scales the pre-step parameter
// value and never enters the adaptive moments.
struct OptState {
  std::vector<Matrix> mW, vW;
  std::vector<std::vector<double>> mb, vb;
  long long t = 0;
};

inline OptState init_opt_state(const MlpModel& m) {
  OptState s;
  for (const auto& l : m.layers) {
    s.mW.emplace_back(l.W.rows, l.W.cols, 0.0);
    s.vW.emplace_back(l.W.rows, l.W.cols, 0.0);
    s.mb.emplace_back(l.b.size(), 0.0);
    s.vb.emplace_back(l.b.size(), 0.0);
  }
  return s;
}

inline void optimizer_step(OptKind kind, MlpModel& m, const Gradients& g,
                           OptState& s, double lr, double weight_decay) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  if (kind == OptKind::Sgd) {
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      auto& W = m.layers[l].W.data;
      const auto& dW = g.dW[l].data;
      for (std::size_t i = 0; i < W.size(); ++i)
        W[i] -= lr * (dW[i] + weight_decay * W[i]);
      auto& b = m.layers[l].b;
      const auto& db = g.db[l];
      for (std::size_t i = 0; i < b.size(); ++i) b[i] -= lr * db[i];
    }
    return;
  }
  s.t += 1;
  double c1 = 1.0 - std::pow(beta1, static_cast<double>(s.t));
  double c2 = 1.0 - std::pow(beta2, static_cast<double>(s.t));
  auto adam = [&](double& w, double grad, double& mm, double& vv,
                  double decay) {
    mm = beta1 * mm + (1.0 - beta1) * grad;
    vv = beta2 * vv + (1.0 - beta2) * grad * grad;
    double mhat = mm / c1;
    double vhat = vv / c2;
    w -= lr * (mhat / (std::sqrt(vhat) + eps) + decay * w);
  };
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    auto& W = m.layers[l].W.data;
    const auto& dW = g.dW[l].data;
    for (std::size_t i = 0; i < W.size(); ++i)
      adam(W[i], dW[i], s.mW[l].data[i], s.vW[l].data[i], weight_decay);
    auto& b = m.layers[l].b;
    const auto& db = g.db[l];
    for (std::size_t i = 0; i < b.size(); ++i)
      adam(b[i], db[i], s.mb[l][i], s.vb[l][i], 0.0);  // no decay on biases
  }
}

// Checkpoint: 8-byte magic "CLLMDL01", u32 LE dim count, the dims as u32
// LE, then all parameters as f64 LE in flatten() order.
inline void save_checkpoint(const std::string& path, const MlpModel& m) {
  std::vector<unsigned char> bytes;
  const char magic[8] = {'C', 'L', 'L', 'M', 'D', 'L', '0', '1'};
  bytes.insert(bytes.end(), magic, magic + 8);
  detail::push_le32(bytes, static_cast<std::uint32_t>(m.dims.size()));
  for (int d : m.dims)
    detail::push_le32(bytes, static_cast<std::uint32_t>(d));
  auto push_f64 = [&](double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    for (int i = 0; i < 8; ++i)
      bytes.push_back(static_cast<unsigned char>(u >> (8 * i)));
  };
  for (const auto& l : m.layers) {
    for (double w : l.W.data) push_f64(w);
    for (double b : l.b) push_f64(b);
  }
  detail::atomic_write(path, bytes.data(), bytes.size());
}

inline MlpModel load_checkpoint(const std::string& path) {
  auto bytes = detail::slurp(path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "CLLMDL01", 8) != 0)
    throw DataError("bad checkpoint magic in " + path);
  std::uint32_t ndims = detail::le32(bytes.data() + 8);
  if (ndims < 2 || bytes.size() < 12 + 4 * std::size_t(ndims))
    throw DataError("truncated checkpoint: " + path);
  std::vector<int> dims(ndims);
  for (std::uint32_t i = 0; i < ndims; ++i) {
    dims[i] = static_cast<int>(detail::le32(bytes.data() + 12 + 4 * i));
    if (dims[i] < 1) throw DataError("checkpoint declares non-positive dim");
  }
  std::size_t nparams = 0;
  for (std::uint32_t l = 0; l + 1 < ndims; ++l)
    nparams += std::size_t(dims[l]) * dims[l + 1] + dims[l + 1];
  std::size_t header = 12 + 4 * std::size_t(ndims);
  if (bytes.size() != header + 8 * nparams)
    throw DataError("truncated checkpoint: " + path);

  MlpModel m = init_model(dims, 0);
  std::size_t off = header;
  auto read_f64 = [&]() {
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i)
      u |= static_cast<std::uint64_t>(bytes[off + i]) << (8 * i);
    off += 8;
    double v;
    std::memcpy(&v, &u, 8);
    return v;
  };
  for (auto& l : m.layers) {
    for (auto& w : l.W.data) w = read_f64();
    for (auto& b : l.b) b = read_f64();
  }
  return m;
}

}  // namespace cll
