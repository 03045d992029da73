#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cll/augment.hpp"
#include "cll/core.hpp"
#include "cll/dataset_io.hpp"
#include "cll/losses.hpp"
#include "cll/model.hpp"
#include "cll/rng.hpp"

namespace cll {

// A training pool: features plus complementary labels, with the ordinary
// labels and cluster ids optional (empty when unavailable).
struct LabeledSet {
  Matrix X;
  std::vector<int> ybar;
  std::vector<int> y;        // oracle ordinary labels, diagnostics only
  std::vector<int> cluster;  // required by intra-cluster policies
  int K = 0;
};

inline void validate_labeled_set(const LabeledSet& s) {
  if (s.K < 1) throw DataError("labeled set: K missing");
  if (!s.ybar.empty() && s.ybar.size() != s.X.rows)
    throw DataError("labeled set: complementary label count mismatch");
  if (!s.y.empty() && s.y.size() != s.X.rows)
    throw DataError("labeled set: ordinary label count mismatch");
  if (!s.cluster.empty() && s.cluster.size() != s.X.rows)
    throw DataError("labeled set: cluster id count mismatch");
}

// Seeded disjoint split: round(n * fraction) indices held out, the rest kept.
// Both sides come back sorted ascending.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
split_indices(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0))
    throw ConfigError("split fraction must be in [0, 1)");
  std::size_t held = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::size_t> out(order.begin(), order.begin() + held);
  std::vector<std::size_t> kept(order.begin() + held, order.end());
  std::sort(out.begin(), out.end());
  std::sort(kept.begin(), kept.end());
  return {kept, out};
}

inline Matrix subset_rows(const Matrix& X, const std::vector<std::size_t>& idx) {
  Matrix out(idx.size(), X.cols);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= X.rows) throw DataError("subset index out of range");
    auto src = X.row(idx[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

template <typename T>
inline std::vector<T> subset_vec(const std::vector<T>& v,
                                 const std::vector<std::size_t>& idx) {
  if (v.empty()) return {};
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) {
    if (i >= v.size()) throw DataError("subset index out of range");
    out.push_back(v[i]);
  }
  return out;
}

inline LabeledSet subset_set(const LabeledSet& s,
                             const std::vector<std::size_t>& idx) {
  LabeledSet out;
  out.X = subset_rows(s.X, idx);
  out.ybar = subset_vec(s.ybar, idx);
  out.y = subset_vec(s.y, idx);
  out.cluster = subset_vec(s.cluster, idx);
  out.K = s.K;
  return out;
}

struct TrainOptions {
  int epochs = 30;
  std::size_t batch_size = 512;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  OptKind optimizer = OptKind::Adam;
  MixKind policy = MixKind::None;
  double alpha = 0.4;   // mixing concentration
  double idw_c = 30.0;  // zero-distance replacement for 3-source labels
  std::uint64_t seed = 1;
  int threads = 1;
  bool track_noise = false;  // per-epoch mixing-noise row (needs oracle y)
};

struct EvalSplit {
  std::string name;  // "test" or "val"
  const Matrix* X = nullptr;
  const std::vector<int>* y = nullptr;
};

struct TrainResult {
  MlpModel model;
  std::vector<ResultRow> history;  // loss/accuracy/noise rows per epoch
};

namespace detail {

// Synthetic batch for one minibatch under the configured policy; policies
// that filter or pair can legitimately return an empty batch.
inline SyntheticBatch apply_policy(const Matrix& Xb,
                                   const std::vector<int>& ybar_b,
                                   const std::vector<int>& y_b,
                                   const std::vector<int>& cl_b, int K,
                                   const TrainOptions& opt,
                                   std::uint64_t aug_seed) {
  switch (opt.policy) {
    case MixKind::Mixup:
      return make_batch_mixup(Xb, ybar_b, K, opt.alpha, aug_seed);
    case MixKind::Icm:
      return make_batch_icm(Xb, ybar_b, cl_b, K, opt.alpha, aug_seed);
    case MixKind::Micm:
      return make_batch_micm(Xb, ybar_b, cl_b, K, opt.alpha, opt.idw_c,
                             aug_seed);
    case MixKind::MixupNf:
    case MixKind::IntraClassNf:
    case MixKind::ExtraClassNf: {
      auto raw = make_batch_mixup(Xb, ybar_b, K, opt.alpha, aug_seed);
      return oracle_filter(raw, y_b, ybar_b, opt.policy);
    }
    default:
      throw ConfigError("apply_policy called without a mixing policy");
  }
}

}  // namespace detail

// Algorithm: per epoch, shuffle, walk minibatches (the last short one is
// kept), synthesize per the policy, take one optimizer step on the mean
// loss. Everything is keyed off (seed, epoch, batch), so reruns are
// bit-identical for any thread count.
inline TrainResult train_model(MlpModel model, const LabeledSet& data,
                               const LossSpec& spec, const TrainOptions& opt,
                               const std::vector<EvalSplit>& evals = {},
                               const std::string& run_id = "run") {
  validate_labeled_set(data);
  if (data.ybar.empty()) throw DataError("training needs complementary labels");
  if (data.X.rows == 0) throw DataError("training set is empty");
  if (opt.epochs < 0) throw ConfigError("negative epoch count");
  if (opt.batch_size < 1) throw ConfigError("batch size must be positive");
  bool mixes = opt.policy != MixKind::None;
  bool needs_cluster = opt.policy == MixKind::Icm || opt.policy == MixKind::Micm;
  bool needs_oracle = opt.policy == MixKind::MixupNf ||
                      opt.policy == MixKind::IntraClassNf ||
                      opt.policy == MixKind::ExtraClassNf ||
                      (opt.track_noise && mixes);
  if (needs_cluster && data.cluster.empty())
    throw ConfigError("intra-cluster policy without cluster ids");
  if (needs_oracle && data.y.empty())
    throw ConfigError("policy needs oracle ordinary labels");

  const std::size_t N = data.X.rows;
  const int K = data.K;
  Rng root(opt.seed);
  auto state = init_opt_state(model);
  TrainResult out;

  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    std::vector<std::size_t> order(N);
    for (std::size_t i = 0; i < N; ++i) order[i] = i;
    Rng shuffle_rng = root.fork(1, epoch);
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t loss_rows = 0;
    double noisy_rows = 0.0;
    std::size_t mixed_rows = 0;
    std::size_t nbatches = (N + opt.batch_size - 1) / opt.batch_size;
    for (std::size_t b = 0; b < nbatches; ++b) {
      std::size_t lo = b * opt.batch_size;
      std::size_t hi = std::min(N, lo + opt.batch_size);
      std::vector<std::size_t> idx(order.begin() + lo, order.begin() + hi);
      Matrix Xb = subset_rows(data.X, idx);
      auto ybar_b = subset_vec(data.ybar, idx);
      auto y_b = subset_vec(data.y, idx);
      auto cl_b = subset_vec(data.cluster, idx);

      Matrix Xs;
      std::vector<SoftLabel> labels;
      if (!mixes) {
        Xs = std::move(Xb);
        for (int c : ybar_b) {
          SoftLabel s(K, 0.0);
          if (c < 0 || c >= K) throw DataError("complementary label out of range");
          s[c] = 1.0;
          labels.push_back(std::move(s));
        }
      } else {
        if (Xb.rows < 2) continue;  // cannot pair; skip the stray row
        std::uint64_t aug_seed = root.fork(2, epoch, b).next_u64();
        auto syn = detail::apply_policy(Xb, ybar_b, y_b, cl_b, K, opt, aug_seed);
        if (opt.track_noise && !y_b.empty()) {
          noisy_rows += noise_ratio(syn, y_b, ybar_b) *
                        static_cast<double>(syn.inputs.rows);
          mixed_rows += syn.inputs.rows;
        }
        if (syn.inputs.rows == 0) continue;  // nothing synthesized: no step
        Xs = std::move(syn.inputs);
        labels = std::move(syn.labels);
      }

      auto res = backward(model, Xs, labels, spec, opt.threads);
      optimizer_step(opt.optimizer, model, res.grads, state, opt.lr,
                     opt.weight_decay);
      loss_sum += res.mean_loss * static_cast<double>(Xs.rows);
      loss_rows += Xs.rows;
    }

    double epoch_loss = loss_rows ? loss_sum / static_cast<double>(loss_rows)
                                  : 0.0;
    out.history.push_back(
        {run_id, opt.seed, epoch, "train", "loss", epoch_loss});
    if (opt.track_noise && mixes)
      out.history.push_back({run_id, opt.seed, epoch, "train", "noise_ratio",
                             mixed_rows ? noisy_rows / double(mixed_rows)
                                        : 0.0});
    for (const auto& ev : evals) {
      double acc = evaluate(model, *ev.X, *ev.y, opt.threads);
      out.history.push_back(
          {run_id, opt.seed, epoch, ev.name, "accuracy", acc});
    }
  }
  out.model = std::move(model);
  return out;
}

}  // namespace cll
