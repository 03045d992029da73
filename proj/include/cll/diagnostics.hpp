#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cll/augment.hpp"
#include "cll/config.hpp"
#include "cll/core.hpp"
#include "cll/losses.hpp"
#include "cll/model.hpp"
#include "cll/rng.hpp"
#include "cll/train.hpp"

namespace cll {

// Fraction of instances whose argmax prediction differs from the given
// complementary label (the 0-1 hard complementary risk).
inline double risk_hard(const MlpModel& m, const Matrix& X,
                        const std::vector<int>& ybar, int threads = 1) {
  if (X.rows != ybar.size()) throw DataError("risk_hard: label count mismatch");
  if (X.rows == 0) throw DataError("risk_hard: empty set");
  auto pred = predict(m, X, threads);
  std::size_t differ = 0;
  for (std::size_t i = 0; i < ybar.size(); ++i) differ += pred[i] != ybar[i];
  return static_cast<double>(differ) / static_cast<double>(X.rows);
}

// Fraction of instances predicted AS their complementary label — the error
// mass that label noise feeds on. Complement of risk_hard by construction.
inline double epsilon_error(const MlpModel& m, const Matrix& X,
                            const std::vector<int>& ybar, int threads = 1) {
  if (X.rows != ybar.size())
    throw DataError("epsilon_error: label count mismatch");
  if (X.rows == 0) throw DataError("epsilon_error: empty set");
  auto pred = predict(m, X, threads);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < ybar.size(); ++i) hit += pred[i] == ybar[i];
  return static_cast<double>(hit) / static_cast<double>(X.rows);
}

// 0-1 risk over a synthetic batch: per row, indicators that the prediction
// at x-tilde avoids each source's complementary label, coefficient-weighted
// or plain-summed.
inline double risk_soft(const MlpModel& m, const SyntheticBatch& b,
                        const std::vector<int>& ybar, bool lambda_weighted,
                        int threads = 1) {
  if (b.inputs.rows == 0) return 0.0;
  auto pred = predict(m, b.inputs, threads);
  double acc = 0.0;
  for (std::size_t r = 0; r < b.inputs.rows; ++r) {
    const auto& s = b.sources[r];
    int n = s[2] < 0 ? 2 : 3;
    for (int t = 0; t < n; ++t) {
      if (s[t] < 0 || static_cast<std::size_t>(s[t]) >= ybar.size())
        throw DataError("risk_soft: source index out of range");
      double miss = pred[r] != ybar[s[t]] ? 1.0 : 0.0;
      acc += lambda_weighted ? b.lambdas[r][t] * miss : miss;
    }
  }
  return acc / static_cast<double>(b.inputs.rows);
}

// Coefficient-weighted partition of the synthetic 0-1 mass: each source
// contributes its coefficient either to the "prediction avoids the
// complementary label" side or to the epsilon side. total = non_noise +
// eps_term holds exactly, batch by batch.
struct SoftRiskParts {
  double total = 0.0;
  double non_noise = 0.0;
  double eps_term = 0.0;
};

inline SoftRiskParts soft_risk_decomposition(const MlpModel& m,
                                             const SyntheticBatch& b,
                                             const std::vector<int>& ybar,
                                             int threads = 1) {
  SoftRiskParts parts;
  if (b.inputs.rows == 0) return parts;
  auto pred = predict(m, b.inputs, threads);
  for (std::size_t r = 0; r < b.inputs.rows; ++r) {
    const auto& s = b.sources[r];
    int n = s[2] < 0 ? 2 : 3;
    for (int t = 0; t < n; ++t) {
      if (s[t] < 0 || static_cast<std::size_t>(s[t]) >= ybar.size())
        throw DataError("soft risk: source index out of range");
      parts.total += b.lambdas[r][t];
      if (pred[r] != ybar[s[t]])
        parts.non_noise += b.lambdas[r][t];
      else
        parts.eps_term += b.lambdas[r][t];
    }
  }
  double inv = 1.0 / static_cast<double>(b.inputs.rows);
  parts.total *= inv;
  parts.non_noise *= inv;
  parts.eps_term *= inv;
  return parts;
}

namespace detail {

// dLoss/dlogits of ordinary softmax cross-entropy: p - one_hot(y).
inline std::vector<double> ce_delta(const std::vector<double>& logits, int y) {
  auto p = softmax(logits);
  if (y < 0 || static_cast<std::size_t>(y) >= p.size())
    throw DataError("ordinary label out of range");
  p[y] -= 1.0;
  return p;
}

inline std::vector<double> flat_row_grad(const MlpModel& m,
                                         std::span<const double> x,
                                         std::vector<double> delta) {
  return flatten(backward_row_delta(m, x, std::move(delta)));
}

inline double sq_norm_diff(const std::vector<double>& a,
                           const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace detail

// Per-sample gradient triplet, flattened over all parameters:
//   f — ordinary cross-entropy gradient at (x, y)
//   c — complementary-loss gradient at (x, ybar)
//   b — mean complementary-loss gradient over the label set selected by
//       BForm: every class but the true one (the default, which makes b the
//       mean of c's distribution), or every class but the given ybar.
struct GradTriplet {
  std::vector<double> f, c, b;
};

inline GradTriplet gradient_triplet(const MlpModel& m, std::span<const double> x,
                                    int y, int ybar, const LossSpec& spec,
                                    BForm form = BForm::ExcludeTrue) {
  const int K = m.dims.back();
  if (y < 0 || y >= K || ybar < 0 || ybar >= K)
    throw DataError("gradient_triplet: label out of range");
  auto logits = detail::forward_row(m, x, nullptr);
  GradTriplet out;
  out.f = detail::flat_row_grad(m, x, detail::ce_delta(logits, y));
  out.c = detail::flat_row_grad(m, x, loss_grad(spec, ybar, logits));
  int excluded = form == BForm::ExcludeTrue ? y : ybar;
  std::vector<double> mean_delta(static_cast<std::size_t>(K), 0.0);
  for (int yp = 0; yp < K; ++yp) {
    if (yp == excluded) continue;
    auto d = loss_grad(spec, yp, logits);
    for (int j = 0; j < K; ++j) mean_delta[j] += d[j];
  }
  for (auto& v : mean_delta) v /= static_cast<double>(K - 1);
  out.b = detail::flat_row_grad(m, x, std::move(mean_delta));
  return out;
}

struct GradStats {
  int epoch = 0;
  double mse = 0.0;
  double bias_sq = 0.0;
  double variance = 0.0;
};

struct GradProtocolOptions {
  MixKind policy = MixKind::None;  // None: c uses the dataset's own ybar
  bool exhaustive = false;         // None only: enumerate ybar over [K]\{y}
  BForm b_form = BForm::ExcludeTrue;
  double alpha = 0.4;
  double idw_c = 30.0;
  int epochs = 10;
  std::size_t subsample = 2000;  // 0 = use every instance
  double lr = 1e-4;              // ordinary-gradient step per epoch
  std::uint64_t seed = 1;
  int threads = 1;
};

// Gradient estimation-error protocol: each epoch measures, per slot,
//   MSE = mean ||f - c||^2, bias^2 = mean ||f - b||^2, var = mean ||b - c||^2,
// where c is either the dataset's complementary gradient (optionally
// enumerated exhaustively, which makes MSE = bias^2 + var exact) or the
// policy-generated estimator evaluated at the synthetic input, attributed to
// its first source. The model then takes one plain SGD step on the mean
// ordinary gradient — every policy sees the same trajectory.
inline std::vector<GradStats> grad_protocol(MlpModel model,
                                            const LabeledSet& data,
                                            const LossSpec& spec,
                                            const GradProtocolOptions& opt) {
  validate_labeled_set(data);
  if (data.y.empty() || data.ybar.empty())
    throw DataError("gradient protocol needs ordinary and complementary labels");
  bool needs_cluster = opt.policy == MixKind::Icm || opt.policy == MixKind::Micm;
  if (needs_cluster && data.cluster.empty())
    throw ConfigError("intra-cluster policy without cluster ids");
  if (opt.exhaustive && opt.policy != MixKind::None)
    throw ConfigError("exhaustive enumeration applies only to the plain estimator");
  if (opt.epochs < 1) throw ConfigError("protocol needs at least one epoch");

  Rng root(opt.seed);
  std::vector<std::size_t> idx(data.X.rows);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  if (opt.subsample > 0 && opt.subsample < idx.size()) {
    Rng pick = root.fork(1);
    pick.shuffle(idx);
    idx.resize(opt.subsample);
    std::sort(idx.begin(), idx.end());
  }
  LabeledSet sub = subset_set(data, idx);
  const std::size_t n = sub.X.rows;
  const int K = sub.K;

  // The mean complementary-loss delta over the allowed label set, at fixed
  // logits; backprop is linear in the delta, so one pass yields b.
  auto b_delta = [&](const std::vector<double>& logits, int y, int ybar) {
    int excluded = opt.b_form == BForm::ExcludeTrue ? y : ybar;
    std::vector<double> mean_delta(static_cast<std::size_t>(K), 0.0);
    for (int yp = 0; yp < K; ++yp) {
      if (yp == excluded) continue;
      auto d = loss_grad(spec, yp, logits);
      for (int j = 0; j < K; ++j) mean_delta[j] += d[j];
    }
    for (auto& v : mean_delta) v /= static_cast<double>(K - 1);
    return mean_delta;
  };

  std::vector<GradStats> history;
  auto opt_state = init_opt_state(model);
  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    bool policy_mode = opt.policy != MixKind::None;
    SyntheticBatch syn;
    if (policy_mode) {
      TrainOptions topt;
      topt.policy = opt.policy;
      topt.alpha = opt.alpha;
      topt.idw_c = opt.idw_c;
      std::uint64_t aug_seed = root.fork(2, epoch).next_u64();
      syn = detail::apply_policy(sub.X, sub.ybar, sub.y, sub.cluster, K, topt,
                                 aug_seed);
    }
    std::size_t nslots = policy_mode ? syn.inputs.rows : n;

    int nchunks = static_cast<int>(
        std::min<std::size_t>(kGradChunks, std::max<std::size_t>(nslots, 1)));
    struct Sums {
      double mse = 0.0, bias = 0.0, var = 0.0;
      std::size_t count = 0;
    };
    std::vector<Sums> partial(nchunks);
    if (nslots > 0) {
      parallel_chunks(nslots, nchunks, opt.threads,
                      [&](std::size_t chunk, std::size_t lo, std::size_t hi) {
        auto& acc = partial[chunk];
        for (std::size_t s = lo; s < hi; ++s) {
          std::size_t orig = policy_mode
                                 ? static_cast<std::size_t>(syn.sources[s][0])
                                 : s;
          auto x = sub.X.row(orig);
          auto logits = detail::forward_row(model, x, nullptr);
          auto f = detail::flat_row_grad(model, x,
                                         detail::ce_delta(logits, sub.y[orig]));
          auto b = detail::flat_row_grad(
              model, x, b_delta(logits, sub.y[orig], sub.ybar[orig]));
          double bias_term = detail::sq_norm_diff(f, b);
          auto push_c = [&](const std::vector<double>& c) {
            acc.mse += detail::sq_norm_diff(f, c);
            acc.var += detail::sq_norm_diff(b, c);
            acc.bias += bias_term;  // once per estimator draw
            ++acc.count;
          };
          if (policy_mode) {
            auto xs = syn.inputs.row(s);
            auto syn_logits = detail::forward_row(model, xs, nullptr);
            push_c(detail::flat_row_grad(
                model, xs, loss_grad(spec, syn.labels[s], syn_logits)));
          } else if (opt.exhaustive) {
            for (int yp = 0; yp < K; ++yp) {
              if (yp == sub.y[orig]) continue;
              push_c(detail::flat_row_grad(model, x,
                                           loss_grad(spec, yp, logits)));
            }
          } else {
            push_c(detail::flat_row_grad(
                model, x, loss_grad(spec, sub.ybar[orig], logits)));
          }
        }
      });
    }
    Sums total;
    for (const auto& p : partial) {
      total.mse += p.mse;
      total.bias += p.bias;
      total.var += p.var;
      total.count += p.count;
    }
    double inv = total.count ? 1.0 / static_cast<double>(total.count) : 0.0;
    history.push_back(
        {epoch, total.mse * inv, total.bias * inv, total.var * inv});

    // trajectory update: one SGD step on the mean ordinary gradient,
    // identical for every policy under comparison
    std::vector<Gradients> fparts(nchunks);
    for (auto& g : fparts) g = zero_gradients(model);
    parallel_chunks(n, nchunks, opt.threads,
                    [&](std::size_t chunk, std::size_t lo, std::size_t hi) {
      std::vector<std::vector<double>> act;
      for (std::size_t i = lo; i < hi; ++i) {
        auto x = sub.X.row(i);
        auto logits = detail::forward_row(model, x, &act);
        auto delta = detail::ce_delta(logits, sub.y[i]);
        for (auto& v : delta) v /= static_cast<double>(n);
        detail::accumulate_row_gradient(model, act, std::move(delta),
                                        fparts[chunk]);
      }
    });
    for (int c = 1; c < nchunks; ++c) axpy_gradients(fparts[0], fparts[c]);
    optimizer_step(OptKind::Sgd, model, fparts[0], opt_state, opt.lr, 0.0);
  }
  return history;
}

struct NoiseReport {
  std::string policy;
  std::size_t outputs = 0;        // synthetic rows across all trials
  double ratio = 0.0;             // aggregate contamination fraction
  std::vector<double> per_class;  // by the first source's true class
  double filter_pass_rate = 1.0;  // kept fraction (filter policies only)
};

// Aggregate mixing noise over `trials` seeded batches of the whole set.
inline NoiseReport noise_report(MixKind policy, const LabeledSet& data,
                                double alpha, double idw_c, int trials,
                                std::uint64_t seed) {
  validate_labeled_set(data);
  if (policy == MixKind::None)
    throw ConfigError("noise report needs a mixing policy");
  if (data.y.empty())
    throw DataError("noise report needs oracle ordinary labels");
  if (trials < 1) throw ConfigError("noise report needs at least one trial");
  bool needs_cluster = policy == MixKind::Icm || policy == MixKind::Micm;
  if (needs_cluster && data.cluster.empty())
    throw ConfigError("intra-cluster policy without cluster ids");

  TrainOptions topt;
  topt.policy = policy;
  topt.alpha = alpha;
  topt.idw_c = idw_c;
  NoiseReport rep;
  rep.policy = to_string(policy);
  rep.per_class.assign(static_cast<std::size_t>(data.K), 0.0);
  std::vector<std::size_t> class_rows(static_cast<std::size_t>(data.K), 0);
  std::size_t noisy_total = 0, raw_total = 0;
  Rng root(seed);
  for (int t = 0; t < trials; ++t) {
    std::uint64_t aug_seed = root.fork(3, t).next_u64();
    bool filtering = policy == MixKind::MixupNf ||
                     policy == MixKind::IntraClassNf ||
                     policy == MixKind::ExtraClassNf;
    raw_total += filtering ? data.X.rows : 0;
    auto syn = detail::apply_policy(data.X, data.ybar, data.y, data.cluster,
                                    data.K, topt, aug_seed);
    rep.outputs += syn.inputs.rows;
    for (const auto& s : syn.sources) {
      bool noisy = detail::is_noisy(s, data.y, data.ybar);
      noisy_total += noisy;
      int cls = data.y[s[0]];
      ++class_rows[cls];
      rep.per_class[cls] += noisy;
    }
  }
  rep.ratio = rep.outputs
                  ? static_cast<double>(noisy_total) /
                        static_cast<double>(rep.outputs)
                  : 0.0;
  for (int k = 0; k < data.K; ++k)
    rep.per_class[k] = class_rows[k] ? rep.per_class[k] / class_rows[k] : 0.0;
  if (raw_total > 0)
    rep.filter_pass_rate =
        static_cast<double>(rep.outputs) / static_cast<double>(raw_total);
  return rep;
}

}  // namespace cll
