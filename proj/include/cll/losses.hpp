#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "cll/core.hpp"
#include "cll/labelgen.hpp"

namespace cll {

// Shift-stabilized softmax. With finite logits every entry is positive and
// the vector sums to 1 up to rounding.
inline std::vector<double> softmax(std::span<const double> logits) {
  double mx = logits[0];
  for (double z : logits) mx = std::max(mx, z);
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = std::exp(logits[k] - mx);
    sum += p[k];
  }
  for (auto& v : p) v /= sum;
  return p;
}

// -log(1 - p_ybar + gamma); gamma in (0,1) keeps the argument positive as
// p_ybar -> 1. Minimized by pushing p_ybar to 0.
inline double scl_nl(int ybar, std::span<const double> p, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0))
    throw ConfigError("gamma must lie strictly between 0 and 1");
  if (ybar < 0 || ybar >= static_cast<int>(p.size()))
    throw DataError("complementary label out of range");
  double arg = 1.0 - p[ybar] + gamma;
  if (!(arg > 0.0)) throw NumericError("scl-nl argument not positive");
  return -std::log(arg);
}

// exp(p_ybar): smooth monotone penalty on the complementary probability.
inline double scl_exp(int ybar, std::span<const double> p) {
  if (ybar < 0 || ybar >= static_cast<int>(p.size()))
    throw DataError("complementary label out of range");
  return std::exp(p[ybar]);
}

// Forward correction: -log((T^t p)_ybar). The corrected probability is
// clamped at 1e-12 before the log; a clamped evaluation sits in a flat
// region, so its gradient is zero. `clamped`, when given, reports whether
// the clamp fired.
inline constexpr double kFwdClamp = 1e-12;

inline double fwd_loss(int ybar, std::span<const double> p,
                       const TransitionMatrix& T, bool* clamped = nullptr) {
  if (T.K != static_cast<int>(p.size()))
    throw ConfigError("fwd loss needs a transition matrix matching K");
  if (ybar < 0 || ybar >= T.K)
    throw DataError("complementary label out of range");
  double q = 0.0;
  for (int k = 0; k < T.K; ++k) q += T.P.at(k, ybar) * p[k];
  bool clip = q < kFwdClamp;
  if (clamped) *clamped = clip;
  return -std::log(clip ? kFwdClamp : q);
}

// Loss family selector. T is consulted only by the forward-corrected loss.
struct LossSpec {
  LossKind kind = LossKind::SclNl;
  double gamma = 1e-6;
  TransitionMatrix T;
};

inline double hard_loss(const LossSpec& spec, int ybar,
                        std::span<const double> p) {
  switch (spec.kind) {
    case LossKind::SclNl: return scl_nl(ybar, p, spec.gamma);
    case LossKind::SclExp: return scl_exp(ybar, p);
    default: return fwd_loss(ybar, p, spec.T);
  }
}

inline void validate_soft_label(const SoftLabel& ytilde) {
  double sum = 0.0;
  for (double w : ytilde) {
    if (w < 0.0) throw DataError("soft label has a negative weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw DataError("soft label weights do not sum to 1");
}

// Weighted hard losses: sum_k ytilde_k * loss(k, p). Exactly linear in
// ytilde; zero-weight classes are skipped, so their loss value (possibly
// infinite in spirit) never enters.
inline double soft_loss(const LossSpec& spec, const SoftLabel& ytilde,
                        std::span<const double> p) {
  if (ytilde.size() != p.size())
    throw DataError("soft label length does not match class count");
  validate_soft_label(ytilde);
  double acc = 0.0;
  for (std::size_t k = 0; k < ytilde.size(); ++k)
    if (ytilde[k] > 0.0)
      acc += ytilde[k] * hard_loss(spec, static_cast<int>(k), p);
  return acc;
}

// Analytic gradient of soft_loss with respect to the logits, routed
// through the shifted softmax. Per hard class c:
//   scl-nl : d/dz_j = p_c (delta_cj - p_j) / (1 - p_c + gamma)
//   scl-exp: d/dz_j = exp(p_c) p_c (delta_cj - p_j)
//   fwd    : d/dz_j = p_j (1 - T_jc / q_c), q = T^t p  (zero when clamped)
inline std::vector<double> loss_grad(const LossSpec& spec,
                                     const SoftLabel& ytilde,
                                     std::span<const double> logits) {
  if (ytilde.size() != logits.size())
    throw DataError("soft label length does not match class count");
  validate_soft_label(ytilde);
  auto p = softmax(logits);
  const auto K = logits.size();
  std::vector<double> g(K, 0.0);
  for (std::size_t c = 0; c < K; ++c) {
    double w = ytilde[c];
    if (w <= 0.0) continue;
    switch (spec.kind) {
      case LossKind::SclNl: {
        double arg = 1.0 - p[c] + spec.gamma;
        if (!(arg > 0.0)) throw NumericError("scl-nl argument not positive");
        double s = w * p[c] / arg;
        for (std::size_t j = 0; j < K; ++j) g[j] -= s * p[j];
        g[c] += s;
        break;
      }
      case LossKind::SclExp: {
        double s = w * std::exp(p[c]) * p[c];
        for (std::size_t j = 0; j < K; ++j) g[j] -= s * p[j];
        g[c] += s;
        break;
      }
      case LossKind::Fwd: {
        if (spec.T.K != static_cast<int>(K))
          throw ConfigError("fwd loss needs a transition matrix matching K");
        double q = 0.0;
        for (std::size_t k = 0; k < K; ++k) q += spec.T.P.at(k, c) * p[k];
        if (q < kFwdClamp) break;  // flat clamped region
        for (std::size_t j = 0; j < K; ++j)
          g[j] += w * p[j] * (1.0 - spec.T.P.at(j, c) / q);
        break;
      }
    }
  }
  return g;
}

// One-hot convenience wrapper.
inline std::vector<double> loss_grad(const LossSpec& spec, int ybar,
                                     std::span<const double> logits) {
  SoftLabel onehot(logits.size(), 0.0);
  if (ybar < 0 || ybar >= static_cast<int>(logits.size()))
    throw DataError("complementary label out of range");
  onehot[ybar] = 1.0;
  return loss_grad(spec, onehot, logits);
}

}  // namespace cll
