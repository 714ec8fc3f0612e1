#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "swb/core/dual.hpp"

namespace swb {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kLogTwoPi = 1.8378770664093454836;  // log(2*pi)

template <class S>
S softplus(const S& x) {
  const double xv = value(x);
  if (xv > 30.0) return x + log1p(exp(-x));
  return log1p(exp(x));
}

/// Inverse of softplus, used to set raw parameters from positive targets.
inline double softplus_inverse(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

template <class S>
S sigmoid(const S& x) {
  if (value(x) >= 0.0) return S(1.0) / (exp(-x) + 1.0);
  const S e = exp(x);
  return e / (e + 1.0);
}

template <class S>
S log_sigmoid(const S& x) {
  return -softplus(S(-x));
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

/// log-sum-exp with max subtraction. Entries equal to -inf are skipped.
template <class S>
S logsumexp(std::span<const S> xs) {
  double m = kNegInf;
  for (const S& x : xs) m = std::max(m, value(x));
  if (m == kNegInf) return S(kNegInf);
  S acc(0.0);
  for (const S& x : xs) {
    if (value(x) == kNegInf) continue;
    acc += exp(x - m);
  }
  return log(acc) + m;
}

template <class S>
S logsumexp(const std::vector<S>& xs) {
  return logsumexp(std::span<const S>(xs));
}

/// Normalized log-probabilities from logits; -inf logits stay -inf.
template <class S>
std::vector<S> log_softmax(const std::vector<S>& logits) {
  const S lse = logsumexp(logits);
  std::vector<S> out;
  out.reserve(logits.size());
  for (const S& l : logits) out.push_back(value(l) == kNegInf ? S(kNegInf) : l - lse);
  return out;
}

/// log N(x; mean, sigma^2) for a scalar.
template <class S, class T, class U>
auto log_normal(const S& x, const T& mean, const U& sigma) {
  const auto z = (x - mean) / sigma;
  return -0.5 * z * z - log(sigma) - 0.5 * kLogTwoPi;
}

template <class S>
S log_bernoulli(bool outcome, const S& logit_p) {
  return outcome ? log_sigmoid(logit_p) : log_sigmoid(S(-logit_p));
}

}  // namespace swb
