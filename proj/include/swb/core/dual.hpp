#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace swb {

/// Number of parameter directions carried by one forward-mode pass.
inline constexpr std::size_t kTangentSize = 8;

/// Forward-mode dual number: a value plus its derivative along up to
/// kTangentSize parameter directions. Gradients over more parameters are
/// assembled from several passes that share one random stream.
struct Dual {
  double v = 0.0;
  std::array<double, kTangentSize> d{};

  constexpr Dual() = default;
  constexpr Dual(double value) : v(value) {}  // NOLINT: constants lift implicitly

  static Dual variable(double value, std::size_t slot) {
    Dual x(value);
    x.d[slot] = 1.0;
    return x;
  }

  Dual& operator+=(const Dual& o) {
    v += o.v;
    for (std::size_t i = 0; i < kTangentSize; ++i) d[i] += o.d[i];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    for (std::size_t i = 0; i < kTangentSize; ++i) d[i] -= o.d[i];
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    for (std::size_t i = 0; i < kTangentSize; ++i) d[i] = d[i] * o.v + v * o.d[i];
    v *= o.v;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    const double inv = 1.0 / o.v;
    const double q = v * inv;
    for (std::size_t i = 0; i < kTangentSize; ++i) d[i] = (d[i] - q * o.d[i]) * inv;
    v = q;
    return *this;
  }
};

inline Dual operator-(Dual a) {
  a.v = -a.v;
  for (auto& x : a.d) x = -x;
  return a;
}
inline Dual operator+(Dual a, const Dual& b) { return a += b; }
inline Dual operator-(Dual a, const Dual& b) { return a -= b; }
inline Dual operator*(Dual a, const Dual& b) { return a *= b; }
inline Dual operator/(Dual a, const Dual& b) { return a /= b; }
inline Dual operator+(Dual a, double b) { a.v += b; return a; }
inline Dual operator+(double b, Dual a) { a.v += b; return a; }
inline Dual operator-(Dual a, double b) { a.v -= b; return a; }
inline Dual operator-(double b, const Dual& a) { return Dual(b) - a; }
inline Dual operator*(Dual a, double b) {
  a.v *= b;
  for (auto& x : a.d) x *= b;
  return a;
}
inline Dual operator*(double b, Dual a) { return a * b; }
inline Dual operator/(Dual a, double b) { return a * (1.0 / b); }
inline Dual operator/(double b, const Dual& a) { return Dual(b) / a; }

namespace detail {
inline Dual chain(const Dual& x, double fx, double dfx) {
  Dual r(fx);
  for (std::size_t i = 0; i < kTangentSize; ++i) r.d[i] = dfx * x.d[i];
  return r;
}
}  // namespace detail

// Elementary functions. The double overloads live in this namespace too, so
// unqualified calls inside swb templates resolve for both scalar kinds.
inline double exp(double x) { return std::exp(x); }
inline double log(double x) { return std::log(x); }
inline double log1p(double x) { return std::log1p(x); }
inline double sqrt(double x) { return std::sqrt(x); }
inline double tanh(double x) { return std::tanh(x); }

inline Dual exp(const Dual& x) {
  const double e = std::exp(x.v);
  return detail::chain(x, e, e);
}
inline Dual log(const Dual& x) { return detail::chain(x, std::log(x.v), 1.0 / x.v); }
inline Dual log1p(const Dual& x) { return detail::chain(x, std::log1p(x.v), 1.0 / (1.0 + x.v)); }
inline Dual sqrt(const Dual& x) {
  const double s = std::sqrt(x.v);
  return detail::chain(x, s, 0.5 / s);
}
inline Dual tanh(const Dual& x) {
  const double t = std::tanh(x.v);
  return detail::chain(x, t, 1.0 - t * t);
}

inline double value(double x) { return x; }
inline double value(const Dual& x) { return x.v; }

/// Drops the derivative part (stop-gradient).
inline double detach(double x) { return x; }
inline Dual detach(const Dual& x) { return Dual(x.v); }

inline double tangent(double, std::size_t) { return 0.0; }
inline double tangent(const Dual& x, std::size_t slot) { return x.d[slot]; }

}  // namespace swb
