#pragma once

#include "swb/core/dual.hpp"

namespace swb {

template <class S>
struct Vec2T {
  S x{};
  S y{};

  Vec2T() = default;
  Vec2T(S x_, S y_) : x(x_), y(y_) {}
  template <class U>
  explicit Vec2T(const Vec2T<U>& o) : x(S(o.x)), y(S(o.y)) {}

  Vec2T& operator+=(const Vec2T& o) { x += o.x; y += o.y; return *this; }
  Vec2T& operator-=(const Vec2T& o) { x -= o.x; y -= o.y; return *this; }
  friend Vec2T operator+(Vec2T a, const Vec2T& b) { return a += b; }
  friend Vec2T operator-(Vec2T a, const Vec2T& b) { return a -= b; }
  friend Vec2T operator*(const S& s, const Vec2T& a) { return {s * a.x, s * a.y}; }
  friend bool operator==(const Vec2T& a, const Vec2T& b) = default;
};

using Vec2 = Vec2T<double>;

template <class S>
S squared_norm(const Vec2T<S>& a) {
  return a.x * a.x + a.y * a.y;
}

inline Vec2 value(const Vec2T<Dual>& a) { return {a.x.v, a.y.v}; }
inline Vec2 value(const Vec2& a) { return a; }

}  // namespace swb
