#pragma once

#include <cmath>

namespace crowdnav {

// 2D vector templated on the scalar so the geometric constructions can be
// instantiated with forward-mode dual numbers for Jacobian assembly.
template <class S>
struct Vec2T {
  S x{};
  S y{};

  constexpr Vec2T() = default;
  constexpr Vec2T(S x_, S y_) : x(x_), y(y_) {}

  constexpr Vec2T operator+(const Vec2T& o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2T operator-(const Vec2T& o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2T operator-() const { return {-x, -y}; }
  constexpr Vec2T operator*(const S& k) const { return {x * k, y * k}; }
  constexpr Vec2T operator/(const S& k) const { return {x / k, y / k}; }
  Vec2T& operator+=(const Vec2T& o) {
    x = x + o.x;
    y = y + o.y;
    return *this;
  }
  Vec2T& operator-=(const Vec2T& o) {
    x = x - o.x;
    y = y - o.y;
    return *this;
  }
};

template <class S>
constexpr Vec2T<S> operator*(const S& k, const Vec2T<S>& v) {
  return {k * v.x, k * v.y};
}

template <class S>
constexpr S dot(const Vec2T<S>& a, const Vec2T<S>& b) {
  return a.x * b.x + a.y * b.y;
}

// z-component of the cross product (positive when b is counter-clockwise from a).
template <class S>
constexpr S cross(const Vec2T<S>& a, const Vec2T<S>& b) {
  return a.x * b.y - a.y * b.x;
}

template <class S>
constexpr S norm_sq(const Vec2T<S>& v) {
  return v.x * v.x + v.y * v.y;
}

template <class S>
S norm(const Vec2T<S>& v) {
  using std::sqrt;
  return sqrt(norm_sq(v));
}

template <class S>
Vec2T<S> normalized(const Vec2T<S>& v) {
  return v / norm(v);
}

// Counter-clockwise perpendicular.
template <class S>
constexpr Vec2T<S> perp(const Vec2T<S>& v) {
  return {-v.y, v.x};
}

using Vec2 = Vec2T<double>;

inline bool is_finite(const Vec2& v) { return std::isfinite(v.x) && std::isfinite(v.y); }

}  // namespace crowdnav
