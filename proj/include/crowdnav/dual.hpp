#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace crowdnav {

// Minimal forward-mode dual scalar carrying K partial derivatives.
// Used to differentiate the half-plane constructions exactly instead of
// hand-deriving the branchy velocity-obstacle geometry.
template <int K>
struct Dual {
  double v{0.0};
  std::array<double, K> d{};

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit promotion of constants is intended

  static Dual seed(double value, int slot) {
    Dual out(value);
    out.d[static_cast<std::size_t>(slot)] = 1.0;
    return out;
  }

  Dual operator-() const {
    Dual out(-v);
    for (int i = 0; i < K; ++i) out.d[i] = -d[i];
    return out;
  }

  Dual& operator+=(const Dual& o) {
    v += o.v;
    for (int i = 0; i < K; ++i) d[i] += o.d[i];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    for (int i = 0; i < K; ++i) d[i] -= o.d[i];
    return *this;
  }

  friend Dual operator+(Dual a, const Dual& b) { return a += b; }
  friend Dual operator-(Dual a, const Dual& b) { return a -= b; }

  friend Dual operator*(const Dual& a, const Dual& b) {
    Dual out(a.v * b.v);
    for (int i = 0; i < K; ++i) out.d[i] = a.d[i] * b.v + a.v * b.d[i];
    return out;
  }

  friend Dual operator/(const Dual& a, const Dual& b) {
    const double inv = 1.0 / b.v;
    Dual out(a.v * inv);
    for (int i = 0; i < K; ++i) out.d[i] = (a.d[i] - out.v * b.d[i]) * inv;
    return out;
  }

  // Branch decisions compare values only; derivatives follow the taken branch.
  friend bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
  friend bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
  friend bool operator<=(const Dual& a, const Dual& b) { return a.v <= b.v; }
  friend bool operator>=(const Dual& a, const Dual& b) { return a.v >= b.v; }
};

template <int K>
Dual<K> sqrt(const Dual<K>& a) {
  Dual<K> out(std::sqrt(a.v));
  const double g = 0.5 / out.v;
  for (int i = 0; i < K; ++i) out.d[i] = g * a.d[i];
  return out;
}

template <int K>
Dual<K> exp(const Dual<K>& a) {
  Dual<K> out(std::exp(a.v));
  for (int i = 0; i < K; ++i) out.d[i] = out.v * a.d[i];
  return out;
}

template <int K>
double value_of(const Dual<K>& a) {
  return a.v;
}
inline double value_of(double a) { return a; }

}  // namespace crowdnav
