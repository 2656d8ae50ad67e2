#pragma once

// Forward-mode dual numbers carrying a gradient with respect to up to Cap
// parameters. Only the first `n` derivative slots are meaningful; the rest are
// kept at zero so that mixing operands of different active sizes is safe.

#include <algorithm>
#include <array>
#include <cmath>

#include "macml/error.hpp"

namespace macml {

template <int Cap>
struct Dual {
  static constexpr int capacity = Cap;

  double v = 0.0;
  int n = 0;
  std::array<double, Cap> d{};

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit constants are the point

  // The i-th independent variable out of `count`.
  static Dual variable(double value, int i, int count) {
    require(count <= Cap && i >= 0 && i < count, "dual variable index out of range");
    Dual out(value);
    out.n = count;
    out.d[i] = 1.0;
    return out;
  }

  Dual& operator+=(const Dual& o) {
    v += o.v;
    n = std::max(n, o.n);
    for (int i = 0; i < o.n; ++i) d[i] += o.d[i];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    n = std::max(n, o.n);
    for (int i = 0; i < o.n; ++i) d[i] -= o.d[i];
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    const int m = std::max(n, o.n);
    for (int i = 0; i < m; ++i) d[i] = d[i] * o.v + v * o.d[i];
    n = m;
    v *= o.v;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    const double inv = 1.0 / o.v;
    const double q = v * inv;
    const int m = std::max(n, o.n);
    for (int i = 0; i < m; ++i) d[i] = (d[i] - q * o.d[i]) * inv;
    n = m;
    v = q;
    return *this;
  }
  Dual& operator+=(double c) {
    v += c;
    return *this;
  }
  Dual& operator-=(double c) {
    v -= c;
    return *this;
  }
  Dual& operator*=(double c) {
    v *= c;
    for (int i = 0; i < n; ++i) d[i] *= c;
    return *this;
  }
  Dual& operator/=(double c) { return *this *= (1.0 / c); }
};

// Applies the chain rule for a scalar function with known value and slope.
template <int Cap>
inline Dual<Cap> chain(const Dual<Cap>& x, double value, double slope) {
  Dual<Cap> out(value);
  out.n = x.n;
  for (int i = 0; i < x.n; ++i) out.d[i] = slope * x.d[i];
  return out;
}

template <int Cap>
inline Dual<Cap> operator-(const Dual<Cap>& x) {
  return chain(x, -x.v, -1.0);
}

#define MACML_DUAL_BINARY(op)                                                        \
  template <int Cap>                                                                 \
  inline Dual<Cap> operator op(Dual<Cap> a, const Dual<Cap>& b) { return a op## = b; } \
  template <int Cap>                                                                 \
  inline Dual<Cap> operator op(Dual<Cap> a, double b) { return a op## = b; }           \
  template <int Cap>                                                                 \
  inline Dual<Cap> operator op(double a, const Dual<Cap>& b) { return Dual<Cap>(a) op## = b; }

MACML_DUAL_BINARY(+)
MACML_DUAL_BINARY(-)
MACML_DUAL_BINARY(*)
MACML_DUAL_BINARY(/)
#undef MACML_DUAL_BINARY

#define MACML_DUAL_COMPARE(op)                                                                   \
  template <int Cap>                                                                             \
  inline bool operator op(const Dual<Cap>& a, const Dual<Cap>& b) { return a.v op b.v; }         \
  template <int Cap>                                                                             \
  inline bool operator op(const Dual<Cap>& a, double b) { return a.v op b; }                     \
  template <int Cap>                                                                             \
  inline bool operator op(double a, const Dual<Cap>& b) { return a op b.v; }

MACML_DUAL_COMPARE(<)
MACML_DUAL_COMPARE(<=)
MACML_DUAL_COMPARE(>)
MACML_DUAL_COMPARE(>=)
#undef MACML_DUAL_COMPARE

template <int Cap>
inline Dual<Cap> sqrt(const Dual<Cap>& x) {
  const double s = std::sqrt(x.v);
  return chain(x, s, s > 0.0 ? 0.5 / s : 0.0);
}
template <int Cap>
inline Dual<Cap> exp(const Dual<Cap>& x) {
  const double e = std::exp(x.v);
  return chain(x, e, e);
}
template <int Cap>
inline Dual<Cap> log(const Dual<Cap>& x) {
  return chain(x, std::log(x.v), 1.0 / x.v);
}
template <int Cap>
inline Dual<Cap> sin(const Dual<Cap>& x) {
  return chain(x, std::sin(x.v), std::cos(x.v));
}
template <int Cap>
inline Dual<Cap> asin(const Dual<Cap>& x) {
  return chain(x, std::asin(x.v), 1.0 / std::sqrt(1.0 - x.v * x.v));
}
template <int Cap>
inline Dual<Cap> abs(const Dual<Cap>& x) {
  return x.v < 0.0 ? -x : x;
}

inline double value_of(double x) { return x; }
template <int Cap>
inline double value_of(const Dual<Cap>& x) {
  return x.v;
}

// Derivative slot i, or zero when the value carries no gradient.
inline double deriv_of(double, int) { return 0.0; }
template <int Cap>
inline double deriv_of(const Dual<Cap>& x, int i) {
  return i < x.n ? x.d[i] : 0.0;
}

template <class T>
inline constexpr bool is_dual_v = false;
template <int Cap>
inline constexpr bool is_dual_v<Dual<Cap>> = true;

}  // namespace macml
