#pragma once

// Scalar Gaussian building blocks shared by every orthant approximation:
// univariate pdf/cdf, the bivariate cdf, the Mills ratio and the moments of a
// bivariate standard normal truncated from above.
//
// Each function has a plain double version and a Dual overload that applies
// the closed-form partial derivatives, so the approximations written as
// templates get exact gradients.

#include <cmath>
#include <limits>
#include <numbers>

#include "macml/dual.hpp"
#include "macml/error.hpp"

namespace macml {

// Sentinel for an absent upper limit.
inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline constexpr double kInvSqrt2Pi = 0.3989422804014327;  // 1/sqrt(2 pi)

double std_normal_pdf(double x);
double std_normal_cdf(double x);

// phi(z) / Phi(z); the continued-fraction branch takes over below z = -8.
double mills_ratio(double z);

struct BivariateArgs {
  double b1 = 0.0;
  double b2 = 0.0;
  double rho = 0.0;
};

// P(X1 <= b1, X2 <= b2) for standard normals with correlation rho.
double bvn_cdf(double b1, double b2, double rho);
inline double bvn_cdf(const BivariateArgs& a) { return bvn_cdf(a.b1, a.b2, a.rho); }

// Partial derivatives of bvn_cdf with respect to (b1, b2, rho).
struct BvnPartials {
  double db1 = 0.0;
  double db2 = 0.0;
  double drho = 0.0;
};
BvnPartials bvn_cdf_partials(double b1, double b2, double rho);

template <int Cap>
inline Dual<Cap> std_normal_pdf(const Dual<Cap>& x) {
  const double p = std_normal_pdf(x.v);
  return chain(x, p, -x.v * p);
}

template <int Cap>
inline Dual<Cap> std_normal_cdf(const Dual<Cap>& x) {
  return chain(x, std_normal_cdf(x.v), std_normal_pdf(x.v));
}

template <int Cap>
inline Dual<Cap> mills_ratio(const Dual<Cap>& z) {
  const double a = mills_ratio(z.v);
  return chain(z, a, -a * (a + z.v));
}

template <int Cap>
Dual<Cap> bvn_cdf(const Dual<Cap>& b1, const Dual<Cap>& b2, const Dual<Cap>& rho) {
  const BvnPartials g = bvn_cdf_partials(b1.v, b2.v, rho.v);
  Dual<Cap> out(bvn_cdf(b1.v, b2.v, rho.v));
  out.n = std::max({b1.n, b2.n, rho.n});
  for (int i = 0; i < out.n; ++i) out.d[i] = g.db1 * b1.d[i] + g.db2 * b2.d[i] + g.drho * rho.d[i];
  return out;
}

// Bivariate standard normal density; zero when either argument is infinite.
template <class T>
T bvn_pdf(const T& x1, const T& x2, const T& rho) {
  using std::exp;
  using std::sqrt;
  if (std::isinf(value_of(x1)) || std::isinf(value_of(x2))) return T(0.0);
  const T om = 1.0 - rho * rho;
  const T q = (x1 * x1 - 2.0 * rho * x1 * x2 + x2 * x2) / om;
  return exp(-0.5 * q) / (2.0 * std::numbers::pi * sqrt(om));
}

template <class T>
struct TruncMoments2D {
  T p{};
  T mean1{};
  T mean2{};
  T var1{};
  T var2{};
  T corr{};
};

// Moments of (X1, X2) | X1 <= b1, X2 <= b2 for standard normals with
// correlation rho. Uses the Stein identities
//   E[X 1_A]   = -R g,
//   E[XX' 1_A] = P R + R H R,
// where g_i = phi(b_i) Phi((b_j - rho b_i)/s) and H collects the boundary
// second-derivative terms.
template <class T>
TruncMoments2D<T> trunc_moments_2d(const T& b1, const T& b2, const T& rho_in) {
  using std::sqrt;
  require(std::abs(value_of(rho_in)) <= 1.0, "trunc_moments_2d: |rho| must be <= 1");
  const double rho_cap = 1.0 - 1e-12;
  T rho = rho_in;
  if (value_of(rho) > rho_cap) rho = T(rho_cap);
  if (value_of(rho) < -rho_cap) rho = T(-rho_cap);

  TruncMoments2D<T> out;
  out.p = bvn_cdf(b1, b2, rho);
  if (!(value_of(out.p) >= 1e-300)) {
    fail(ErrorKind::DegenerateMass, "trunc_moments_2d: truncation region has no mass");
  }
  const bool inf1 = std::isinf(value_of(b1));
  const bool inf2 = std::isinf(value_of(b2));
  const T s = sqrt(1.0 - rho * rho);

  T g1(0.0), g2(0.0), b1g1(0.0), b2g2(0.0), psi(0.0);
  if (!inf1) {
    g1 = std_normal_pdf(b1) * (inf2 ? T(1.0) : std_normal_cdf((b2 - rho * b1) / s));
    b1g1 = b1 * g1;
  }
  if (!inf2) {
    g2 = std_normal_pdf(b2) * (inf1 ? T(1.0) : std_normal_cdf((b1 - rho * b2) / s));
    b2g2 = b2 * g2;
  }
  if (!inf1 && !inf2) psi = bvn_pdf(b1, b2, rho);

  const T& P = out.p;
  out.mean1 = -(g1 + rho * g2) / P;
  out.mean2 = -(rho * g1 + g2) / P;

  const T h11 = -b1g1 - rho * psi;
  const T h22 = -b2g2 - rho * psi;
  const T& h12 = psi;
  const T m11 = h11 + 2.0 * rho * h12 + rho * rho * h22;
  const T m22 = rho * rho * h11 + 2.0 * rho * h12 + h22;
  const T m12 = rho * h11 + (1.0 + rho * rho) * h12 + rho * h22;

  out.var1 = 1.0 + m11 / P - out.mean1 * out.mean1;
  out.var2 = 1.0 + m22 / P - out.mean2 * out.mean2;
  const T cov = rho + m12 / P - out.mean1 * out.mean2;
  out.corr = cov / sqrt(out.var1 * out.var2);
  return out;
}

inline TruncMoments2D<double> trunc_moments_2d(const BivariateArgs& a) {
  return trunc_moments_2d<double>(a.b1, a.b2, a.rho);
}

}  // namespace macml
