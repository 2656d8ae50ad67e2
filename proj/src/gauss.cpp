#include "macml/gauss.hpp"

#include <algorithm>
#include <array>
#include <vector>

namespace macml {

double std_normal_pdf(double x) {
  if (std::isinf(x)) return 0.0;
  return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

double std_normal_cdf(double x) {
  if (x == kInf) return 1.0;
  if (x == -kInf) return 0.0;
  return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0);
}

double mills_ratio(double z) {
  if (z >= -8.0) return std_normal_pdf(z) / std_normal_cdf(z);
  // phi(z)/Phi(z) = x + 1/(x + 2/(x + 3/(x + ...))) with x = -z, evaluated
  // bottom-up. 60 levels are far more than needed for x > 8.
  const double x = -z;
  double t = x;
  for (int k = 60; k >= 1; --k) t = x + k / t;
  return t;
}

namespace {

// Positive half of an n-point Gauss-Legendre rule on [-1, 1].
struct HalfRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

HalfRule gauss_legendre_half(int n) {
  HalfRule rule;
  for (int i = 0; i < n / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    rule.nodes.push_back(x);
    rule.weights.push_back(2.0 / ((1.0 - x * x) * dp * dp));
  }
  return rule;
}

const HalfRule& rule_for(double abs_r) {
  static const HalfRule r6 = gauss_legendre_half(6);
  static const HalfRule r12 = gauss_legendre_half(12);
  static const HalfRule r20 = gauss_legendre_half(20);
  if (abs_r < 0.3) return r6;
  if (abs_r < 0.75) return r12;
  return r20;
}

// P(X > h, Y > k), Drezner-Wesolowsky single-integral form with Genz's
// |r|-dependent Gauss-Legendre order and the r -> +-1 series correction.
double bvn_upper(double h, double k, double r) {
  constexpr double tp = 2.0 * std::numbers::pi;
  if (h == kInf || k == kInf) return 0.0;
  if (h == -kInf) return k == -kInf ? 1.0 : std_normal_cdf(-k);
  if (k == -kInf) return std_normal_cdf(-h);
  if (r == 0.0) return std_normal_cdf(-h) * std_normal_cdf(-k);

  const HalfRule& rule = rule_for(std::abs(r));
  const std::size_t m = rule.nodes.size();
  double hk = h * k;
  double bvn = 0.0;

  if (std::abs(r) < 0.925) {
    const double hs = 0.5 * (h * h + k * k);
    const double asr = 0.5 * std::asin(r);
    for (std::size_t i = 0; i < m; ++i) {
      for (double x : {1.0 - rule.nodes[i], 1.0 + rule.nodes[i]}) {
        const double sn = std::sin(asr * x);
        bvn += rule.weights[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      }
    }
    bvn = bvn * asr / tp + std_normal_cdf(-h) * std_normal_cdf(-k);
  } else {
    if (r < 0.0) {
      k = -k;
      hk = -hk;
    }
    if (std::abs(r) < 1.0) {
      const double as = (1.0 - r) * (1.0 + r);
      double a = std::sqrt(as);
      const double bs = (h - k) * (h - k);
      const double c = (4.0 - hk) / 8.0;
      const double d = (12.0 - hk) / 80.0;
      double asr = -(bs / as + hk) / 2.0;
      if (asr > -100.0) bvn = a * std::exp(asr) * (1.0 - c * (bs - as) * (1.0 - d * bs) / 3.0 + c * d * as * as);
      if (hk > -100.0) {
        const double b = std::sqrt(bs);
        const double sp = std::sqrt(tp) * std_normal_cdf(-b / a);
        bvn -= std::exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
      }
      a /= 2.0;
      double sum = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        for (double x : {1.0 - rule.nodes[i], 1.0 + rule.nodes[i]}) {
          const double xs = (a * x) * (a * x);
          asr = -(bs / xs + hk) / 2.0;
          if (asr <= -100.0) continue;
          const double sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
          const double rs = std::sqrt(1.0 - xs);
          const double ep = std::exp(-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))) / rs;
          sum += rule.weights[i] * std::exp(asr) * (sp - ep);
        }
      }
      bvn = (a * sum - bvn) / tp;
    }
    if (r > 0.0) {
      bvn += std_normal_cdf(-std::max(h, k));
    } else if (h >= k) {
      bvn = -bvn;
    } else {
      const double lower = h < 0.0 ? std_normal_cdf(k) - std_normal_cdf(h)
                                   : std_normal_cdf(-h) - std_normal_cdf(-k);
      bvn = lower - bvn;
    }
  }
  return std::clamp(bvn, 0.0, 1.0);
}

}  // namespace

double bvn_cdf(double b1, double b2, double rho) {
  require(std::abs(rho) <= 1.0, "bvn_cdf: |rho| must be <= 1");
  require(!std::isnan(b1) && !std::isnan(b2), "bvn_cdf: NaN limit");
  return bvn_upper(-b1, -b2, rho);
}

BvnPartials bvn_cdf_partials(double b1, double b2, double rho) {
  BvnPartials g;
  const double s = std::sqrt(std::max((1.0 - rho) * (1.0 + rho), 0.0));
  auto cond = [&](double hi, double lo) {
    // Phi((hi - rho lo) / s) with the degenerate |rho| = 1 limit as a step.
    if (std::isinf(hi)) return hi > 0 ? 1.0 : 0.0;
    const double num = hi - rho * lo;
    if (s == 0.0) return num > 0 ? 1.0 : (num < 0 ? 0.0 : 0.5);
    return std_normal_cdf(num / s);
  };
  if (!std::isinf(b1)) g.db1 = std_normal_pdf(b1) * cond(b2, b1);
  if (!std::isinf(b2)) g.db2 = std_normal_pdf(b2) * cond(b1, b2);
  if (!std::isinf(b1) && !std::isinf(b2) && s > 0.0) g.drho = bvn_pdf(b1, b2, rho);
  return g;
}

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::DimensionTooLarge: return "dimension too large";
    case ErrorKind::SingularMatrix: return "singular matrix";
    case ErrorKind::NonPositiveVariance: return "nonpositive conditional variance";
    case ErrorKind::DegenerateMass: return "degenerate truncation mass";
    case ErrorKind::NonPositiveProbability: return "nonpositive probability";
    case ErrorKind::Io: return "i/o failure";
  }
  return "unknown";
}

}  // namespace macml
