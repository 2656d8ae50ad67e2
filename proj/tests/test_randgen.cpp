#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "macml/randgen.hpp"

using namespace macml;

namespace {

// Regularized incomplete beta I_x(a, a) by Simpson's rule on the density;
// fine for the smooth a >= 1 cases used here.
double beta_cdf(double x, double a) {
  const int n = 2000;
  auto dens = [a](double t) { return std::pow(t * (1.0 - t), a - 1.0); };
  auto integrate = [&](double hi) {
    const double h = hi / n;
    double s = dens(0.0) + dens(hi);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * dens(i * h);
    return s * h / 3.0;
  };
  return integrate(x) / integrate(1.0);
}

// Kolmogorov statistic sqrt(n) D of a sample against a continuous cdf.
template <class Cdf>
double ks_statistic(std::vector<double> xs, Cdf cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = double(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return std::sqrt(n) * d;
}

// Upper 1% point of the Kolmogorov distribution.
constexpr double kKs01 = 1.6276;
// Upper 0.01/6 point, for six simultaneous tests (2 exp(-2 x^2) tail).
constexpr double kKs01Of6 = 1.8830;

}  // namespace

TEST(Vine, OneByOne) {
  std::mt19937_64 rng(1);
  const auto r = vine_correlation(1, 1.0, rng);
  EXPECT_EQ(r.rows(), 1u);
  EXPECT_EQ(r(0, 0), 1.0);
}

TEST(Vine, UniformMarginalAtKTwo) {
  std::mt19937_64 rng(2);
  std::vector<double> xs;
  for (int i = 0; i < 10000; ++i) xs.push_back(vine_correlation(2, 1.0, rng)(0, 1));
  EXPECT_LT(ks_statistic(xs, [](double x) { return (x + 1.0) / 2.0; }), kKs01);
}

TEST(Vine, MarginalsMatchBetaLaw) {
  // Every off-diagonal entry is 2 Beta(eta - 1 + K/2, same) - 1.
  for (auto [K, eta] : {std::pair<std::size_t, double>{4, 1.0}, {3, 2.5}, {5, 1.0}}) {
    std::mt19937_64 rng(3 + K);
    std::vector<double> first, last;
    for (int i = 0; i < 10000; ++i) {
      const auto r = vine_correlation(K, eta, rng);
      first.push_back(r(0, 1));
      last.push_back(r(K - 2, K - 1));
    }
    const double a = eta - 1.0 + K / 2.0;
    const auto cdf = [a](double x) { return beta_cdf((x + 1.0) / 2.0, a); };
    EXPECT_LT(ks_statistic(first, cdf), kKs01Of6) << K;
    EXPECT_LT(ks_statistic(last, cdf), kKs01Of6) << K;
  }
}

TEST(Vine, ValidCorrelationMatrices) {
  std::mt19937_64 rng(4);
  double min_eig = 1.0;
  for (int i = 0; i < 10000; ++i) {
    const auto r = vine_correlation(4, 1.0, rng);
    Eigen::Matrix4d m;
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) {
        m(a, b) = r(a, b);
        ASSERT_EQ(r(a, b), r(b, a));
      }
    for (int a = 0; a < 4; ++a) ASSERT_EQ(r(a, a), 1.0);
    min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d>(m).eigenvalues()(0));
  }
  EXPECT_GT(min_eig, 1e-10);
}

TEST(Vine, CorrelationsFadeWithEta) {
  std::vector<double> means;
  for (double eta : {1.0, 5.0, 50.0, 100.0}) {
    std::mt19937_64 rng(5);
    double s = 0.0;
    for (int i = 0; i < 10000; ++i) {
      const auto r = vine_correlation(3, eta, rng);
      s += std::abs(r(0, 1)) + std::abs(r(0, 2)) + std::abs(r(1, 2));
    }
    means.push_back(s / 30000.0);
  }
  for (std::size_t i = 1; i < means.size(); ++i) EXPECT_LT(means[i], means[i - 1]);
}

TEST(TrueModel, CovarianceRoundTrip) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 200; ++t) {
    DgpConfig cfg;
    cfg.L = 2.0;
    cfg.K_sd = 4.0;
    const auto s = draw_true_model(cfg, rng);
    EXPECT_EQ(s.ascs[0], 1.0);
    for (std::size_t j = 1; j < 4; ++j) EXPECT_LE(std::abs(s.ascs[j]), 2.0);
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_GE(std::sqrt(s.sigma(i, i)), kSdFloor * (1 - 1e-15));
      EXPECT_LE(std::sqrt(s.sigma(i, i)), 4.0);
      for (std::size_t j = 0; j < 4; ++j) {
        const double r = s.sigma(i, j) / std::sqrt(s.sigma(i, i) * s.sigma(j, j));
        EXPECT_LE(std::abs(r), 1.0 + 1e-12);
        if (i == j) EXPECT_NEAR(r, 1.0, 1e-12);
      }
    }
  }
}

TEST(TrueModel, DegenerateBoundsUseFloors) {
  std::mt19937_64 rng(7);
  DgpConfig cfg;
  cfg.L = 1e-12;
  cfg.K_sd = 1e-12;
  const auto s = draw_true_model(cfg, rng);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(s.sigma(i, i), kSdFloor * kSdFloor, 1e-18);
}

TEST(TrueModel, InvalidConfig) {
  std::mt19937_64 rng(8);
  DgpConfig cfg;
  cfg.eta = 0.5;
  EXPECT_THROW(draw_true_model(cfg, rng), Error);
  cfg = {};
  cfg.L = 0.0;
  EXPECT_THROW(draw_true_model(cfg, rng), Error);
}

TEST(TrueModel, SeedDeterminism) {
  DgpConfig cfg;
  std::mt19937_64 a(9), b(9);
  for (int t = 0; t < 20; ++t) {
    const auto x = draw_true_model(cfg, a), y = draw_true_model(cfg, b);
    EXPECT_EQ(x.ascs, y.ascs);
    EXPECT_EQ(x.sigma.data(), y.sigma.data());
  }
  EXPECT_NE(substream_seed(1, 0), substream_seed(1, 1));
  EXPECT_NE(substream_seed(1, 0), substream_seed(2, 0));
  EXPECT_EQ(substream_seed(3, 4), substream_seed(3, 4));
}

TEST(TrueModel, SmallProbabilitiesAreCommon) {
  DgpConfig cfg;
  cfg.L = 2.0;
  cfg.K_sd = 1.0;
  std::mt19937_64 rng(10);
  int small = 0;
  const int n = 300;
  for (int t = 0; t < n; ++t) {
    const auto p = oracle_probabilities(moments_of(draw_true_model(cfg, rng)), 1e-9);
    if (*std::min_element(p.begin(), p.end()) < 0.001) ++small;
  }
  const double frac = double(small) / n;
  EXPECT_GT(frac, 0.1);
  EXPECT_LT(frac, 0.9);
}
