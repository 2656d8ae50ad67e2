#include <gtest/gtest.h>

#include <cmath>

#include "macml/error.hpp"
#include "macml/optimize.hpp"

using namespace macml;

namespace {

// f(x) = -(x - c)' A (x - c) / 2 with a fixed SPD A.
struct Quadratic {
  std::vector<double> c{1.0, -2.0, 0.5, 3.0, -1.0};
  double a(std::size_t i, std::size_t j) const {
    if (i == j) return 2.0 + i;
    return 0.3 / (1.0 + std::abs(double(i) - double(j)));
  }
  double operator()(const std::vector<double>& x, std::vector<double>& g) const {
    const std::size_t n = c.size();
    g.assign(n, 0.0);
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        v -= 0.5 * (x[i] - c[i]) * a(i, j) * (x[j] - c[j]);
        g[i] -= a(i, j) * (x[j] - c[j]);
      }
    return v;
  }
};

double rosenbrock(const std::vector<double>& x, std::vector<double>& g) {
  const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
  g = {-(-2.0 * a - 400.0 * x[0] * b), -(200.0 * b)};
  return -(a * a + 100.0 * b * b);
}

}  // namespace

TEST(Bfgs, ConcaveQuadratic) {
  const Quadratic q;
  BfgsOptions o;
  o.grad_tol = 1e-11;
  o.c2 = 0.01;  // near-exact line search: finite termination on quadratics
  const auto r = bfgs_maximize(q, std::vector<double>(5, 0.0), o);
  ASSERT_TRUE(r.converged) << r.message;
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(r.x[i], q.c[i], 1e-10);
  EXPECT_LE(r.iterations, 5 + 5);
}

TEST(Bfgs, Rosenbrock) {
  BfgsOptions o;
  o.grad_tol = 1e-9;
  o.max_iter = 1000;
  const auto r = bfgs_maximize(rosenbrock, {-1.2, 1.0}, o);
  ASSERT_TRUE(r.converged) << r.message;
  EXPECT_NEAR(r.x[0], 1.0, 1e-6);
  EXPECT_NEAR(r.x[1], 1.0, 1e-6);
  for (std::size_t i = 1; i < r.history.size(); ++i) EXPECT_GE(r.history[i], r.history[i - 1]);
}

TEST(Bfgs, LooserToleranceNeedsNoMoreIterations) {
  int prev = 1 << 30;
  for (double tol : {0.5e-5, 0.5e-4, 0.5e-3}) {
    BfgsOptions o;
    o.grad_tol = tol;
    o.max_iter = 1000;
    const auto r = bfgs_maximize(rosenbrock, {-1.2, 1.0}, o);
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.iterations, prev);
    prev = r.iterations;
  }
}

TEST(Bfgs, BoxConstraint) {
  const auto f = [](const std::vector<double>& x, std::vector<double>& g) {
    g = {-2.0 * (x[0] - 3.0), -2.0 * (x[1] + 0.5)};
    return -(x[0] - 3.0) * (x[0] - 3.0) - (x[1] + 0.5) * (x[1] + 0.5);
  };
  BfgsOptions o;
  o.grad_tol = 1e-10;
  o.lower = {-1.0, -1.0};
  o.upper = {1.0, 1.0};
  const auto r = bfgs_maximize(f, {0.0, 0.0}, o);
  ASSERT_TRUE(r.converged) << r.message;
  EXPECT_TRUE(r.at_bound);
  EXPECT_EQ(r.x[0], 1.0);
  EXPECT_NEAR(r.x[1], -0.5, 1e-10);
}

TEST(Bfgs, NumericalFailuresRejectTrialPoints) {
  // Undefined for x > 2; the maximizer at 1.5 is inside.
  const auto f = [](const std::vector<double>& x, std::vector<double>& g) {
    if (x[0] > 2.0) fail(ErrorKind::NonPositiveVariance, "outside the domain");
    g = {-2.0 * (x[0] - 1.5)};
    return -(x[0] - 1.5) * (x[0] - 1.5);
  };
  BfgsOptions o;
  o.grad_tol = 1e-10;
  const auto r = bfgs_maximize(f, {-30.0}, o);
  ASSERT_TRUE(r.converged) << r.message;
  EXPECT_NEAR(r.x[0], 1.5, 1e-10);
}

TEST(Bfgs, NonFiniteStartIsReportedNotThrown) {
  const auto f = [](const std::vector<double>&, std::vector<double>& g) {
    g = {0.0};
    return std::nan("");
  };
  const auto r = bfgs_maximize(f, {0.0}, {});
  EXPECT_FALSE(r.converged);
  EXPECT_FALSE(r.message.empty());
}

TEST(Bfgs, IterationLimit) {
  BfgsOptions o;
  o.max_iter = 3;
  const auto r = bfgs_maximize(rosenbrock, {-1.2, 1.0}, o);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 3);
}
