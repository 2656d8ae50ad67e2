#pragma once

// Analytic approximations of Gaussian orthant probabilities
//   Phi_K(b; 0, R) = P(X_1 <= b_1, ..., X_K <= b_K),  X ~ N(0, R),
// with R a correlation matrix:
//
//   SJ-1   Solow-Joe linear-projection factorization for one ordering
//   SJ-A   SJ averaged over every ordering
//   ME     univariate Mendell-Elston moment-matching recursion
//   bME    bivariate Mendell-Elston (pairs of components per step)
//
// plus a quadrature reference for K <= 4. All approximations are templates
// over the scalar so that Dual inputs yield exact gradients.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "macml/dual.hpp"
#include "macml/error.hpp"
#include "macml/gauss.hpp"
#include "macml/matrix.hpp"

namespace macml {

template <class T>
struct BasicOrthant {
  std::vector<T> b;
  Matrix<T> R;

  std::size_t dim() const { return b.size(); }
};

using OrthantProblem = BasicOrthant<double>;

// Throws InvalidArgument naming the violated invariant (symmetry, unit
// diagonal, positive definiteness, shape).
void validate(const OrthantProblem& p);

template <class T>
OrthantProblem values_of(const BasicOrthant<T>& p) {
  OrthantProblem v;
  v.b.reserve(p.dim());
  for (const auto& x : p.b) v.b.push_back(value_of(x));
  v.R = values_of(p.R);
  return v;
}

struct Permutation {
  std::vector<int> order;  // 0-based component indices, processing order

  static Permutation identity(std::size_t k) {
    Permutation p;
    p.order.resize(k);
    std::iota(p.order.begin(), p.order.end(), 0);
    return p;
  }
  std::size_t size() const { return order.size(); }
  bool operator==(const Permutation&) const = default;
};

void validate(const Permutation& perm, std::size_t k);

struct ApproxOptions {
  double clamp_floor = 1e-12;
  double ridge = 1e-10;
  int n_random_perms = 100;
};

void validate(const ApproxOptions& opts);

// Counts how often a factor hit the clamp floor.
struct ApproxStats {
  std::int64_t clamp_events = 0;
};

enum class Method { SJ1, SJA, ME, BME, Oracle };

std::string to_string(Method m);
Method parse_method(const std::string& name);

// Stable sort of indices by descending value.
Permutation reorder_descending(std::span<const double> values);

// Condition number estimate (eigenvalue ratio) of a symmetric matrix; +inf
// when it is not positive definite.
double symmetric_condition(const Matrix<double>& q);

namespace detail {

template <class T>
T clamp_factor(const T& x, double floor, ApproxStats* stats) {
  if (value_of(x) < floor) {
    if (stats) ++stats->clamp_events;
    return T(floor);
  }
  return x;
}

// Quantities shared by every SJ ordering of one problem: marginal
// probabilities, pairwise cdfs and indicator covariances.
template <class T>
struct SjTables {
  std::vector<T> marginal;
  Matrix<T> joint;  // Phi_2(b_i, b_j; r_ij)
  Matrix<T> cov;    // Cov(I_i, I_j), with Var(I_i) on the diagonal
};

template <class T>
SjTables<T> sj_tables(const BasicOrthant<T>& p) {
  const std::size_t k = p.dim();
  SjTables<T> t{std::vector<T>(k), Matrix<T>(k, k), Matrix<T>(k, k)};
  for (std::size_t i = 0; i < k; ++i) {
    t.marginal[i] = std_normal_cdf(p.b[i]);
    t.cov(i, i) = t.marginal[i] * (1.0 - t.marginal[i]);
  }
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) {
      t.joint(i, j) = t.joint(j, i) = bvn_cdf(p.b[i], p.b[j], p.R(i, j));
      t.cov(i, j) = t.cov(j, i) = t.joint(i, j) - t.marginal[i] * t.marginal[j];
    }
  return t;
}

template <class T>
T sj_from_tables(const SjTables<T>& t, const Permutation& perm, const ApproxOptions& opts,
                 ApproxStats* stats) {
  const std::size_t k = perm.size();
  const auto& o = perm.order;
  if (k == 1) return clamp_factor(t.marginal[o[0]], opts.clamp_floor, stats);

  T result = clamp_factor(t.joint(o[0], o[1]), opts.clamp_floor, stats);
  for (std::size_t step = 2; step < k; ++step) {
    // Linear projection of I_step on the indicators already conditioned on.
    const std::size_t m = step;
    Matrix<T> q(m, m);
    T trace(0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) q(i, j) = t.cov(o[i], o[j]);
      trace += q(i, i);
    }
    T projection = t.marginal[o[step]];
    if (value_of(trace) > 1e-300) {
      if (symmetric_condition(values_of(q)) > 1e12) {
        const T shift = opts.ridge * trace / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i) q(i, i) += shift;
      }
      Matrix<T> l;
      if (!cholesky(q, l)) fail(ErrorKind::SingularMatrix, "sj: indicator covariance Q is singular");
      std::vector<T> rhs(m);
      for (std::size_t i = 0; i < m; ++i) rhs[i] = 1.0 - t.marginal[o[i]];
      const std::vector<T> x = cholesky_solve(l, rhs);
      for (std::size_t i = 0; i < m; ++i) projection += t.cov(o[step], o[i]) * x[i];
    }
    result *= clamp_factor(projection, opts.clamp_floor, stats);
  }
  return result;
}

template <class T>
void check_problem_shape(const BasicOrthant<T>& p) {
  require(p.dim() >= 1, "orthant problem must have K >= 1");
  require(p.R.rows() == p.dim() && p.R.cols() == p.dim(), "orthant problem: R must be K x K");
}

}  // namespace detail

template <class T>
T sj_single(const BasicOrthant<T>& p, const Permutation& perm, const ApproxOptions& opts = {},
            ApproxStats* stats = nullptr) {
  detail::check_problem_shape(p);
  validate(perm, p.dim());
  return detail::sj_from_tables(detail::sj_tables(p), perm, opts, stats);
}

// All permutations in lexicographic order starting from the identity.
std::vector<Permutation> all_permutations(std::size_t k);

template <class T>
T sj_average_all(const BasicOrthant<T>& p, const ApproxOptions& opts = {},
                 ApproxStats* stats = nullptr) {
  detail::check_problem_shape(p);
  if (p.dim() > 8) fail(ErrorKind::DimensionTooLarge, "sj_average_all: K > 8");
  const auto tables = detail::sj_tables(p);
  const auto perms = all_permutations(p.dim());
  T sum(0.0);
  for (const auto& perm : perms) sum += detail::sj_from_tables(tables, perm, opts, stats);
  return sum / static_cast<double>(perms.size());
}

Permutation random_permutation(std::size_t k, std::mt19937_64& rng);

template <class T>
T sj_average_random(const BasicOrthant<T>& p, int n, std::mt19937_64& rng,
                    const ApproxOptions& opts = {}, ApproxStats* stats = nullptr) {
  detail::check_problem_shape(p);
  require(n >= 1, "sj_average_random: n must be >= 1");
  const auto tables = detail::sj_tables(p);
  T sum(0.0);
  for (int i = 0; i < n; ++i) {
    sum += detail::sj_from_tables(tables, random_permutation(p.dim(), rng), opts, stats);
  }
  return sum / static_cast<double>(n);
}

// Conditional state of the ME recursion after some components have been
// truncated: standardized limits z, conditional correlations r, the last
// Mills ratio and per-variable conditional scales.
template <class T>
struct MeState {
  std::vector<T> z;
  Matrix<T> r;
  T a{};
  std::vector<T> sigma;
};

namespace detail {

template <class T>
MeState<T> permuted_state(const BasicOrthant<T>& p, const Permutation& perm) {
  const std::size_t k = p.dim();
  MeState<T> s{std::vector<T>(k), Matrix<T>(k, k), T(0.0), std::vector<T>(k, T(1.0))};
  for (std::size_t i = 0; i < k; ++i) {
    s.z[i] = p.b[perm.order[i]];
    for (std::size_t j = 0; j < k; ++j) s.r(i, j) = p.R(perm.order[i], perm.order[j]);
  }
  return s;
}

// Moment-matching update after truncating component l from above.
template <class T>
void me_condition_on(MeState<T>& s, std::size_t l) {
  using std::sqrt;
  const std::size_t k = s.z.size();
  if (std::isinf(value_of(s.z[l]))) {
    s.a = T(0.0);  // +inf truncates nothing
    return;
  }
  s.a = mills_ratio(s.z[l]);
  const T c = s.a * (s.a + s.z[l]);
  for (std::size_t i = l + 1; i < k; ++i) {
    const T var = 1.0 - s.r(i, l) * s.r(i, l) * c;
    if (!(value_of(var) > 1e-14)) {
      fail(ErrorKind::NonPositiveVariance, "me: conditional variance is not positive");
    }
    s.sigma[i] = sqrt(var);
  }
  for (std::size_t i = l + 1; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      s.r(i, j) = s.r(j, i) = (s.r(i, j) - s.r(i, l) * s.r(j, l) * c) / (s.sigma[i] * s.sigma[j]);
    }
  }
  for (std::size_t i = l + 1; i < k; ++i) s.z[i] = (s.z[i] + s.a * s.r(i, l)) / s.sigma[i];
}

template <class T>
T bounded_corr(const T& r) {
  if (value_of(r) > 1.0) return T(1.0);
  if (value_of(r) < -1.0) return T(-1.0);
  return r;
}

}  // namespace detail

// Univariate ME: Phi(z_{1|0}) Phi(z_{2|1}) ... Phi(z_{K|K-1}) along `perm`.
template <class T>
T me_univariate(const BasicOrthant<T>& p, const Permutation& perm) {
  detail::check_problem_shape(p);
  validate(perm, p.dim());
  auto s = detail::permuted_state(p, perm);
  const std::size_t k = p.dim();
  T result(1.0);
  for (std::size_t l = 0; l < k; ++l) {
    if (value_of(s.z[l]) == -kInf) return T(0.0);
    result *= std_normal_cdf(s.z[l]);
    if (l + 1 < k) detail::me_condition_on(s, l);
  }
  return result;
}

// Greedy univariate-ME ordering: at each step the remaining component with
// the smallest conditional limit (smallest ME factor) goes next, then the rest
// are conditioned on it. If conditioning breaks down the remaining components
// follow in ascending order of their current limits.
Permutation me_greedy_order(const OrthantProblem& p);

// Bivariate ME: consecutive pairs of `perm` contribute Phi_2 factors and the
// remaining components are updated with the truncated bivariate moments; an
// odd last component contributes a univariate factor. Returns 0 when a pair
// region carries no representable mass.
template <class T>
T me_bivariate(const BasicOrthant<T>& p, const Permutation& perm) {
  using std::sqrt;
  detail::check_problem_shape(p);
  validate(perm, p.dim());
  auto s = detail::permuted_state(p, perm);
  const std::size_t k = p.dim();
  T result(1.0);
  std::size_t l = 0;
  while (l < k) {
    if (l + 1 == k) {
      result *= std_normal_cdf(s.z[l]);
      break;
    }
    if (value_of(s.z[l]) == -kInf || value_of(s.z[l + 1]) == -kInf) return T(0.0);
    const T rho = detail::bounded_corr(s.r(l, l + 1));
    const std::size_t rest = l + 2;
    if (rest >= k) {
      result *= bvn_cdf(s.z[l], s.z[l + 1], rho);
      break;
    }
    // A pair with no representable mass makes the whole product zero.
    if (value_of(bvn_cdf(value_of(s.z[l]), value_of(s.z[l + 1]), value_of(rho))) < 1e-300) {
      return T(0.0);
    }
    const auto tm = trunc_moments_2d(s.z[l], s.z[l + 1], rho);
    result *= tm.p;

    const T det = 1.0 - rho * rho;
    if (!(value_of(det) > 1e-14)) {
      fail(ErrorKind::NonPositiveVariance, "bme: conditioning pair is degenerate");
    }
    const T cov12 = tm.corr * sqrt(tm.var1 * tm.var2);
    // Regression of each remaining component on the pair.
    std::vector<T> beta1(k), beta2(k), mean(k), var(k);
    for (std::size_t i = rest; i < k; ++i) {
      const T& c1 = s.r(i, l);
      const T& c2 = s.r(i, l + 1);
      beta1[i] = (c1 - rho * c2) / det;
      beta2[i] = (c2 - rho * c1) / det;
      mean[i] = beta1[i] * tm.mean1 + beta2[i] * tm.mean2;
    }
    auto cond_cov = [&](std::size_t i, std::size_t j) {
      const T explained = beta1[i] * s.r(j, l) + beta2[i] * s.r(j, l + 1);
      const T truncated = beta1[i] * (beta1[j] * tm.var1 + beta2[j] * cov12) +
                          beta2[i] * (beta1[j] * cov12 + beta2[j] * tm.var2);
      return s.r(i, j) - explained + truncated;
    };
    for (std::size_t i = rest; i < k; ++i) {
      var[i] = cond_cov(i, i);
      if (!(value_of(var[i]) > 1e-14)) {
        fail(ErrorKind::NonPositiveVariance, "bme: conditional variance is not positive");
      }
      s.sigma[i] = sqrt(var[i]);
    }
    for (std::size_t i = rest; i < k; ++i)
      for (std::size_t j = i + 1; j < k; ++j)
        s.r(i, j) = s.r(j, i) = cond_cov(i, j) / (s.sigma[i] * s.sigma[j]);
    for (std::size_t i = rest; i < k; ++i) s.z[i] = (s.z[i] - mean[i]) / s.sigma[i];
    l += 2;
  }
  return result;
}

// Quadrature reference for K <= 4: one-dimensional adaptive Gauss-Kronrod
// integration over the smallest limit of the conditional (K-1)-dimensional
// probability, recursing down to the bivariate cdf.
double reference_cdf(const OrthantProblem& p, double tol = 1e-8);

// Problem of the remaining components given X_i = x_i for the listed indices.
OrthantProblem condition_on_values(const OrthantProblem& p, std::span<const int> fixed,
                                   std::span<const double> at);

struct ReferenceGradient {
  std::vector<double> db;  // d/d b_k
  Matrix<double> dR;       // d/d r_ij for i != j (symmetric; each pair once counts)
};

// d Phi_K / d b_k = phi(b_k) Phi_{K-1}(.| X_k = b_k);
// d Phi_K / d r_ij = phi_2(b_i, b_j; r_ij) Phi_{K-2}(.| X_i = b_i, X_j = b_j).
ReferenceGradient reference_cdf_gradient(const OrthantProblem& p, double tol = 1e-8);

template <int Cap>
Dual<Cap> reference_cdf(const BasicOrthant<Dual<Cap>>& p, double tol = 1e-8) {
  const OrthantProblem v = values_of(p);
  Dual<Cap> out(reference_cdf(v, tol));
  const ReferenceGradient g = reference_cdf_gradient(v, tol);
  const std::size_t k = p.dim();
  int n = 0;
  for (std::size_t i = 0; i < k; ++i) {
    n = std::max(n, p.b[i].n);
    for (std::size_t j = 0; j < k; ++j) n = std::max(n, p.R(i, j).n);
  }
  out.n = n;
  for (int d = 0; d < n; ++d) {
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      acc += g.db[i] * deriv_of(p.b[i], d);
      for (std::size_t j = i + 1; j < k; ++j) acc += g.dR(i, j) * deriv_of(p.R(i, j), d);
    }
    out.d[d] = acc;
  }
  return out;
}

// Crude Monte Carlo estimate of the orthant probability with its standard error.
struct MonteCarloEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};
MonteCarloEstimate monte_carlo_cdf(const OrthantProblem& p, std::int64_t draws, std::uint64_t seed);

// Dispatches one of the approximations (SJ-1 uses `perm`, ME/bME use it as the
// processing order, SJ-A ignores it).
template <class T>
T approximate(Method m, const BasicOrthant<T>& p, const Permutation& perm, const ApproxOptions& opts,
              ApproxStats* stats = nullptr, double oracle_tol = 1e-8) {
  switch (m) {
    case Method::SJ1: return sj_single(p, perm, opts, stats);
    case Method::SJA: return sj_average_all(p, opts, stats);
    case Method::ME: return me_univariate(p, perm);
    case Method::BME: return me_bivariate(p, perm);
    case Method::Oracle: return reference_cdf(p, oracle_tol);
  }
  fail(ErrorKind::InvalidArgument, "unknown approximation method");
}

}  // namespace macml
