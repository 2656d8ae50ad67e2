#include "macml/mvn_approx.hpp"

#include <Eigen/Dense>

#include <array>
#include <queue>
#include <sstream>

#include "macml/quadrature.hpp"

namespace macml {

namespace {

Eigen::MatrixXd to_eigen(const Matrix<double>& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return e;
}

}  // namespace

void validate(const OrthantProblem& p) {
  const std::size_t k = p.dim();
  require(k >= 1, "orthant problem: K must be >= 1");
  if (p.R.rows() != k || p.R.cols() != k) {
    std::ostringstream os;
    os << "orthant problem: R is " << p.R.rows() << "x" << p.R.cols() << " but b has length " << k;
    fail(ErrorKind::InvalidArgument, os.str());
  }
  for (std::size_t i = 0; i < k; ++i) {
    require(!std::isnan(p.b[i]), "orthant problem: b contains NaN");
    if (std::abs(p.R(i, i) - 1.0) > 1e-12) {
      std::ostringstream os;
      os << "orthant problem: R is not unit-diagonal (R[" << i << "][" << i << "] = " << p.R(i, i) << ")";
      fail(ErrorKind::InvalidArgument, os.str());
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (std::abs(p.R(i, j) - p.R(j, i)) > 1e-12) {
        std::ostringstream os;
        os << "orthant problem: R is not symmetric at (" << i << ", " << j << ")";
        fail(ErrorKind::InvalidArgument, os.str());
      }
    }
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_eigen(p.R), Eigen::EigenvaluesOnly);
  if (!(es.eigenvalues().minCoeff() > 1e-12)) {
    std::ostringstream os;
    os << "orthant problem: R is not positive definite (smallest eigenvalue "
       << es.eigenvalues().minCoeff() << ")";
    fail(ErrorKind::InvalidArgument, os.str());
  }
}

void validate(const Permutation& perm, std::size_t k) {
  require(perm.size() == k, "permutation length does not match problem dimension");
  std::vector<char> seen(k, 0);
  for (int i : perm.order) {
    require(i >= 0 && static_cast<std::size_t>(i) < k && !seen[i], "permutation is not a bijection");
    seen[i] = 1;
  }
}

void validate(const ApproxOptions& opts) {
  require(opts.clamp_floor > 0.0 && opts.clamp_floor < 1e-6, "clamp_floor must lie in (0, 1e-6)");
  require(opts.ridge >= 0.0, "ridge must be >= 0");
  require(opts.n_random_perms >= 1, "n_random_perms must be >= 1");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::SJ1: return "SJ-1";
    case Method::SJA: return "SJ-A";
    case Method::ME: return "ME";
    case Method::BME: return "bME";
    case Method::Oracle: return "oracle";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::SJ1, Method::SJA, Method::ME, Method::BME, Method::Oracle}) {
    if (to_string(m) == name) return m;
  }
  fail(ErrorKind::InvalidArgument, "unknown method '" + name + "' (expected SJ-1, SJ-A, ME, bME or oracle)");
}

Permutation reorder_descending(std::span<const double> values) {
  Permutation p = Permutation::identity(values.size());
  std::stable_sort(p.order.begin(), p.order.end(),
                   [&](int a, int b) { return values[a] > values[b]; });
  return p;
}

double symmetric_condition(const Matrix<double>& q) {
  if (q.rows() == 1) return q(0, 0) > 0.0 ? 1.0 : kInf;
  if (q.rows() == 2) {
    const double tr = q(0, 0) + q(1, 1);
    const double det = q(0, 0) * q(1, 1) - q(0, 1) * q(1, 0);
    const double disc = std::sqrt(std::max(0.25 * tr * tr - det, 0.0));
    const double hi = 0.5 * tr + disc;
    const double lo = det / hi;  // avoids cancellation in 0.5 tr - disc
    return (lo > 0.0 && hi > 0.0) ? hi / lo : kInf;
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_eigen(q), Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  return lo > 0.0 ? hi / lo : kInf;
}

std::vector<Permutation> all_permutations(std::size_t k) {
  std::vector<Permutation> out;
  Permutation p = Permutation::identity(k);
  do {
    out.push_back(p);
  } while (std::next_permutation(p.order.begin(), p.order.end()));
  return out;
}

Permutation random_permutation(std::size_t k, std::mt19937_64& rng) {
  Permutation p = Permutation::identity(k);
  for (std::size_t i = k; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(p.order[i - 1], p.order[pick(rng)]);
  }
  return p;
}

OrthantProblem condition_on_values(const OrthantProblem& p, std::span<const int> fixed,
                                   std::span<const double> at) {
  const std::size_t k = p.dim();
  const std::size_t f = fixed.size();
  require(f == at.size() && f < k, "condition_on_values: bad index set");
  std::vector<int> rest;
  for (std::size_t i = 0; i < k; ++i) {
    if (std::find(fixed.begin(), fixed.end(), static_cast<int>(i)) == fixed.end()) rest.push_back(i);
  }
  Eigen::MatrixXd rff(f, f), rrf(rest.size(), f);
  Eigen::VectorXd xf(f);
  for (std::size_t i = 0; i < f; ++i) {
    xf(i) = at[i];
    for (std::size_t j = 0; j < f; ++j) rff(i, j) = p.R(fixed[i], fixed[j]);
    for (std::size_t r = 0; r < rest.size(); ++r) rrf(r, i) = p.R(rest[r], fixed[i]);
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(rff);
  const Eigen::MatrixXd beta = llt.solve(rrf.transpose()).transpose();  // rest x f
  const Eigen::VectorXd mean = beta * xf;

  OrthantProblem out;
  const std::size_t m = rest.size();
  out.b.resize(m);
  out.R = Matrix<double>(m, m);
  std::vector<double> sd(m);
  Eigen::MatrixXd cov(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      cov(i, j) = p.R(rest[i], rest[j]) - beta.row(i).dot(rrf.row(j));
  for (std::size_t i = 0; i < m; ++i) {
    if (!(cov(i, i) > 0.0)) fail(ErrorKind::NonPositiveVariance, "conditional variance is not positive");
    sd[i] = std::sqrt(cov(i, i));
    out.b[i] = (p.b[rest[i]] - mean(i)) / sd[i];
  }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      out.R(i, j) = i == j ? 1.0 : std::clamp(cov(i, j) / (sd[i] * sd[j]), -1.0, 1.0);
  return out;
}

namespace {

constexpr double kCut = 9.0;  // Phi(-9) ~ 1.1e-19

// Drops components with +inf limits; returns false when some limit is -inf
// (probability zero).
bool drop_infinite(const OrthantProblem& p, OrthantProblem& out) {
  std::vector<int> keep;
  for (std::size_t i = 0; i < p.dim(); ++i) {
    if (p.b[i] == -kInf) return false;
    if (p.b[i] != kInf) keep.push_back(i);
  }
  out.b.clear();
  out.R = Matrix<double>(keep.size(), keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out.b.push_back(p.b[keep[i]]);
    for (std::size_t j = 0; j < keep.size(); ++j) out.R(i, j) = p.R(keep[i], keep[j]);
  }
  return true;
}

double reference_impl(const OrthantProblem& raw, double tol) {
  OrthantProblem p;
  if (!drop_infinite(raw, p)) return 0.0;
  const std::size_t k = p.dim();
  if (k == 0) return 1.0;
  if (k == 1) return std_normal_cdf(p.b[0]);
  if (k == 2) return bvn_cdf(p.b[0], p.b[1], std::clamp(p.R(0, 1), -1.0, 1.0));

  // Integrate over the component with the smallest limit.
  const int j = static_cast<int>(std::min_element(p.b.begin(), p.b.end()) - p.b.begin());
  const double hi = std::min(p.b[j], kCut);
  if (hi <= -kCut) return 0.0;
  const std::array<int, 1> fixed{j};
  auto integrand = [&](double x) {
    const std::array<double, 1> at{x};
    return std_normal_pdf(x) * reference_impl(condition_on_values(p, fixed, at), 0.5 * tol);
  };
  const double val = integrate_adaptive(integrand, -kCut, hi, 0.5 * tol);
  return std::clamp(val, 0.0, 1.0);
}

}  // namespace

double reference_cdf(const OrthantProblem& p, double tol) {
  if (p.dim() > 4) fail(ErrorKind::DimensionTooLarge, "reference_cdf: K > 4 is not supported");
  require(tol > 0.0, "reference_cdf: tolerance must be positive");
  validate(p);
  return reference_impl(p, tol);
}

ReferenceGradient reference_cdf_gradient(const OrthantProblem& p, double tol) {
  if (p.dim() > 4) fail(ErrorKind::DimensionTooLarge, "reference_cdf: K > 4 is not supported");
  validate(p);
  const std::size_t k = p.dim();
  ReferenceGradient g{std::vector<double>(k, 0.0), Matrix<double>(k, k)};
  for (std::size_t i = 0; i < k; ++i) {
    if (std::isinf(p.b[i])) continue;
    const std::array<int, 1> fixed{static_cast<int>(i)};
    const std::array<double, 1> at{p.b[i]};
    const double rest = k == 1 ? 1.0 : reference_impl(condition_on_values(p, fixed, at), tol);
    g.db[i] = std_normal_pdf(p.b[i]) * rest;
  }
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) {
      if (std::isinf(p.b[i]) || std::isinf(p.b[j])) continue;
      const std::array<int, 2> fixed{static_cast<int>(i), static_cast<int>(j)};
      const std::array<double, 2> at{p.b[i], p.b[j]};
      const double rest = k == 2 ? 1.0 : reference_impl(condition_on_values(p, fixed, at), tol);
      g.dR(i, j) = g.dR(j, i) = bvn_pdf(p.b[i], p.b[j], p.R(i, j)) * rest;
    }
  return g;
}

MonteCarloEstimate monte_carlo_cdf(const OrthantProblem& p, std::int64_t draws, std::uint64_t seed) {
  validate(p);
  require(draws >= 2, "monte_carlo_cdf: need at least two draws");
  const std::size_t k = p.dim();
  const Eigen::LLT<Eigen::MatrixXd> llt(to_eigen(p.R));
  const Eigen::MatrixXd l = llt.matrixL();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> z(k);
  std::int64_t hits = 0;
  for (std::int64_t n = 0; n < draws; ++n) {
    for (auto& zi : z) zi = normal(rng);
    bool inside = true;
    for (std::size_t i = 0; i < k && inside; ++i) {
      double x = 0.0;
      for (std::size_t j = 0; j <= i; ++j) x += l(i, j) * z[j];
      inside = x <= p.b[i];
    }
    // Later coordinates still consume their draws above, keeping the stream aligned.
    hits += inside ? 1 : 0;
  }
  const double est = static_cast<double>(hits) / static_cast<double>(draws);
  return {est, std::sqrt(est * (1.0 - est) / static_cast<double>(draws))};
}

Permutation me_greedy_order(const OrthantProblem& p) {
  detail::check_problem_shape(p);
  const std::size_t k = p.dim();
  Permutation perm = Permutation::identity(k);
  auto s = detail::permuted_state(p, perm);
  auto swap_positions = [&](std::size_t a, std::size_t b) {
    if (a == b) return;
    std::swap(perm.order[a], perm.order[b]);
    std::swap(s.z[a], s.z[b]);
    std::swap(s.sigma[a], s.sigma[b]);
    for (std::size_t c = 0; c < k; ++c) std::swap(s.r(a, c), s.r(b, c));
    for (std::size_t c = 0; c < k; ++c) std::swap(s.r(c, a), s.r(c, b));
  };
  for (std::size_t l = 0; l < k; ++l) {
    std::size_t best = l;
    for (std::size_t j = l + 1; j < k; ++j)
      if (s.z[j] < s.z[best]) best = j;
    swap_positions(l, best);
    if (l + 1 == k) break;
    try {
      detail::me_condition_on(s, l);
    } catch (const Error& e) {
      if (!e.numerical()) throw;
      for (std::size_t a = l + 1; a < k; ++a)
        for (std::size_t b = a + 1; b < k; ++b)
          if (s.z[b] < s.z[a]) swap_positions(a, b);
      break;
    }
  }
  return perm;
}

}  // namespace macml
