#include "macml/optimize.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

#include "macml/error.hpp"

namespace macml {

namespace {

constexpr double kInfinity = std::numeric_limits<double>::infinity();

// Minimization view of the objective: phi = -f, with numerical failures and
// non-finite values mapped to +inf.
struct Problem {
  const Objective& f;
  int evaluations = 0;

  double eval(const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    ++evaluations;
    std::vector<double> xs(x.data(), x.data() + x.size()), gs;
    double v;
    try {
      v = f(xs, gs);
    } catch (const Error& e) {
      if (!e.numerical()) throw;
      return kInfinity;
    }
    if (!std::isfinite(v) || gs.size() != xs.size()) return kInfinity;
    g.resize(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (!std::isfinite(gs[i])) return kInfinity;
      g(i) = -gs[i];
    }
    return -v;
  }
};

struct Point {
  double alpha = 0.0;
  double phi = 0.0;
  double dphi = 0.0;
  Eigen::VectorXd x, g;
};

// Minimizer of the cubic through (a, fa, da) and (b, fb, db), or bisection
// when it falls outside the safe part of [a, b].
double interpolate(const Point& a, const Point& b) {
  const double lo = std::min(a.alpha, b.alpha), hi = std::max(a.alpha, b.alpha);
  const double mid = 0.5 * (lo + hi);
  if (!std::isfinite(a.phi) || !std::isfinite(b.phi)) return mid;
  const double d1 = a.dphi + b.dphi - 3.0 * (a.phi - b.phi) / (a.alpha - b.alpha);
  const double disc = d1 * d1 - a.dphi * b.dphi;
  if (disc < 0.0) return mid;
  const double d2 = std::copysign(std::sqrt(disc), b.alpha - a.alpha);
  const double t = b.alpha - (b.alpha - a.alpha) * (b.dphi + d2 - d1) / (b.dphi - a.dphi + 2.0 * d2);
  const double margin = 0.1 * (hi - lo);
  if (!std::isfinite(t) || t < lo + margin || t > hi - margin) return mid;
  return t;
}

struct LineSearch {
  Problem& prob;
  const BfgsOptions& opts;

  Point at(const Eigen::VectorXd& x, const Eigen::VectorXd& d, double alpha) {
    Point p;
    p.alpha = alpha;
    p.x = x + alpha * d;
    p.phi = prob.eval(p.x, p.g);
    p.dphi = std::isfinite(p.phi) ? p.g.dot(d) : kInfinity;
    return p;
  }

  // Strong Wolfe search on [0, alpha_max]. Returns false on failure. When
  // alpha_max binds, a point at alpha_max satisfying sufficient decrease with
  // a still-negative slope is accepted (the step hits the box).
  bool search(const Point& start, const Eigen::VectorXd& d, double alpha0, double alpha_max, Point& out) {
    const double c1 = opts.c1, c2 = opts.c2;
    Point prev = start;
    double alpha = std::min(alpha0, alpha_max);
    int evals = 0;
    for (;;) {
      Point cur = at(start.x, d, alpha);
      if (++evals > opts.max_line_evals) return false;
      const bool armijo = cur.phi <= start.phi + c1 * alpha * start.dphi;
      if (!armijo || (evals > 1 && cur.phi >= prev.phi)) return zoom(start, d, prev, cur, evals, out);
      if (std::abs(cur.dphi) <= -c2 * start.dphi) {
        out = cur;
        return true;
      }
      if (cur.dphi >= 0.0) return zoom(start, d, cur, prev, evals, out);
      if (alpha >= alpha_max) {
        out = cur;
        return true;
      }
      prev = cur;
      alpha = std::min(2.0 * alpha, alpha_max);
    }
  }

  bool zoom(const Point& start, const Eigen::VectorXd& d, Point lo, Point hi, int evals, Point& out) {
    const double c1 = opts.c1, c2 = opts.c2;
    while (evals++ < opts.max_line_evals) {
      const double alpha = interpolate(lo, hi);
      if (std::abs(hi.alpha - lo.alpha) < 1e-16 * std::max(1.0, lo.alpha)) break;
      Point cur = at(start.x, d, alpha);
      if (cur.phi > start.phi + c1 * alpha * start.dphi || cur.phi >= lo.phi) {
        hi = cur;
        continue;
      }
      if (std::abs(cur.dphi) <= -c2 * start.dphi) {
        out = cur;
        return true;
      }
      if (cur.dphi * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
      lo = cur;
    }
    // Accept the best sufficient-decrease point found, if any moved.
    if (lo.alpha > 0.0 && lo.phi < start.phi) {
      out = lo;
      return true;
    }
    return false;
  }
};

}  // namespace

BfgsResult bfgs_maximize(const Objective& f, std::vector<double> x0, const BfgsOptions& opts) {
  const Eigen::Index n = static_cast<Eigen::Index>(x0.size());
  require(n >= 1, "bfgs: empty parameter vector");
  require(opts.grad_tol > 0.0, "bfgs: grad_tol must be positive");
  require(opts.max_iter >= 0, "bfgs: max_iter must be >= 0");
  require(opts.initial_step > 0.0, "bfgs: initial_step must be positive");
  const bool bounded = !opts.lower.empty() || !opts.upper.empty();
  Eigen::VectorXd lower = Eigen::VectorXd::Constant(n, -kInfinity);
  Eigen::VectorXd upper = Eigen::VectorXd::Constant(n, kInfinity);
  if (bounded) {
    require(opts.lower.size() == x0.size() && opts.upper.size() == x0.size(),
            "bfgs: bounds must have one entry per coordinate");
    for (Eigen::Index i = 0; i < n; ++i) {
      lower(i) = opts.lower[i];
      upper(i) = opts.upper[i];
      require(lower(i) <= upper(i), "bfgs: lower bound above upper bound");
      x0[i] = std::clamp(x0[i], lower(i), upper(i));
    }
  }

  Problem prob{f};
  LineSearch ls{prob, opts};
  BfgsResult res;
  Point cur;
  cur.x = Eigen::Map<const Eigen::VectorXd>(x0.data(), n);
  cur.phi = prob.eval(cur.x, cur.g);
  if (!std::isfinite(cur.phi)) {
    res.x = x0;
    res.value = -kInfinity;
    res.evaluations = prob.evaluations;
    res.message = "objective is not finite at the starting point";
    return res;
  }

  auto active = [&](Eigen::Index i) {
    return (cur.x(i) <= lower(i) && cur.g(i) > 0.0) || (cur.x(i) >= upper(i) && cur.g(i) < 0.0);
  };
  auto projected_norm = [&] {
    double m = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (!active(i)) m = std::max(m, std::abs(cur.g(i)));
    return m;
  };

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  bool fresh = true;  // H is (a multiple of) the identity
  res.history.push_back(-cur.phi);
  std::string message;
  bool converged = false;
  int iter = 0;
  for (;; ++iter) {
    if (projected_norm() <= opts.grad_tol) {
      converged = true;
      break;
    }
    if (iter >= opts.max_iter) {
      message = "iteration limit reached";
      break;
    }
    Eigen::VectorXd d = -H * cur.g;
    for (Eigen::Index i = 0; i < n; ++i)
      if (active(i)) d(i) = 0.0;
    if (!(cur.g.dot(d) < 0.0)) {
      H.setIdentity();
      fresh = true;
      d = -cur.g;
      for (Eigen::Index i = 0; i < n; ++i)
        if (active(i)) d(i) = 0.0;
    }
    double alpha_max = kInfinity;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (d(i) > 0.0) alpha_max = std::min(alpha_max, (upper(i) - cur.x(i)) / d(i));
      if (d(i) < 0.0) alpha_max = std::min(alpha_max, (lower(i) - cur.x(i)) / d(i));
    }
    if (!(alpha_max > 0.0)) {
      message = "no feasible ascent direction";
      break;
    }
    // The first step along -g is scaled to initial_step.
    const double alpha0 =
        fresh && iter == 0 ? std::min(1.0, opts.initial_step / std::max(d.lpNorm<Eigen::Infinity>(), 1e-300)) : 1.0;
    Point start = cur;
    start.alpha = 0.0;
    start.dphi = cur.g.dot(d);
    Point next;
    if (!ls.search(start, d, alpha0, alpha_max, next)) {
      if (!fresh) {
        H.setIdentity();
        fresh = true;
        --iter;
        continue;
      }
      message = "line search failed";
      break;
    }
    bool hit_bound = false;
    if (bounded) {
      for (Eigen::Index i = 0; i < n; ++i) {
        if (next.x(i) <= lower(i) || next.x(i) >= upper(i)) hit_bound = true;
        next.x(i) = std::clamp(next.x(i), lower(i), upper(i));
      }
    }
    const Eigen::VectorXd s = next.x - cur.x;
    const Eigen::VectorXd y = next.g - cur.g;
    cur = next;
    res.history.push_back(-cur.phi);
    const double sy = s.dot(y);
    if (hit_bound) {
      H.setIdentity();
      fresh = true;
    } else if (sy > 1e-12 * s.norm() * y.norm()) {
      if (fresh) H *= sy / y.squaredNorm();
      const double rho = 1.0 / sy;
      const Eigen::VectorXd hy = H * y;
      H += (rho * rho * y.dot(hy) + rho) * s * s.transpose() - rho * (hy * s.transpose() + s * hy.transpose());
      fresh = false;
    }
  }

  res.x.assign(cur.x.data(), cur.x.data() + n);
  res.value = -cur.phi;
  res.grad.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) res.grad[i] = -cur.g(i);
  res.grad_norm = projected_norm();
  res.iterations = iter;
  res.evaluations = prob.evaluations;
  res.converged = converged;
  for (Eigen::Index i = 0; i < n; ++i)
    if (bounded && (cur.x(i) <= lower(i) || cur.x(i) >= upper(i))) res.at_bound = true;
  res.message = converged ? "converged" : message;
  return res;
}

}  // namespace macml
