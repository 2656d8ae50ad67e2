#pragma once

// BFGS maximization with a strong-Wolfe line search and optional box bounds.

#include <functional>
#include <string>
#include <vector>

namespace macml {

// Returns the objective at x and writes its gradient into grad (resized by
// the callee). A macml::Error with numerical() set is read as "-inf here":
// the trial point is rejected.
using Objective = std::function<double(const std::vector<double>& x, std::vector<double>& grad)>;

struct BfgsOptions {
  double grad_tol = 0.5e-5;  // on the infinity norm of the (projected) gradient
  int max_iter = 500;
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_line_evals = 40;
  // Infinity-norm length of the first trial step (along the gradient).
  double initial_step = 1.0;
  // Empty means unbounded; otherwise one entry per coordinate.
  std::vector<double> lower, upper;
};

struct BfgsResult {
  std::vector<double> x;
  double value = 0.0;
  std::vector<double> grad;
  double grad_norm = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  bool at_bound = false;        // some coordinate ends on a bound
  std::vector<double> history;  // objective at every accepted iterate
  std::string message;
};

BfgsResult bfgs_maximize(const Objective& f, std::vector<double> x0, const BfgsOptions& opts);

}  // namespace macml
