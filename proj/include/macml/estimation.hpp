#pragma once

// Maximum approximate composite marginal likelihood: the log-likelihood of a
// probit model with every choice probability replaced by one of the orthant
// approximations, its gradient, maximization, and the limiting
// (infinite-sample) pseudo-likelihood of the pure-ASC model.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "macml/mnp_model.hpp"
#include "macml/mvn_approx.hpp"
#include "macml/optimize.hpp"

namespace macml {

// Pure-ASC model with known covariance: theta = (asc_2, ..., asc_J), asc_1
// fixed at `asc1`.
struct AscModel {
  Matrix<double> sigma;
  double asc1 = 1.0;

  std::size_t alternatives() const { return sigma.rows(); }
};

// Mixed model: theta = (mu_1..mu_M, L packed row-major lower triangle).
struct MixedModel {
  std::size_t J = 0;
  std::size_t M = 0;
  double error_var = 0.5;
};

using Model = std::variant<AscModel, MixedModel>;

std::size_t parameter_count(const Model& model);

std::vector<double> pack(const MnpSpec& spec);
MnpSpec unpack(const AscModel& model, std::span<const double> theta);
std::vector<double> pack(const MixedMnpSpec& spec);
MixedMnpSpec unpack(const MixedModel& model, std::span<const double> theta);

// Flips columns of L so that its diagonal is nonnegative (Gamma is unchanged).
std::vector<double> normalize_chol_signs(const MixedModel& model, std::span<const double> theta);

enum class GradMode { Analytic, CentralDifference };

struct FitConfig {
  Method method = Method::SJ1;
  GradMode grad_mode = GradMode::Analytic;
  double grad_tol = 0.5e-5;
  int max_iter = 500;
  std::uint64_t perm_seed = 1;
  std::optional<OrderingRule> ordering;  // ME/bME; unset means default_ordering(method)
  ApproxOptions approx{};
  double oracle_tol = 1e-12;
};

void validate(const FitConfig& cfg);

// log(max(p, floor)), counting floor hits.
template <class T>
T clamped_log(const T& p, double floor, ApproxStats* stats) {
  using std::log;
  if (!(value_of(p) >= floor)) {
    if (stats) ++stats->clamp_events;
    return T(std::log(floor));
  }
  return log(p);
}

// The pseudo log-likelihood (1/N) sum_n log P~(y_n) of one dataset. Orderings
// (ME, bME) and permutations (SJ-1) are fixed when the object is built: the
// former from the utility means at `theta_order`, the latter drawn from
// cfg.perm_seed, one per observation.
class PseudoLikelihood {
 public:
  PseudoLikelihood(Model model, ChoiceDataset data, FitConfig cfg, std::span<const double> theta_order);

  std::size_t dim() const { return parameter_count(model_); }
  double value(std::span<const double> theta, ApproxStats* stats = nullptr) const;
  // Gradient per cfg.grad_mode.
  double value_and_gradient(std::span<const double> theta, std::vector<double>& grad,
                            ApproxStats* stats = nullptr) const;
  double central_difference(std::span<const double> theta, std::vector<double>& grad) const;

  const std::vector<Permutation>& orderings() const { return perms_; }
  const FitConfig& config() const { return cfg_; }
  const Model& model() const { return model_; }

  template <class T>
  T evaluate(const std::vector<T>& theta, ApproxStats* stats) const;

 private:
  struct Group {
    int choice;
    Permutation perm;
    std::size_t count;
  };

  Model model_;
  ChoiceDataset data_;
  FitConfig cfg_;
  std::vector<Permutation> perms_;  // one per observation
  std::vector<Group> groups_;       // pure-ASC: observations sharing (choice, perm)
};

struct FitResult {
  std::vector<double> theta;
  double ll = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  int evaluations = 0;
  double wall_time = 0.0;
  bool converged = false;
  std::int64_t clamp_count = 0;  // clamp events at the final estimate
  std::string message;
  std::uint64_t perm_seed = 0;
  Method method = Method::SJ1;
  OrderingRule ordering = OrderingRule::AscDescending;
};

// Maximizes the pseudo-likelihood from theta0; orderings are frozen at theta0.
FitResult fit(const Model& model, const ChoiceDataset& data, const FitConfig& cfg,
              std::span<const double> theta0);

// Limiting pseudo-likelihood of the pure-ASC model,
//   sum_j P_j(theta0) log P~_j(theta),
// with oracle weights. SJ-1 averages the log over every ordering, SJ-A takes
// the log of the averaged probability; ME/bME use the ordering frozen at the
// true model.
class LimitingLikelihood {
 public:
  LimitingLikelihood(const MnpSpec& truth, Method method, std::optional<OrderingRule> ordering = std::nullopt,
                     ApproxOptions opts = {}, double oracle_tol = 1e-12);

  std::size_t dim() const { return truth_.alternatives() - 1; }
  double value(std::span<const double> theta, ApproxStats* stats = nullptr) const;
  double value_and_gradient(std::span<const double> theta, std::vector<double>& grad,
                            ApproxStats* stats = nullptr) const;

  const std::vector<double>& weights() const { return weights_; }
  const MnpSpec& truth() const { return truth_; }

  template <class T>
  T evaluate(const std::vector<T>& theta, ApproxStats* stats) const;

 private:
  MnpSpec truth_;
  AscModel model_;
  Method method_;
  ApproxOptions opts_;
  double oracle_tol_;
  std::vector<double> weights_;
  std::vector<Permutation> orders_;  // per alternative
};

double limiting_loglik(std::span<const double> theta, const MnpSpec& truth, Method method,
                       const ApproxOptions& opts = {}, std::optional<OrderingRule> ordering = std::nullopt);

struct BiasResult {
  std::vector<double> theta_hat;
  std::vector<double> bias;  // theta_hat - theta0
  double max_abs_bias = 0.0;
  bool converged = false;
  bool at_bound = false;
  int iterations = 0;
  double grad_norm = 0.0;
  std::string message;
};

struct BiasOptions {
  double grad_tol = 1e-8;
  int max_iter = 500;
  double initial_step = 1.0;
  std::optional<OrderingRule> ordering;
  ApproxOptions approx{};
  double oracle_tol = 1e-12;
};

// Maximizes the limiting pseudo-likelihood from the true parameters inside
// [-box, box] per coordinate.
BiasResult asymptotic_bias(const MnpSpec& truth, Method method, double box, const BiasOptions& opts = {});

}  // namespace macml
