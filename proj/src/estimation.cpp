#include "macml/estimation.hpp"

#include <chrono>
#include <cmath>
#include <map>

namespace macml {

namespace {

template <class T>
Matrix<T> lift(const Matrix<double>& a) {
  Matrix<T> out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = T(a(i, j));
  return out;
}

std::size_t packed_size(std::size_t m) { return m * (m + 1) / 2; }

template <class T>
Matrix<T> unpack_chol(std::span<const T> packed, std::size_t m) {
  Matrix<T> l(m, m);
  std::size_t k = 0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j <= i; ++j) l(i, j) = packed[k++];
  return l;
}

// Evaluates self.evaluate<Dual<Cap>> with theta seeded as independent variables.
template <int Cap, class Self>
double run_dual(const Self& self, std::span<const double> theta, std::vector<double>& grad, ApproxStats* stats) {
  using D = Dual<Cap>;
  const int n = static_cast<int>(theta.size());
  std::vector<D> t;
  t.reserve(n);
  for (int i = 0; i < n; ++i) t.push_back(D::variable(theta[i], i, n));
  const D v = self.template evaluate<D>(t, stats);
  grad.assign(n, 0.0);
  for (int i = 0; i < v.n; ++i) grad[i] = v.d[i];
  return v.v;
}

template <class Self>
double dual_gradient(const Self& self, std::span<const double> theta, std::vector<double>& grad, ApproxStats* stats) {
  const std::size_t n = theta.size();
  if (n <= 8) return run_dual<8>(self, theta, grad, stats);
  if (n <= 24) return run_dual<24>(self, theta, grad, stats);
  if (n <= 64) return run_dual<64>(self, theta, grad, stats);
  fail(ErrorKind::DimensionTooLarge, "analytic gradient supports at most 64 parameters; use central differences");
}

template <class F>
void central_differences(F&& f, std::span<const double> theta, std::vector<double>& grad) {
  std::vector<double> x(theta.begin(), theta.end());
  grad.assign(x.size(), 0.0);
  for (std::size_t m = 0; m < x.size(); ++m) {
    const double h = 1e-6 * std::max(1.0, std::abs(theta[m]));
    x[m] = theta[m] + h;
    const double up = f(x);
    x[m] = theta[m] - h;
    const double down = f(x);
    x[m] = theta[m];
    grad[m] = (up - down) / (2.0 * h);
  }
}

}  // namespace

std::size_t parameter_count(const Model& model) {
  if (const auto* a = std::get_if<AscModel>(&model)) return a->alternatives() - 1;
  const auto& m = std::get<MixedModel>(model);
  return m.M + packed_size(m.M);
}

std::vector<double> pack(const MnpSpec& spec) {
  require(spec.alternatives() >= 2, "pack: need at least two alternatives");
  return {spec.ascs.begin() + 1, spec.ascs.end()};
}

MnpSpec unpack(const AscModel& model, std::span<const double> theta) {
  require(theta.size() + 1 == model.alternatives(), "unpack: theta length must be J - 1");
  MnpSpec s;
  s.ascs.push_back(model.asc1);
  s.ascs.insert(s.ascs.end(), theta.begin(), theta.end());
  s.sigma = model.sigma;
  return s;
}

std::vector<double> pack(const MixedMnpSpec& spec) {
  std::vector<double> out = spec.mu;
  const std::size_t m = spec.covariates();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j <= i; ++j) out.push_back(spec.gamma_chol(i, j));
  return out;
}

MixedMnpSpec unpack(const MixedModel& model, std::span<const double> theta) {
  require(theta.size() == model.M + packed_size(model.M), "unpack: theta length must be M + M(M+1)/2");
  MixedMnpSpec s;
  s.J = model.J;
  s.mu.assign(theta.begin(), theta.begin() + model.M);
  s.gamma_chol = unpack_chol(theta.subspan(model.M), model.M);
  s.error_var = model.error_var;
  return s;
}

std::vector<double> normalize_chol_signs(const MixedModel& model, std::span<const double> theta) {
  MixedMnpSpec s = unpack(model, theta);
  for (std::size_t j = 0; j < model.M; ++j) {
    if (s.gamma_chol(j, j) >= 0.0) continue;
    for (std::size_t i = j; i < model.M; ++i) s.gamma_chol(i, j) = -s.gamma_chol(i, j);
  }
  return pack(s);
}

void validate(const FitConfig& cfg) {
  require(cfg.grad_tol > 0.0, "fit config: grad_tol must be positive");
  require(cfg.max_iter >= 0, "fit config: max_iter must be >= 0");
  require(cfg.oracle_tol > 0.0, "fit config: oracle_tol must be positive");
  validate(cfg.approx);
}

PseudoLikelihood::PseudoLikelihood(Model model, ChoiceDataset data, FitConfig cfg,
                                   std::span<const double> theta_order)
    : model_(std::move(model)), data_(std::move(data)), cfg_(cfg) {
  validate(cfg_);
  validate(data_);
  require(theta_order.size() == dim(), "pseudo-likelihood: theta has the wrong length");
  const std::size_t k = data_.J - 1;
  const bool asc = std::holds_alternative<AscModel>(model_);
  if (asc) {
    require(!data_.mixed() && std::get<AscModel>(model_).alternatives() == data_.J,
            "pseudo-likelihood: pure-ASC model needs J alternatives and no designs");
  } else {
    const auto& mm = std::get<MixedModel>(model_);
    require(data_.mixed() && mm.J == data_.J && data_.designs.front().cols() == mm.M,
            "pseudo-likelihood: mixed model dimensions do not match the dataset");
  }

  perms_.reserve(data_.size());
  if (cfg_.method == Method::SJ1) {
    std::mt19937_64 rng(cfg_.perm_seed);
    for (std::size_t n = 0; n < data_.size(); ++n) perms_.push_back(random_permutation(k, rng));
  } else if (cfg_.method == Method::ME || cfg_.method == Method::BME) {
    const OrderingRule rule = cfg_.ordering.value_or(default_ordering(cfg_.method));
    if (asc) {
      const auto m = moments_of(unpack(std::get<AscModel>(model_), theta_order));
      for (int c : data_.choices) perms_.push_back(component_order(m, c, rule));
    } else {
      const auto spec = unpack(std::get<MixedModel>(model_), theta_order);
      for (std::size_t n = 0; n < data_.size(); ++n) {
        perms_.push_back(component_order(mixed_to_spec(spec, data_.designs[n]), data_.choices[n], rule));
      }
    }
  } else {
    perms_.assign(data_.size(), Permutation::identity(k));
  }

  if (asc) {
    std::map<std::pair<int, std::vector<int>>, std::size_t> counts;
    for (std::size_t n = 0; n < data_.size(); ++n) ++counts[{data_.choices[n], perms_[n].order}];
    for (const auto& [key, count] : counts) groups_.push_back({key.first, Permutation{key.second}, count});
  }
}

template <class T>
T PseudoLikelihood::evaluate(const std::vector<T>& theta, ApproxStats* stats) const {
  require(theta.size() == dim(), "pseudo-likelihood: theta has the wrong length");
  const double floor = cfg_.approx.clamp_floor;
  T sum(0.0);
  if (const auto* asc = std::get_if<AscModel>(&model_)) {
    UtilityMoments<T> m{{T(asc->asc1)}, lift<T>(asc->sigma)};
    m.mean.insert(m.mean.end(), theta.begin(), theta.end());
    for (const auto& g : groups_) {
      const T p = approximate(cfg_.method, to_orthant(m, g.choice), g.perm, cfg_.approx, stats, cfg_.oracle_tol);
      sum += static_cast<double>(g.count) * clamped_log(p, floor, stats);
    }
  } else {
    const auto& mm = std::get<MixedModel>(model_);
    const std::vector<T> mu(theta.begin(), theta.begin() + mm.M);
    const Matrix<T> l = unpack_chol(std::span<const T>(theta).subspan(mm.M), mm.M);
    const Matrix<T> gamma = gamma_from_chol(l);
    for (std::size_t n = 0; n < data_.size(); ++n) {
      const auto m = mixed_moments(data_.designs[n], mu, gamma, mm.error_var);
      const T p = approximate(cfg_.method, to_orthant(m, data_.choices[n]), perms_[n], cfg_.approx, stats,
                              cfg_.oracle_tol);
      sum += clamped_log(p, floor, stats);
    }
  }
  return sum / static_cast<double>(data_.size());
}

double PseudoLikelihood::value(std::span<const double> theta, ApproxStats* stats) const {
  return evaluate(std::vector<double>(theta.begin(), theta.end()), stats);
}

double PseudoLikelihood::central_difference(std::span<const double> theta, std::vector<double>& grad) const {
  central_differences([&](const std::vector<double>& x) { return evaluate(x, nullptr); }, theta, grad);
  return value(theta);
}

double PseudoLikelihood::value_and_gradient(std::span<const double> theta, std::vector<double>& grad,
                                            ApproxStats* stats) const {
  if (cfg_.grad_mode == GradMode::CentralDifference) {
    central_difference(theta, grad);
    return value(theta, stats);
  }
  return dual_gradient(*this, theta, grad, stats);
}

FitResult fit(const Model& model, const ChoiceDataset& data, const FitConfig& cfg, std::span<const double> theta0) {
  const auto started = std::chrono::steady_clock::now();
  const PseudoLikelihood ll(model, data, cfg, theta0);
  BfgsOptions opts;
  opts.grad_tol = cfg.grad_tol;
  opts.max_iter = cfg.max_iter;
  const Objective objective = [&](const std::vector<double>& x, std::vector<double>& g) {
    return ll.value_and_gradient(x, g);
  };
  const BfgsResult r = bfgs_maximize(objective, {theta0.begin(), theta0.end()}, opts);

  FitResult out;
  out.theta = r.x;
  if (const auto* mm = std::get_if<MixedModel>(&model)) out.theta = normalize_chol_signs(*mm, r.x);
  out.ll = r.value;
  out.grad_norm = r.grad_norm;
  out.iterations = r.iterations;
  out.evaluations = r.evaluations;
  out.converged = r.converged;
  out.message = r.message;
  out.perm_seed = cfg.perm_seed;
  out.method = cfg.method;
  out.ordering = cfg.ordering.value_or(default_ordering(cfg.method));
  if (std::isfinite(r.value)) {
    ApproxStats stats;
    ll.value(r.x, &stats);
    out.clamp_count = stats.clamp_events;
  }
  out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

LimitingLikelihood::LimitingLikelihood(const MnpSpec& truth, Method method, std::optional<OrderingRule> ordering,
                                       ApproxOptions opts, double oracle_tol)
    : truth_(truth), method_(method), opts_(opts), oracle_tol_(oracle_tol) {
  validate(truth_);
  validate(opts_);
  model_.sigma = truth_.sigma;
  model_.asc1 = truth_.ascs[0];
  const auto m = moments_of(truth_);
  weights_ = oracle_probabilities(m, oracle_tol_);
  const std::size_t J = truth_.alternatives();
  const OrderingRule rule = ordering.value_or(default_ordering(method));
  for (std::size_t j = 0; j < J; ++j) {
    orders_.push_back(method == Method::ME || method == Method::BME ? component_order(m, j, rule)
                                                                    : Permutation::identity(J - 1));
  }
  if (method == Method::SJ1 || method == Method::SJA) {
    require(J - 1 <= 8, "limiting likelihood: SJ enumeration needs J <= 9");
  }
}

template <class T>
T LimitingLikelihood::evaluate(const std::vector<T>& theta, ApproxStats* stats) const {
  require(theta.size() == dim(), "limiting likelihood: theta has the wrong length");
  UtilityMoments<T> m{{T(model_.asc1)}, lift<T>(model_.sigma)};
  m.mean.insert(m.mean.end(), theta.begin(), theta.end());
  const double floor = opts_.clamp_floor;
  T sum(0.0);
  for (std::size_t j = 0; j < weights_.size(); ++j) {
    if (weights_[j] == 0.0) continue;
    const auto p = to_orthant(m, j);
    T logp(0.0);
    if (method_ == Method::SJ1) {
      const auto tables = detail::sj_tables(p);
      const auto perms = all_permutations(p.dim());
      for (const auto& perm : perms) logp += clamped_log(detail::sj_from_tables(tables, perm, opts_, stats), floor, stats);
      logp /= static_cast<double>(perms.size());
    } else {
      logp = clamped_log(approximate(method_, p, orders_[j], opts_, stats, oracle_tol_), floor, stats);
    }
    sum += weights_[j] * logp;
  }
  return sum;
}

double LimitingLikelihood::value(std::span<const double> theta, ApproxStats* stats) const {
  return evaluate(std::vector<double>(theta.begin(), theta.end()), stats);
}

double LimitingLikelihood::value_and_gradient(std::span<const double> theta, std::vector<double>& grad,
                                              ApproxStats* stats) const {
  return dual_gradient(*this, theta, grad, stats);
}

double limiting_loglik(std::span<const double> theta, const MnpSpec& truth, Method method,
                       const ApproxOptions& opts, std::optional<OrderingRule> ordering) {
  return LimitingLikelihood(truth, method, ordering, opts).value(theta);
}

BiasResult asymptotic_bias(const MnpSpec& truth, Method method, double box, const BiasOptions& opts) {
  require(box > 0.0, "asymptotic_bias: box must be positive");
  const LimitingLikelihood ll(truth, method, opts.ordering, opts.approx, opts.oracle_tol);
  const std::vector<double> theta0 = pack(truth);
  BfgsOptions bo;
  bo.grad_tol = opts.grad_tol;
  bo.max_iter = opts.max_iter;
  bo.initial_step = opts.initial_step;
  bo.lower.assign(theta0.size(), -box);
  bo.upper.assign(theta0.size(), box);
  const Objective objective = [&](const std::vector<double>& x, std::vector<double>& g) {
    return ll.value_and_gradient(x, g);
  };
  const BfgsResult r = bfgs_maximize(objective, theta0, bo);
  BiasResult out;
  out.theta_hat = r.x;
  for (std::size_t m = 0; m < theta0.size(); ++m) {
    out.bias.push_back(r.x[m] - theta0[m]);
    out.max_abs_bias = std::max(out.max_abs_bias, std::abs(out.bias.back()));
  }
  out.converged = r.converged;
  out.at_bound = r.at_bound;
  out.iterations = r.iterations;
  out.grad_norm = r.grad_norm;
  out.message = r.message;
  return out;
}

template double PseudoLikelihood::evaluate<double>(const std::vector<double>&, ApproxStats*) const;
template Dual<8> PseudoLikelihood::evaluate<Dual<8>>(const std::vector<Dual<8>>&, ApproxStats*) const;
template Dual<24> PseudoLikelihood::evaluate<Dual<24>>(const std::vector<Dual<24>>&, ApproxStats*) const;
template Dual<64> PseudoLikelihood::evaluate<Dual<64>>(const std::vector<Dual<64>>&, ApproxStats*) const;
template double LimitingLikelihood::evaluate<double>(const std::vector<double>&, ApproxStats*) const;
template Dual<8> LimitingLikelihood::evaluate<Dual<8>>(const std::vector<Dual<8>>&, ApproxStats*) const;
template Dual<24> LimitingLikelihood::evaluate<Dual<24>>(const std::vector<Dual<24>>&, ApproxStats*) const;
template Dual<64> LimitingLikelihood::evaluate<Dual<64>>(const std::vector<Dual<64>>&, ApproxStats*) const;

}  // namespace macml
