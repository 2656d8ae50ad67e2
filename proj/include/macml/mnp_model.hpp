#pragma once

// Multinomial probit model: utilities U = mean + e, e ~ N(0, cov); the chosen
// alternative maximizes U. Alternatives are 0-based here; files and the C API
// use 1-based choices.

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "macml/matrix.hpp"
#include "macml/mvn_approx.hpp"

namespace macml {

// Pure-ASC model. ascs[0] is the normalized constant (1 in the studies).
struct MnpSpec {
  std::vector<double> ascs;
  Matrix<double> sigma;

  std::size_t alternatives() const { return ascs.size(); }
};

void validate(const MnpSpec& spec);

// Mixed probit: U = X beta + e with beta ~ N(mu, L L') and e ~ N(0, error_var I).
struct MixedMnpSpec {
  std::size_t J = 0;
  std::vector<double> mu;   // length M
  Matrix<double> gamma_chol;  // M x M lower triangular
  double error_var = 0.5;

  std::size_t covariates() const { return mu.size(); }
};

void validate(const MixedMnpSpec& spec);

struct DifferencingMatrix {
  std::size_t i = 0;
  Matrix<double> matrix;  // (J-1) x J
};

// Rows u_j - u_i for j != i, in increasing j.
DifferencingMatrix differencing_matrix(std::size_t i, std::size_t J);

// Mean vector and covariance of the J utilities of one observation.
template <class T>
struct UtilityMoments {
  std::vector<T> mean;
  Matrix<T> cov;
};

inline UtilityMoments<double> moments_of(const MnpSpec& spec) { return {spec.ascs, spec.sigma}; }

// Orthant problem whose cdf is P(choice = i): with d_j = mean_j - mean_i and
// C = cov of the differences, b_j = -d_j / sqrt(C_jj) and R = corr(C).
// Component c of the result is the c-th alternative other than i.
template <class T>
BasicOrthant<T> to_orthant(const UtilityMoments<T>& m, std::size_t i) {
  using std::sqrt;
  const std::size_t J = m.mean.size();
  require(J >= 2 && i < J, "to_orthant: alternative index out of range");
  require(m.cov.rows() == J && m.cov.cols() == J, "to_orthant: covariance must be J x J");
  const std::size_t k = J - 1;
  std::vector<std::size_t> alt;
  for (std::size_t j = 0; j < J; ++j)
    if (j != i) alt.push_back(j);
  Matrix<T> c(k, k);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) {
      const std::size_t ja = alt[a], jb = alt[b];
      c(a, b) = m.cov(ja, jb) - m.cov(ja, i) - m.cov(i, jb) + m.cov(i, i);
    }
  Matrix<T> l;
  if (!cholesky(c, l)) fail(ErrorKind::SingularMatrix, "to_orthant: differenced covariance is not positive definite");
  BasicOrthant<T> p{std::vector<T>(k), Matrix<T>(k, k)};
  std::vector<T> s(k);
  for (std::size_t a = 0; a < k; ++a) s[a] = sqrt(c(a, a));
  for (std::size_t a = 0; a < k; ++a) {
    p.b[a] = (m.mean[i] - m.mean[alt[a]]) / s[a];
    for (std::size_t b = 0; b < k; ++b) p.R(a, b) = a == b ? T(1.0) : c(a, b) / (s[a] * s[b]);
  }
  return p;
}

inline OrthantProblem to_orthant(const MnpSpec& spec, std::size_t i) {
  return to_orthant(moments_of(spec), i);
}

// How the approximation order of the components is chosen.
enum class OrderingRule {
  AscDescending,    // alternatives by descending mean utility
  LimitDescending,  // components by descending upper limit
  UnivariateMe,     // greedy univariate-ME order (see me_greedy_order)
};

// ME follows the ASC rule; bME reorders with the univariate ME.
inline OrderingRule default_ordering(Method m) {
  return m == Method::BME ? OrderingRule::UnivariateMe : OrderingRule::AscDescending;
}

std::string to_string(OrderingRule r);
OrderingRule parse_ordering(const std::string& name);

Permutation component_order(const UtilityMoments<double>& m, std::size_t i, OrderingRule rule);

double choice_probability(const MnpSpec& spec, std::size_t i, Method method,
                          const Permutation& perm, const ApproxOptions& opts = {},
                          double oracle_tol = 1e-10);

// Oracle probabilities of every alternative.
std::vector<double> oracle_probabilities(const UtilityMoments<double>& m, double tol = 1e-10);

// Utility moments of one observation with design X (J x M).
template <class T>
UtilityMoments<T> mixed_moments(const Matrix<double>& X, const std::vector<T>& mu,
                                const Matrix<T>& gamma, double error_var) {
  const std::size_t J = X.rows(), M = X.cols();
  require(mu.size() == M && gamma.rows() == M && gamma.cols() == M,
          "mixed_moments: dimension mismatch between design and parameters");
  UtilityMoments<T> out{std::vector<T>(J, T(0.0)), Matrix<T>(J, J)};
  for (std::size_t j = 0; j < J; ++j)
    for (std::size_t m = 0; m < M; ++m) out.mean[j] += X(j, m) * mu[m];
  const Matrix<T> xg = multiply(X, gamma);
  for (std::size_t a = 0; a < J; ++a)
    for (std::size_t b = a; b < J; ++b) {
      T acc(a == b ? error_var : 0.0);
      for (std::size_t m = 0; m < M; ++m) acc += xg(a, m) * X(b, m);
      out.cov(a, b) = acc;
      out.cov(b, a) = acc;
    }
  return out;
}

// Gamma = L L'.
template <class T>
Matrix<T> gamma_from_chol(const Matrix<T>& l) {
  return multiply(l, transpose(l));
}

inline UtilityMoments<double> mixed_to_spec(const MixedMnpSpec& spec, const Matrix<double>& X) {
  return mixed_moments(X, spec.mu, gamma_from_chol(spec.gamma_chol), spec.error_var);
}

struct ChoiceDataset {
  std::size_t J = 0;
  std::vector<int> choices;             // 0-based
  std::vector<Matrix<double>> designs;  // empty for the pure-ASC model

  std::size_t size() const { return choices.size(); }
  bool mixed() const { return !designs.empty(); }
};

void validate(const ChoiceDataset& data);

// (1/N) sum log p_n.
double loglik(std::span<const double> probs);

// sum_j (N_j / N) log P_j for the pure-ASC model.
double loglik_by_frequency(const ChoiceDataset& data, std::span<const double> probs_by_alternative);

ChoiceDataset simulate_choices(const MnpSpec& spec, std::size_t n, std::mt19937_64& rng);

// Draws fresh standard normal designs for every observation.
ChoiceDataset simulate_choices(const MixedMnpSpec& spec, std::size_t n, std::mt19937_64& rng);

// CSV: header "obs_id,choice[,x_1..x_M]". Pure-ASC data has one row per
// observation; mixed data one row per alternative in alternative order.
// Choices are written 1-based.
void write_dataset_csv(const ChoiceDataset& data, std::ostream& out);
ChoiceDataset read_dataset_csv(std::istream& in, std::size_t J);

}  // namespace macml
