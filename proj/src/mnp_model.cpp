#include "macml/mnp_model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace macml {

namespace {

Eigen::MatrixXd to_eigen(const Matrix<double>& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return e;
}

// A square root S with S S' = cov; falls back to the eigen decomposition for
// semidefinite input.
Eigen::MatrixXd covariance_root(const Matrix<double>& cov) {
  const Eigen::MatrixXd c = to_eigen(cov);
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal();
}

std::size_t argmax(const Eigen::VectorXd& u) {
  Eigen::Index best = 0;
  u.maxCoeff(&best);
  return static_cast<std::size_t>(best);
}

}  // namespace

void validate(const MnpSpec& spec) {
  const std::size_t J = spec.alternatives();
  require(J >= 2, "mnp spec: need at least two alternatives");
  require(spec.sigma.rows() == J && spec.sigma.cols() == J, "mnp spec: sigma must be J x J");
  for (std::size_t i = 0; i < J; ++i) {
    require(std::isfinite(spec.ascs[i]), "mnp spec: ASCs must be finite");
    for (std::size_t j = 0; j < i; ++j)
      require(std::abs(spec.sigma(i, j) - spec.sigma(j, i)) <= 1e-12 * (1.0 + std::abs(spec.sigma(i, j))),
              "mnp spec: sigma is not symmetric");
  }
  // Each differenced covariance must be PD; to_orthant checks by factoring.
  for (std::size_t i = 0; i < J; ++i) (void)to_orthant(spec, i);
}

void validate(const MixedMnpSpec& spec) {
  const std::size_t M = spec.covariates();
  require(spec.J >= 2, "mixed spec: need at least two alternatives");
  require(M >= 1, "mixed spec: need at least one covariate");
  require(spec.gamma_chol.rows() == M && spec.gamma_chol.cols() == M, "mixed spec: L must be M x M");
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = i + 1; j < M; ++j)
      require(spec.gamma_chol(i, j) == 0.0, "mixed spec: L must be lower triangular");
  require(spec.error_var > 0.0, "mixed spec: error variance must be positive");
}

DifferencingMatrix differencing_matrix(std::size_t i, std::size_t J) {
  require(J >= 2, "differencing_matrix: J must be >= 2");
  require(i < J, "differencing_matrix: alternative index out of range");
  DifferencingMatrix d{i, Matrix<double>(J - 1, J)};
  std::size_t row = 0;
  for (std::size_t j = 0; j < J; ++j) {
    if (j == i) continue;
    d.matrix(row, j) = 1.0;
    d.matrix(row, i) = -1.0;
    ++row;
  }
  return d;
}

std::string to_string(OrderingRule r) {
  switch (r) {
    case OrderingRule::AscDescending: return "asc-descending";
    case OrderingRule::LimitDescending: return "limit-descending";
    case OrderingRule::UnivariateMe: return "univariate-me";
  }
  return "?";
}

OrderingRule parse_ordering(const std::string& name) {
  if (name == "asc-descending") return OrderingRule::AscDescending;
  if (name == "limit-descending") return OrderingRule::LimitDescending;
  if (name == "univariate-me") return OrderingRule::UnivariateMe;
  fail(ErrorKind::InvalidArgument, "unknown ordering rule '" + name + "' (expected asc-descending, limit-descending or univariate-me)");
}

Permutation component_order(const UtilityMoments<double>& m, std::size_t i, OrderingRule rule) {
  if (rule == OrderingRule::UnivariateMe) return me_greedy_order(to_orthant(m, i));
  std::vector<double> key;
  if (rule == OrderingRule::AscDescending) {
    for (std::size_t j = 0; j < m.mean.size(); ++j)
      if (j != i) key.push_back(m.mean[j]);
  } else {
    key = to_orthant(m, i).b;
  }
  return reorder_descending(key);
}

double choice_probability(const MnpSpec& spec, std::size_t i, Method method,
                          const Permutation& perm, const ApproxOptions& opts, double oracle_tol) {
  const OrthantProblem p = to_orthant(spec, i);
  return approximate(method, p, perm, opts, nullptr, oracle_tol);
}

std::vector<double> oracle_probabilities(const UtilityMoments<double>& m, double tol) {
  std::vector<double> out;
  for (std::size_t i = 0; i < m.mean.size(); ++i) out.push_back(reference_cdf(to_orthant(m, i), tol));
  return out;
}

void validate(const ChoiceDataset& data) {
  require(data.J >= 2, "dataset: J must be >= 2");
  require(data.size() >= 1, "dataset: need at least one observation");
  for (int c : data.choices)
    require(c >= 0 && static_cast<std::size_t>(c) < data.J, "dataset: choice out of range");
  if (data.mixed()) {
    require(data.designs.size() == data.size(), "dataset: one design matrix per observation");
    const std::size_t M = data.designs.front().cols();
    for (const auto& x : data.designs)
      require(x.rows() == data.J && x.cols() == M, "dataset: design matrices must all be J x M");
  }
}

double loglik(std::span<const double> probs) {
  require(!probs.empty(), "loglik: no observations");
  // Neumaier summation: the per-observation and frequency forms then agree to
  // rounding of the final division.
  double sum = 0.0, comp = 0.0;
  for (double p : probs) {
    if (!(p > 0.0)) fail(ErrorKind::NonPositiveProbability, "loglik: probability is not positive");
    const double x = std::log(p);
    const double t = sum + x;
    comp += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  return (sum + comp) / static_cast<double>(probs.size());
}

double loglik_by_frequency(const ChoiceDataset& data, std::span<const double> probs_by_alternative) {
  require(probs_by_alternative.size() == data.J, "loglik_by_frequency: need one probability per alternative");
  std::vector<std::size_t> counts(data.J, 0);
  for (int c : data.choices) ++counts[c];
  double sum = 0.0;
  for (std::size_t j = 0; j < data.J; ++j) {
    if (counts[j] == 0) continue;
    if (!(probs_by_alternative[j] > 0.0))
      fail(ErrorKind::NonPositiveProbability, "loglik: probability is not positive");
    sum += static_cast<double>(counts[j]) / static_cast<double>(data.size()) * std::log(probs_by_alternative[j]);
  }
  return sum;
}

ChoiceDataset simulate_choices(const MnpSpec& spec, std::size_t n, std::mt19937_64& rng) {
  require(n >= 1, "simulate_choices: N must be >= 1");
  const std::size_t J = spec.alternatives();
  const Eigen::MatrixXd root = covariance_root(spec.sigma);
  Eigen::VectorXd mean(J);
  for (std::size_t j = 0; j < J; ++j) mean(j) = spec.ascs[j];
  std::normal_distribution<double> n01;
  ChoiceDataset data;
  data.J = J;
  data.choices.reserve(n);
  Eigen::VectorXd z(J);
  for (std::size_t obs = 0; obs < n; ++obs) {
    for (std::size_t j = 0; j < J; ++j) z(j) = n01(rng);
    data.choices.push_back(static_cast<int>(argmax(mean + root * z)));
  }
  return data;
}

ChoiceDataset simulate_choices(const MixedMnpSpec& spec, std::size_t n, std::mt19937_64& rng) {
  require(n >= 1, "simulate_choices: N must be >= 1");
  validate(spec);
  const std::size_t J = spec.J, M = spec.covariates();
  const Eigen::MatrixXd l = to_eigen(spec.gamma_chol);
  Eigen::VectorXd mu(M);
  for (std::size_t m = 0; m < M; ++m) mu(m) = spec.mu[m];
  const double sd = std::sqrt(spec.error_var);
  std::normal_distribution<double> n01;
  ChoiceDataset data;
  data.J = J;
  data.choices.reserve(n);
  data.designs.reserve(n);
  Eigen::MatrixXd x(J, M);
  Eigen::VectorXd z(M), e(J);
  for (std::size_t obs = 0; obs < n; ++obs) {
    Matrix<double> design(J, M);
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t m = 0; m < M; ++m) x(j, m) = design(j, m) = n01(rng);
    for (std::size_t m = 0; m < M; ++m) z(m) = n01(rng);
    for (std::size_t j = 0; j < J; ++j) e(j) = sd * n01(rng);
    const Eigen::VectorXd beta = mu + l * z;
    data.choices.push_back(static_cast<int>(argmax(x * beta + e)));
    data.designs.push_back(std::move(design));
  }
  return data;
}

void write_dataset_csv(const ChoiceDataset& data, std::ostream& out) {
  validate(data);
  const std::size_t M = data.mixed() ? data.designs.front().cols() : 0;
  out << "obs_id,choice";
  for (std::size_t m = 0; m < M; ++m) out << ",x_" << m + 1;
  out << "\n";
  char buf[32];
  for (std::size_t n = 0; n < data.size(); ++n) {
    const std::size_t rows = data.mixed() ? data.J : 1;
    for (std::size_t r = 0; r < rows; ++r) {
      out << n + 1 << "," << data.choices[n] + 1;
      for (std::size_t m = 0; m < M; ++m) {
        std::snprintf(buf, sizeof buf, "%.17g", data.designs[n](r, m));
        out << "," << buf;
      }
      out << "\n";
    }
  }
  if (!out) fail(ErrorKind::Io, "write_dataset_csv: stream write failed");
}

ChoiceDataset read_dataset_csv(std::istream& in, std::size_t J) {
  require(J >= 2, "read_dataset_csv: J must be >= 2");
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Io, "read_dataset_csv: empty input");
  std::size_t M = 0;
  {
    std::stringstream header(line);
    std::string col;
    std::vector<std::string> cols;
    while (std::getline(header, col, ',')) cols.push_back(col);
    require(cols.size() >= 2 && cols[0] == "obs_id" && cols[1] == "choice",
            "read_dataset_csv: header must start with obs_id,choice");
    M = cols.size() - 2;
  }
  ChoiceDataset data;
  data.J = J;
  std::size_t row_in_obs = 0;
  long current_id = -1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != M + 2) {
      fail(ErrorKind::Io, "read_dataset_csv: line " + std::to_string(line_no) + " has " +
                              std::to_string(cells.size()) + " fields, expected " + std::to_string(M + 2));
    }
    try {
      const long id = std::stol(cells[0]);
      const int choice = std::stoi(cells[1]) - 1;
      if (M == 0) {
        data.choices.push_back(choice);
        continue;
      }
      if (row_in_obs == 0) {
        current_id = id;
        data.choices.push_back(choice);
        data.designs.emplace_back(J, M);
      } else if (id != current_id) {
        fail(ErrorKind::Io, "read_dataset_csv: observation " + std::to_string(current_id) +
                                " has fewer than J rows (line " + std::to_string(line_no) + ")");
      }
      for (std::size_t m = 0; m < M; ++m) data.designs.back()(row_in_obs, m) = std::stod(cells[m + 2]);
      row_in_obs = (row_in_obs + 1) % J;
    } catch (const std::logic_error&) {
      fail(ErrorKind::Io, "read_dataset_csv: malformed number on line " + std::to_string(line_no));
    }
  }
  require(row_in_obs == 0, "read_dataset_csv: last observation is incomplete");
  validate(data);
  return data;
}

}  // namespace macml
