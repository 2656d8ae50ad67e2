#pragma once

// Study harnesses: asymptotic bias over random true models, finite-sample
// recovery of the mixed probit model, and a gradient-tolerance sweep. Results
// are long-format tables of (slice, target, metric, value) rows.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "macml/estimation.hpp"
#include "macml/randgen.hpp"

namespace macml {

// tau of one replication.
enum class TauKind {
  Coordinate,      // est[m] - truth[m]
  MaxCoordinate,   // max_m |est[m] - truth[m]|
  MaxProbability,  // same on probability vectors
  Quotient,        // est[m] / est[0] - truth[m] / truth[0]
};

struct TauMetric {
  TauKind kind = TauKind::MaxCoordinate;
  std::size_t coordinate = 0;  // Coordinate and Quotient
};

double tau(const TauMetric& metric, const std::vector<double>& est, const std::vector<double>& truth);

struct ErrorSummary {
  double rmse = 0.0;
  double mae = 0.0;
  std::size_t count = 0;
};

// RMSE sqrt(mean tau^2) and MAE mean |tau|.
ErrorSummary compute_metrics(const std::vector<std::vector<double>>& estimates,
                             const std::vector<std::vector<double>>& truths, const TauMetric& metric);
ErrorSummary summarize(const std::vector<double>& taus);

// One CSV row. Slice keys that do not apply are empty.
struct TableRow {
  std::string study;
  std::string method;
  std::optional<double> min_prob;
  std::optional<double> eta;
  std::optional<double> grad_tol;
  std::string target;
  std::string metric;
  double value = 0.0;
  std::size_t B = 0;
  std::uint64_t seed = 0;

  bool operator==(const TableRow&) const = default;
};

struct MetricsTable {
  std::vector<TableRow> rows;

  // First row matching all given keys, or nullptr.
  const TableRow* find(const std::string& method, const std::string& target, const std::string& metric,
                       std::optional<double> min_prob = std::nullopt, std::optional<double> eta = std::nullopt,
                       std::optional<double> grad_tol = std::nullopt) const;
};

inline constexpr const char* kTableHeader = "study,method,min_prob,eta,grad_tol,target,metric,value,B,seed";

// Values are printed in shortest round-trip form, so a read reproduces them exactly.
void write_table(const MetricsTable& table, std::ostream& out);
void write_table(const MetricsTable& table, const std::string& path);
MetricsTable read_table(std::istream& in);
MetricsTable read_table(const std::string& path);

enum class StudyKind { Asymptotic, FiniteSample, ToleranceSweep };

std::string to_string(StudyKind k);
StudyKind parse_study_kind(const std::string& name);

struct StudyConfig {
  StudyKind kind = StudyKind::Asymptotic;
  std::vector<Method> methods;
  std::uint64_t seed = 1;
  unsigned threads = 1;

  // Asymptotic: `replications` models per (L, K_sd, eta) cell.
  std::vector<double> L_values{1.0, 2.0};
  std::vector<double> K_values{1.0, 2.0, 3.0, 4.0};
  std::vector<double> eta_values{1.0};
  std::size_t replications = 100;
  std::size_t J = 4;
  std::vector<double> thresholds{0.0, 0.001, 0.01, 0.05};
  double bias_grad_tol = 1e-8;
  double big_bias = 0.05;  // reported as the share of models above it

  // Finite sample and tolerance sweep.
  std::size_t datasets = 5;
  std::size_t N = 2000;
  std::vector<double> grad_tols{0.5e-5};
  int max_iter = 500;

  ApproxOptions approx{};
  double oracle_tol = 1e-12;
};

// Every violated constraint, in a fixed order; empty when valid.
std::vector<std::string> validation_errors(const StudyConfig& cfg);
void validate(const StudyConfig& cfg);

// Desk and paper replication budgets for a study kind.
enum class Scale { Desk, Paper };
Scale parse_scale(const std::string& name);
StudyConfig default_config(StudyKind kind, Scale scale);

// The mixed model of the finite-sample study.
MixedMnpSpec finite_sample_truth();

struct RunOptions {
  std::function<void(const std::string&)> log;  // progress lines; may be empty
};

// One true model of the asymptotic study and its outcome per method.
struct ModelRecord {
  std::size_t index = 0;
  double L = 0.0, K_sd = 0.0, eta = 0.0;
  MnpSpec truth;
  std::vector<double> probs;  // oracle P_j at the truth
  double min_prob = 0.0;
  struct Outcome {
    bool failed = false;
    std::string error;
    BiasResult bias;
    double prob_dev = 0.0;  // max_j |P_j(theta_hat) - P_j(theta0)|
  };
  std::vector<Outcome> outcomes;  // per cfg.methods entry
};

struct AsymptoticResult {
  std::vector<ModelRecord> models;
  MetricsTable table;
};

AsymptoticResult run_asymptotic_study(const StudyConfig& cfg, const RunOptions& run = {});

// One fit of the finite-sample study.
struct FitRecord {
  std::size_t dataset = 0;
  Method method = Method::SJ1;
  double grad_tol = 0.0;
  bool failed = false;
  std::string error;
  FitResult fit;
};

struct FiniteSampleResult {
  std::vector<double> truth;  // packed theta0
  std::vector<std::string> names;
  std::vector<FitRecord> fits;
  MetricsTable table;
};

// Handles FiniteSample and ToleranceSweep configs.
FiniteSampleResult run_finite_sample_study(const StudyConfig& cfg, const RunOptions& run = {});

// Parameter names of the packed mixed-model theta: b1..bM, l11, l21, l22, ...
std::vector<std::string> mixed_parameter_names(std::size_t M);

// Runs f(i) for i in [0, n) on `threads` workers. Exceptions propagate after
// all workers stop.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& f);

}  // namespace macml
