#include "macml/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "macml/error.hpp"

namespace macml {

double tau(const TauMetric& metric, const std::vector<double>& est, const std::vector<double>& truth) {
  require(est.size() == truth.size() && !est.empty(), "tau: estimate and truth must have equal nonzero length");
  switch (metric.kind) {
    case TauKind::Coordinate:
      require(metric.coordinate < est.size(), "tau: coordinate out of range");
      return est[metric.coordinate] - truth[metric.coordinate];
    case TauKind::MaxCoordinate:
    case TauKind::MaxProbability: {
      double m = 0.0;
      for (std::size_t i = 0; i < est.size(); ++i) m = std::max(m, std::abs(est[i] - truth[i]));
      return m;
    }
    case TauKind::Quotient:
      require(metric.coordinate < est.size(), "tau: coordinate out of range");
      require(est[0] != 0.0 && truth[0] != 0.0, "tau: quotient needs a nonzero first coordinate");
      return est[metric.coordinate] / est[0] - truth[metric.coordinate] / truth[0];
  }
  return 0.0;
}

ErrorSummary summarize(const std::vector<double>& taus) {
  ErrorSummary s;
  s.count = taus.size();
  if (taus.empty()) return s;
  double sq = 0.0, ab = 0.0;
  for (double t : taus) {
    sq += t * t;
    ab += std::abs(t);
  }
  s.rmse = std::sqrt(sq / double(taus.size()));
  s.mae = ab / double(taus.size());
  return s;
}

ErrorSummary compute_metrics(const std::vector<std::vector<double>>& estimates,
                             const std::vector<std::vector<double>>& truths, const TauMetric& metric) {
  require(!estimates.empty(), "compute_metrics: no replications");
  require(estimates.size() == truths.size(), "compute_metrics: estimates and truths differ in count");
  std::vector<double> taus;
  for (std::size_t b = 0; b < estimates.size(); ++b) taus.push_back(tau(metric, estimates[b], truths[b]));
  return summarize(taus);
}

const TableRow* MetricsTable::find(const std::string& method, const std::string& target, const std::string& metric,
                                   std::optional<double> min_prob, std::optional<double> eta,
                                   std::optional<double> grad_tol) const {
  for (const auto& r : rows) {
    if (r.method != method || r.target != target || r.metric != metric) continue;
    if (min_prob && r.min_prob != min_prob) continue;
    if (eta && r.eta != eta) continue;
    if (grad_tol && r.grad_tol != grad_tol) continue;
    return &r;
  }
  return nullptr;
}

// ---- CSV ----

namespace {

// Shortest text that reads back to the same double.
std::string fmt(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') fail(ErrorKind::Io, "table line " + std::to_string(line) + ": bad number '" + s + "'");
  return v;
}

std::optional<double> parse_optional(const std::string& s, std::size_t line) {
  if (s.empty()) return std::nullopt;
  return parse_double(s, line);
}

}  // namespace

void write_table(const MetricsTable& table, std::ostream& out) {
  out << kTableHeader << '\n';
  for (const auto& r : table.rows) {
    out << r.study << ',' << r.method << ',' << fmt(r.min_prob) << ',' << fmt(r.eta) << ',' << fmt(r.grad_tol) << ','
        << r.target << ',' << r.metric << ',' << fmt(r.value) << ',' << r.B << ',' << r.seed << '\n';
  }
}

void write_table(const MetricsTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot open '" + path + "' for writing");
  write_table(table, out);
  out.flush();
  if (!out) fail(ErrorKind::Io, "write to '" + path + "' failed");
}

MetricsTable read_table(std::istream& in) {
  MetricsTable t;
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Io, "table: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTableHeader) fail(ErrorKind::Io, "table: unexpected header '" + line + "'");
  std::size_t no = 1;
  while (std::getline(in, line)) {
    ++no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 10) fail(ErrorKind::Io, "table line " + std::to_string(no) + ": expected 10 fields");
    TableRow r;
    r.study = f[0];
    r.method = f[1];
    r.min_prob = parse_optional(f[2], no);
    r.eta = parse_optional(f[3], no);
    r.grad_tol = parse_optional(f[4], no);
    r.target = f[5];
    r.metric = f[6];
    r.value = parse_double(f[7], no);
    r.B = static_cast<std::size_t>(std::stoull(f[8]));
    r.seed = std::stoull(f[9]);
    t.rows.push_back(std::move(r));
  }
  return t;
}

MetricsTable read_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path + "'");
  return read_table(in);
}

// ---- configuration ----

std::string to_string(StudyKind k) {
  switch (k) {
    case StudyKind::Asymptotic: return "asymptotic";
    case StudyKind::FiniteSample: return "finite-sample";
    case StudyKind::ToleranceSweep: return "tolerance-sweep";
  }
  return "?";
}

StudyKind parse_study_kind(const std::string& name) {
  if (name == "asymptotic") return StudyKind::Asymptotic;
  if (name == "finite-sample") return StudyKind::FiniteSample;
  if (name == "tolerance-sweep") return StudyKind::ToleranceSweep;
  fail(ErrorKind::InvalidArgument,
       "unknown study kind '" + name + "' (expected asymptotic, finite-sample or tolerance-sweep)");
}

std::vector<std::string> validation_errors(const StudyConfig& cfg) {
  std::vector<std::string> e;
  if (cfg.methods.empty()) e.push_back("methods must not be empty");
  if (cfg.threads < 1) e.push_back("threads must be >= 1");
  if (cfg.kind == StudyKind::Asymptotic) {
    if (cfg.L_values.empty()) e.push_back("L_values must not be empty");
    for (double v : cfg.L_values)
      if (!(v > 0.0)) e.push_back("L_values entries must be positive");
    if (cfg.K_values.empty()) e.push_back("K_values must not be empty");
    for (double v : cfg.K_values)
      if (!(v > 0.0)) e.push_back("K_values entries must be positive");
    if (cfg.eta_values.empty()) e.push_back("eta_values must not be empty");
    for (double v : cfg.eta_values)
      if (!(v >= 1.0)) e.push_back("eta_values entries must be >= 1");
    if (cfg.J < 2) e.push_back("J must be >= 2");
    if (cfg.J > 9) e.push_back("J must be <= 9 (SJ enumeration)");
    for (double v : cfg.thresholds)
      if (!(v >= 0.0 && v < 1.0)) e.push_back("thresholds must lie in [0, 1)");
    if (!(cfg.bias_grad_tol > 0.0)) e.push_back("bias_grad_tol must be positive");
  } else {
    if (cfg.N < 1) e.push_back("N must be >= 1");
    if (cfg.grad_tols.empty()) e.push_back("grad_tols must not be empty");
    for (double v : cfg.grad_tols)
      if (!(v > 0.0)) e.push_back("grad_tols entries must be positive");
    if (cfg.max_iter < 1) e.push_back("max_iter must be >= 1");
  }
  if (!(cfg.approx.clamp_floor > 0.0 && cfg.approx.clamp_floor < 1e-6)) e.push_back("clamp_floor must be in (0, 1e-6)");
  if (!(cfg.approx.ridge >= 0.0)) e.push_back("ridge must be >= 0");
  if (!(cfg.oracle_tol > 0.0)) e.push_back("oracle_tol must be positive");
  return e;
}

void validate(const StudyConfig& cfg) {
  const auto e = validation_errors(cfg);
  if (e.empty()) return;
  std::string msg = "invalid study config:";
  for (const auto& s : e) msg += "\n  " + s;
  fail(ErrorKind::InvalidArgument, msg);
}

Scale parse_scale(const std::string& name) {
  if (name == "desk") return Scale::Desk;
  if (name == "paper") return Scale::Paper;
  fail(ErrorKind::InvalidArgument, "unknown scale '" + name + "' (expected desk or paper)");
}

StudyConfig default_config(StudyKind kind, Scale scale) {
  StudyConfig c;
  c.kind = kind;
  const bool paper = scale == Scale::Paper;
  switch (kind) {
    case StudyKind::Asymptotic:
      c.methods = {Method::SJA, Method::SJ1, Method::ME, Method::BME};
      c.replications = paper ? 1000 : 100;  // per (L, K) cell: 8000 or 800 models
      break;
    case StudyKind::FiniteSample:
      c.methods = {Method::SJ1, Method::ME, Method::BME};
      c.datasets = paper ? 20 : 5;
      c.N = paper ? 5000 : 2000;
      c.grad_tols = {0.5e-5};
      break;
    case StudyKind::ToleranceSweep:
      c.methods = {Method::SJ1, Method::ME, Method::BME};
      c.datasets = paper ? 10 : 3;
      c.N = paper ? 5000 : 2000;
      c.grad_tols = {0.5e-3, 0.5e-4, 0.5e-5};
      break;
  }
  return c;
}

MixedMnpSpec finite_sample_truth() {
  MixedMnpSpec s;
  s.J = 5;
  s.mu = {1.5, -1.0, 2.0, 1.0, -2.0};
  const double g[5][5] = {{1.0, -0.5, 0.25, 0.75, 0.0},
                          {-0.5, 1.0, 0.25, -0.5, 0.0},
                          {0.25, 0.25, 1.0, 0.33, 0.0},
                          {0.75, -0.5, 0.33, 1.0, 0.0},
                          {0.0, 0.0, 0.0, 0.0, 1.0}};
  Matrix<double> gamma(5, 5);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) gamma(i, j) = g[i][j];
  if (!cholesky(gamma, s.gamma_chol)) fail(ErrorKind::SingularMatrix, "finite-sample Gamma is not PD");
  s.error_var = 0.5;
  return s;
}

std::vector<std::string> mixed_parameter_names(std::size_t M) {
  std::vector<std::string> n;
  for (std::size_t m = 0; m < M; ++m) n.push_back("b" + std::to_string(m + 1));
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j <= i; ++j) n.push_back("l" + std::to_string(i + 1) + std::to_string(j + 1));
  return n;
}

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& f) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr error;
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      if (stop) return;
      const std::size_t i = next++;
      if (i >= n) return;
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!error) error = std::current_exception();
        stop = true;
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned count = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  for (unsigned t = 0; t < count; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// ---- asymptotic study ----

namespace {

void say(const RunOptions& run, const std::string& s) {
  if (run.log) run.log(s);
}

ModelRecord run_model(const StudyConfig& cfg, std::size_t index, double L, double K, double eta) {
  ModelRecord rec;
  rec.index = index;
  rec.L = L;
  rec.K_sd = K;
  rec.eta = eta;
  std::mt19937_64 rng(substream_seed(cfg.seed, index));
  DgpConfig dgp{L, K, eta, cfg.J, cfg.seed};
  rec.truth = draw_true_model(dgp, rng);
  rec.probs = oracle_probabilities(moments_of(rec.truth), cfg.oracle_tol);
  rec.min_prob = *std::min_element(rec.probs.begin(), rec.probs.end());
  const AscModel model{rec.truth.sigma, rec.truth.ascs[0]};
  BiasOptions bo;
  bo.grad_tol = cfg.bias_grad_tol;
  bo.approx = cfg.approx;
  bo.oracle_tol = cfg.oracle_tol;
  for (Method m : cfg.methods) {
    ModelRecord::Outcome o;
    try {
      o.bias = asymptotic_bias(rec.truth, m, 2.0 * L, bo);
      const auto p = oracle_probabilities(moments_of(unpack(model, o.bias.theta_hat)), cfg.oracle_tol);
      for (std::size_t j = 0; j < p.size(); ++j) o.prob_dev = std::max(o.prob_dev, std::abs(p[j] - rec.probs[j]));
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::InvalidArgument) throw;
      o.failed = true;
      o.error = e.what();
    }
    rec.outcomes.push_back(std::move(o));
  }
  return rec;
}

void add_row(MetricsTable& t, const StudyConfig& cfg, const std::string& method, std::optional<double> min_prob,
             std::optional<double> eta, std::optional<double> grad_tol, const std::string& target,
             const std::string& metric, double value, std::size_t B) {
  t.rows.push_back({to_string(cfg.kind), method, min_prob, eta, grad_tol, target, metric, value, B, cfg.seed});
}

}  // namespace

AsymptoticResult run_asymptotic_study(const StudyConfig& cfg, const RunOptions& run) {
  require(cfg.kind == StudyKind::Asymptotic, "run_asymptotic_study: config is not an asymptotic study");
  validate(cfg);
  struct Cell {
    double L, K, eta;
  };
  std::vector<Cell> cells;
  for (double eta : cfg.eta_values)
    for (double L : cfg.L_values)
      for (double K : cfg.K_values) cells.push_back({L, K, eta});
  const std::size_t n = cells.size() * cfg.replications;

  AsymptoticResult res;
  if (n == 0) return res;
  res.models.resize(n);
  std::atomic<std::size_t> done{0};
  std::mutex log_mu;
  parallel_for(n, cfg.threads, [&](std::size_t i) {
    const Cell& c = cells[i / std::max<std::size_t>(cfg.replications, 1)];
    res.models[i] = run_model(cfg, i, c.L, c.K, c.eta);
    const std::size_t d = ++done;
    if (run.log && (d % 100 == 0 || d == n)) {
      std::lock_guard<std::mutex> lock(log_mu);
      say(run, "asymptotic: " + std::to_string(d) + "/" + std::to_string(n) + " models");
    }
  });

  // Failures are excluded per method; nonconverged and boxed solutions are
  // kept and counted.
  for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
    const std::string method = to_string(cfg.methods[mi]);
    std::size_t failed_count = 0;
    for (const auto& m : res.models) failed_count += m.outcomes[mi].failed;
    if (failed_count > 0) say(run, "asymptotic: " + method + " failed on " + std::to_string(failed_count) + " models");
    for (double eta : cfg.eta_values) {
      for (double x : cfg.thresholds) {
        std::vector<double> max_coord, max_prob;
        std::vector<std::vector<double>> coord(cfg.J - 1);
        std::size_t failures = 0, nonconverged = 0, at_bound = 0, big = 0;
        for (const auto& m : res.models) {
          if (m.eta != eta || !(m.min_prob >= x)) continue;
          const auto& o = m.outcomes[mi];
          if (o.failed) {
            ++failures;
            continue;
          }
          max_coord.push_back(o.bias.max_abs_bias);
          max_prob.push_back(o.prob_dev);
          for (std::size_t k = 0; k + 1 < cfg.J; ++k) coord[k].push_back(o.bias.bias[k]);
          nonconverged += !o.bias.converged;
          at_bound += o.bias.at_bound;
          big += o.bias.max_abs_bias > cfg.big_bias;
        }
        const std::size_t B = max_coord.size();
        auto row = [&](const std::string& target, const std::string& metric, double v, std::size_t b) {
          add_row(res.table, cfg, method, x, eta, std::nullopt, target, metric, v, b);
        };
        row("models", "count", double(B), B);
        row("models", "failures", double(failures), B);
        row("models", "nonconverged", double(nonconverged), B);
        row("models", "at_bound", double(at_bound), B);
        if (B == 0) continue;
        const auto mc = summarize(max_coord), mp = summarize(max_prob);
        row("max_coord", "rmse", mc.rmse, B);
        row("max_coord", "mae", mc.mae, B);
        char label[48];
        std::snprintf(label, sizeof label, "share_above_%g", cfg.big_bias);
        row("max_coord", label, double(big) / double(B), B);
        row("max_prob", "rmse", mp.rmse, B);
        row("max_prob", "mae", mp.mae, B);
        for (std::size_t k = 0; k + 1 < cfg.J; ++k) {
          const auto s = summarize(coord[k]);
          row("asc" + std::to_string(k + 2), "rmse", s.rmse, B);
          row("asc" + std::to_string(k + 2), "mae", s.mae, B);
        }
      }
    }
  }
  return res;
}

// ---- finite-sample study ----

FiniteSampleResult run_finite_sample_study(const StudyConfig& cfg, const RunOptions& run) {
  require(cfg.kind == StudyKind::FiniteSample || cfg.kind == StudyKind::ToleranceSweep,
          "run_finite_sample_study: config is not a finite-sample study");
  validate(cfg);
  const MixedMnpSpec truth = finite_sample_truth();
  const MixedModel model{truth.J, truth.covariates(), truth.error_var};
  FiniteSampleResult res;
  res.truth = pack(truth);
  res.names = mixed_parameter_names(truth.covariates());
  if (cfg.datasets == 0) return res;

  std::vector<ChoiceDataset> data;
  for (std::size_t d = 0; d < cfg.datasets; ++d) {
    std::mt19937_64 rng(substream_seed(cfg.seed, d));
    data.push_back(simulate_choices(truth, cfg.N, rng));
  }
  const std::size_t per_dataset = cfg.grad_tols.size() * cfg.methods.size();
  const std::size_t n = cfg.datasets * per_dataset;
  res.fits.resize(n);
  std::atomic<std::size_t> done{0};
  std::mutex log_mu;
  parallel_for(n, cfg.threads, [&](std::size_t i) {
    FitRecord& r = res.fits[i];
    r.dataset = i / per_dataset;
    r.grad_tol = cfg.grad_tols[(i % per_dataset) / cfg.methods.size()];
    r.method = cfg.methods[i % cfg.methods.size()];
    FitConfig fc;
    fc.method = r.method;
    fc.grad_tol = r.grad_tol;
    fc.max_iter = cfg.max_iter;
    // Same SJ-1 permutations for every method and tolerance of one dataset.
    fc.perm_seed = substream_seed(cfg.seed ^ 0x9e3779b97f4a7c15ULL, r.dataset);
    fc.approx = cfg.approx;
    fc.oracle_tol = cfg.oracle_tol;
    try {
      r.fit = fit(model, data[r.dataset], fc, res.truth);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::InvalidArgument) throw;
      r.failed = true;
      r.error = e.what();
    }
    const std::size_t d = ++done;
    if (run.log) {
      std::lock_guard<std::mutex> lock(log_mu);
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s: %zu/%zu fits (dataset %zu, %s, tol %g, %.1fs%s)", to_string(cfg.kind).c_str(),
                    d, n, r.dataset, to_string(r.method).c_str(), r.grad_tol, r.fit.wall_time,
                    r.failed ? ", failed" : (r.fit.converged ? "" : ", not converged"));
      say(run, buf);
    }
  });

  const std::size_t P = res.truth.size(), M = truth.covariates();
  for (Method method : cfg.methods) {
    const std::string mname = to_string(method);
    std::vector<std::vector<double>> prev;  // estimates at the previous tolerance, per dataset
    for (double tol : cfg.grad_tols) {
      std::vector<const FitRecord*> ok;
      std::size_t failures = 0, nonconverged = 0;
      std::vector<std::vector<double>> cur(cfg.datasets);
      for (const auto& r : res.fits) {
        if (r.method != method || r.grad_tol != tol) continue;
        if (r.failed) {
          ++failures;
          continue;
        }
        ok.push_back(&r);
        cur[r.dataset] = r.fit.theta;
        nonconverged += !r.fit.converged;
      }
      const std::size_t B = ok.size();
      auto row = [&](const std::string& target, const std::string& metric, double v) {
        add_row(res.table, cfg, mname, std::nullopt, std::nullopt, tol, target, metric, v, B);
      };
      row("fits", "count", double(B));
      row("fits", "failures", double(failures));
      row("fits", "nonconverged", double(nonconverged));
      if (B > 0) {
        double mae_sum = 0.0, sd_sum = 0.0, lin_mae = 0.0;
        for (std::size_t p = 0; p < P; ++p) {
          double mean = 0.0, mae = 0.0;
          std::vector<double> ae;
          for (const auto* r : ok) {
            mean += r->fit.theta[p];
            ae.push_back(std::abs(r->fit.theta[p] - res.truth[p]));
            mae += ae.back();
          }
          mean /= double(B);
          mae /= double(B);
          double var = 0.0;
          for (double a : ae) var += (a - mae) * (a - mae);
          const double sd = B > 1 ? std::sqrt(var / double(B - 1)) : 0.0;
          row(res.names[p], "mean", mean);
          row(res.names[p], "mae", mae);
          row(res.names[p], "sd_ae", sd);
          mae_sum += mae;
          sd_sum += sd;
          if (p < M) lin_mae += mae;
        }
        row("all", "mean_mae", mae_sum / double(P));
        row("all", "mean_sd_ae", sd_sum / double(P));
        row("linear", "mean_mae", lin_mae / double(M));
        double q_sum = 0.0;
        for (std::size_t m = 1; m < M; ++m) {
          double mean = 0.0, mae = 0.0;
          for (const auto* r : ok) {
            mean += r->fit.theta[m] / r->fit.theta[0];
            mae += std::abs(tau({TauKind::Quotient, m}, r->fit.theta, res.truth));
          }
          const std::string name = res.names[m] + "/" + res.names[0];
          row(name, "mean", mean / double(B));
          row(name, "mae", mae / double(B));
          q_sum += mae / double(B);
        }
        if (M > 1) row("quotients", "mean_mae", q_sum / double(M - 1));
        if (!prev.empty()) {
          double sad = 0.0;
          std::size_t count = 0;
          for (std::size_t d = 0; d < cfg.datasets; ++d) {
            if (prev[d].empty() || cur[d].empty()) continue;
            for (std::size_t p = 0; p < P; ++p) sad += std::abs(cur[d][p] - prev[d][p]);
            ++count;
          }
          if (count > 0) row("all", "sad", sad / double(count));
        }
      }
      prev = std::move(cur);
    }
  }
  return res;
}

}  // namespace macml
