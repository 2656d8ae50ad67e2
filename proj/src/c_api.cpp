#include "macml/macml.h"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <new>
#include <optional>
#include <sstream>
#include <variant>

#include <json.hpp>

#include "macml/estimation.hpp"
#include "macml/experiments.hpp"
#include "macml/mvn_approx.hpp"
#include "macml/randgen.hpp"
#include "macml/study_json.hpp"

using nlohmann::json;
using namespace macml;

struct macml_study {
  StudyConfig cfg;
  bool ran = false;
  double wall_seconds = 0.0;
  std::size_t units = 0, failed = 0, nonconverged = 0;
  MetricsTable table;
};

namespace {

thread_local std::string g_last_error;

macml_status status_of(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidArgument: return MACML_ERR_INVALID_ARGUMENT;
    case ErrorKind::DimensionTooLarge: return MACML_ERR_DIMENSION;
    case ErrorKind::Io: return MACML_ERR_IO;
    default: return MACML_ERR_NUMERICAL;
  }
}

// Runs f, translating exceptions into a status and the thread's last error.
template <class F>
macml_status guarded(F&& f) {
  try {
    g_last_error.clear();
    f();
    return MACML_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const json::exception& e) {
    g_last_error = e.what();
    return MACML_ERR_INVALID_ARGUMENT;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return MACML_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MACML_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return MACML_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void need(const void* p, const char* name) {
  if (!p) fail(ErrorKind::InvalidArgument, std::string(name) + " must not be null");
}

OrthantProblem problem_from(std::size_t k, const double* b, const double* r) {
  need(b, "b");
  need(r, "r");
  require(k >= 1, "k must be >= 1");
  OrthantProblem p;
  p.b.assign(b, b + k);
  p.R = Matrix<double>(k, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) p.R(i, j) = r[i * k + j];
  validate(p);
  return p;
}

Permutation order_from(std::size_t k, const int* order) {
  Permutation perm = Permutation::identity(k);
  if (order) {
    for (std::size_t i = 0; i < k; ++i) perm.order[i] = order[i] - 1;
    validate(perm, k);
  }
  return perm;
}

std::vector<Method> parse_methods(const std::string& list) {
  std::vector<Method> out;
  std::stringstream ss(list);
  std::string name;
  while (std::getline(ss, name, ',')) {
    name.erase(0, name.find_first_not_of(' '));
    name.erase(name.find_last_not_of(' ') + 1);
    if (!name.empty()) out.push_back(parse_method(name));
  }
  require(!out.empty(), "method list is empty");
  return out;
}

Matrix<double> matrix_from_json(const json& j, const char* name) {
  require(j.is_array() && !j.empty(), std::string(name) + " must be a non-empty array of rows");
  const std::size_t n = j.size();
  Matrix<double> m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    require(j[i].is_array() && j[i].size() == n, std::string(name) + " must be square");
    for (std::size_t c = 0; c < n; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

void check_keys(const json& j, std::initializer_list<const char*> known, const char* what) {
  require(j.is_object(), std::string(what) + " must be a JSON object");
  std::string bad;
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) bad += (bad.empty() ? "'" : ", '") + key + "'";
  }
  if (!bad.empty()) fail(ErrorKind::InvalidArgument, std::string(what) + ": unknown key(s) " + bad);
}

std::string run_fit(const std::string& text) {
  const json j = json::parse(text);
  check_keys(j,
             {"model", "sigma", "asc1", "J", "M", "error_var", "data", "simulate", "method", "grad_tol",
              "max_iter", "ordering", "perm_seed", "start", "clamp_floor", "ridge", "oracle_tol", "grad_mode"},
             "fit config");
  const std::string kind = j.value("model", "asc");
  Model model;
  std::vector<std::string> names;
  std::size_t J = 0;
  if (kind == "asc") {
    require(j.contains("sigma"), "asc model needs 'sigma'");
    AscModel m{matrix_from_json(j.at("sigma"), "sigma"), j.value("asc1", 1.0)};
    J = m.alternatives();
    for (std::size_t a = 2; a <= J; ++a) names.push_back("asc" + std::to_string(a));
    model = m;
  } else if (kind == "mixed") {
    MixedModel m{j.value<std::size_t>("J", 5), j.value<std::size_t>("M", 5), j.value("error_var", 0.5)};
    J = m.J;
    names = mixed_parameter_names(m.M);
    model = m;
  } else {
    fail(ErrorKind::InvalidArgument, "model must be 'asc' or 'mixed'");
  }
  const std::size_t dim = parameter_count(model);

  FitConfig cfg;
  cfg.method = parse_method(j.value("method", "SJ-1"));
  cfg.grad_tol = j.value("grad_tol", cfg.grad_tol);
  cfg.max_iter = j.value("max_iter", cfg.max_iter);
  cfg.perm_seed = j.value<std::uint64_t>("perm_seed", cfg.perm_seed);
  if (j.contains("ordering")) cfg.ordering = parse_ordering(j.at("ordering").get<std::string>());
  cfg.approx.clamp_floor = j.value("clamp_floor", cfg.approx.clamp_floor);
  cfg.approx.ridge = j.value("ridge", cfg.approx.ridge);
  cfg.oracle_tol = j.value("oracle_tol", cfg.oracle_tol);
  const std::string mode = j.value("grad_mode", "analytic");
  require(mode == "analytic" || mode == "central", "grad_mode must be 'analytic' or 'central'");
  cfg.grad_mode = mode == "analytic" ? GradMode::Analytic : GradMode::CentralDifference;
  validate(cfg);

  ChoiceDataset data;
  std::vector<double> truth;
  require(j.contains("data") != j.contains("simulate"), "give exactly one of 'data' and 'simulate'");
  if (j.contains("data")) {
    const std::string path = j.at("data").get<std::string>();
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open data file '" + path + "'");
    data = read_dataset_csv(in, J);
    require(data.mixed() == (kind == "mixed"), "data file layout does not match the model");
  } else {
    const json& s = j.at("simulate");
    check_keys(s, {"N", "seed", "theta"}, "simulate");
    truth = s.at("theta").get<std::vector<double>>();
    require(truth.size() == dim, "simulate.theta has the wrong length");
    std::mt19937_64 rng(s.value<std::uint64_t>("seed", 1));
    const std::size_t n = s.at("N").get<std::size_t>();
    if (const auto* a = std::get_if<AscModel>(&model)) data = simulate_choices(unpack(*a, truth), n, rng);
    else data = simulate_choices(unpack(std::get<MixedModel>(model), truth), n, rng);
  }

  std::vector<double> start;
  if (j.contains("start")) {
    start = j.at("start").get<std::vector<double>>();
    require(start.size() == dim, "start has the wrong length");
  } else if (!truth.empty()) {
    start = truth;
  } else {
    start.assign(dim, 0.0);
    if (const auto* m = std::get_if<MixedModel>(&model))  // b = 0, L = I
      for (std::size_t r = 0, pos = m->M; r < m->M; pos += r + 1, ++r) start[pos + r] = 1.0;
  }

  const FitResult r = fit(model, data, cfg, start);
  json out;
  out["method"] = to_string(r.method);
  out["ordering"] = to_string(r.ordering);
  out["N"] = data.size();
  out["names"] = names;
  out["theta"] = r.theta;
  out["start"] = start;
  if (!truth.empty()) out["truth"] = truth;
  out["loglik"] = r.ll;
  out["grad_norm"] = r.grad_norm;
  out["iterations"] = r.iterations;
  out["evaluations"] = r.evaluations;
  out["converged"] = r.converged;
  out["numerical_failure"] = !std::isfinite(r.ll);  // objective never finite
  out["clamp_count"] = r.clamp_count;
  out["perm_seed"] = r.perm_seed;
  out["message"] = r.message;
  out["wall_seconds"] = r.wall_time;
  return out.dump(2);
}

std::string run_approx_report(const std::string& text, const char* methods) {
  const json j = json::parse(text);
  check_keys(j, {"b", "R", "order"}, "problem");
  OrthantProblem p;
  p.b = j.at("b").get<std::vector<double>>();
  p.R = matrix_from_json(j.at("R"), "R");
  require(p.R.rows() == p.b.size(), "R and b have different dimensions");
  validate(p);
  const std::size_t k = p.dim();
  std::vector<int> order;
  if (j.contains("order")) {
    order = j.at("order").get<std::vector<int>>();
    require(order.size() == k, "order has the wrong length");
  }
  const Permutation perm = order_from(k, order.empty() ? nullptr : order.data());
  const auto list = methods ? parse_methods(methods)
                            : std::vector<Method>{Method::SJ1, Method::SJA, Method::ME, Method::BME};

  json out;
  out["k"] = k;
  std::optional<double> oracle;
  if (k <= 4) {
    oracle = reference_cdf(p, 1e-12);
    out["oracle"] = *oracle;
  }
  for (Method m : list) {
    json row;
    row["method"] = to_string(m);
    const double v = approximate(m, p, perm, ApproxOptions{}, nullptr, 1e-12);
    row["value"] = v;
    if (oracle) row["abs_error"] = std::abs(v - *oracle);
    out["results"].push_back(row);
  }
  return out.dump(2);
}

std::string run_oracle_check(std::size_t count, std::size_t k, std::uint64_t seed, std::int64_t draws) {
  require(k >= 1 && k <= 4, "oracle check needs 1 <= k <= 4");
  require(count >= 1, "count must be >= 1");
  json out;
  out["k"] = k;
  out["count"] = count;
  out["seed"] = seed;
  out["draws"] = draws;
  double max_diff = 0.0, max_z = 0.0, closed = 0.0;
  std::size_t within = 0;
  for (std::size_t i = 0; i < count; ++i) {
    std::mt19937_64 rng(substream_seed(seed, i));
    std::normal_distribution<double> n01;
    OrthantProblem p;
    for (std::size_t c = 0; c < k; ++c) p.b.push_back(n01(rng));
    p.R = vine_correlation(k, 1.0, rng);
    const double ref = reference_cdf(p, 1e-10);
    const auto mc = monte_carlo_cdf(p, draws, substream_seed(seed ^ 0x5bd1e995ULL, i));
    const double diff = std::abs(ref - mc.estimate);
    // A zero-hit estimate has zero standard error; use one draw's worth.
    const double z = diff / std::max(mc.std_error, 1.0 / static_cast<double>(draws));
    max_diff = std::max(max_diff, diff);
    max_z = std::max(max_z, z);
    within += z <= 4.0 ? 1 : 0;
    if (k == 1) closed = std::max(closed, std::abs(ref - std_normal_cdf(p.b[0])));
    if (k == 2) closed = std::max(closed, std::abs(ref - bvn_cdf(p.b[0], p.b[1], p.R(0, 1))));
  }
  out["max_abs_diff"] = max_diff;
  out["max_z"] = max_z;
  out["within_4sigma"] = within;
  if (k <= 2) out["closed_form_max_diff"] = closed;
  return out.dump(2);
}

void check_study(const macml_study* s) { need(s, "study"); }

void check_ran(const macml_study* s) {
  check_study(s);
  if (!s->ran) fail(ErrorKind::InvalidArgument, "study has not been run");
}

}  // namespace

extern "C" {

const char* macml_version(void) { return kVersion; }

const char* macml_last_error(void) { return g_last_error.c_str(); }

const char* macml_status_name(macml_status s) {
  switch (s) {
    case MACML_OK: return "ok";
    case MACML_ERR_INVALID_ARGUMENT: return "invalid argument";
    case MACML_ERR_DIMENSION: return "dimension too large";
    case MACML_ERR_NUMERICAL: return "numerical failure";
    case MACML_ERR_IO: return "i/o error";
    case MACML_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void macml_free(char* s) { std::free(s); }

macml_status macml_normal_cdf(double x, double* out) {
  return guarded([&] {
    need(out, "out");
    *out = std_normal_cdf(x);
  });
}

macml_status macml_bvn_cdf(double b1, double b2, double rho, double* out) {
  return guarded([&] {
    need(out, "out");
    require(!std::isnan(b1) && !std::isnan(b2) && rho >= -1.0 && rho <= 1.0, "bvn_cdf: need rho in [-1, 1]");
    *out = bvn_cdf(b1, b2, rho);
  });
}

macml_status macml_orthant(const char* method, size_t k, const double* b, const double* r, const int* order,
                           double* out) {
  return guarded([&] {
    need(method, "method");
    need(out, "out");
    const auto p = problem_from(k, b, r);
    *out = approximate(parse_method(method), p, order_from(k, order), ApproxOptions{}, nullptr, 1e-12);
  });
}

macml_status macml_reference_cdf(size_t k, const double* b, const double* r, double tol, double* out) {
  return guarded([&] {
    need(out, "out");
    require(tol > 0.0, "tol must be positive");
    *out = reference_cdf(problem_from(k, b, r), tol);
  });
}

macml_status macml_approx_report(const char* problem_json, const char* methods, char** report_json) {
  return guarded([&] {
    need(problem_json, "problem_json");
    need(report_json, "report_json");
    *report_json = dup_string(run_approx_report(problem_json, methods));
  });
}

macml_status macml_fit(const char* fit_json, char** result_json) {
  return guarded([&] {
    need(fit_json, "fit_json");
    need(result_json, "result_json");
    *result_json = dup_string(run_fit(fit_json));
  });
}

macml_status macml_oracle_check(size_t count, size_t k, uint64_t seed, int64_t draws, char** report_json) {
  return guarded([&] {
    need(report_json, "report_json");
    *report_json = dup_string(run_oracle_check(count, k, seed, draws));
  });
}

macml_status macml_study_create(const char* config_json, macml_study** out) {
  return guarded([&] {
    need(config_json, "config_json");
    need(out, "out");
    *out = nullptr;
    const json j = json::parse(config_json);
    auto s = std::make_unique<macml_study>();
    if (j.is_object() && j.contains("config_hash") && j.contains("config")) {
      s->cfg = parse_study_config(j.at("config").dump());
      if (config_hash(s->cfg) != j.at("config_hash").get<std::string>())
        fail(ErrorKind::InvalidArgument, "manifest config_hash does not match its config");
    } else {
      s->cfg = parse_study_config(config_json);
    }
    *out = s.release();
  });
}

void macml_study_destroy(macml_study* study) { delete study; }

macml_status macml_study_set_seed(macml_study* study, uint64_t seed) {
  return guarded([&] {
    check_study(study);
    study->cfg.seed = seed;
  });
}

macml_status macml_study_set_threads(macml_study* study, unsigned threads) {
  return guarded([&] {
    check_study(study);
    study->cfg.threads = threads;
  });
}

macml_status macml_study_set_methods(macml_study* study, const char* methods) {
  return guarded([&] {
    check_study(study);
    need(methods, "methods");
    study->cfg.methods = parse_methods(methods);
  });
}

macml_status macml_study_set_grad_tol(macml_study* study, double grad_tol) {
  return guarded([&] {
    check_study(study);
    study->cfg.grad_tols = {grad_tol};
  });
}

macml_status macml_study_config(const macml_study* study, char** config_json) {
  return guarded([&] {
    check_study(study);
    need(config_json, "config_json");
    *config_json = dup_string(study_config_json(study->cfg));
  });
}

macml_status macml_study_config_hash(const macml_study* study, char** hash) {
  return guarded([&] {
    check_study(study);
    need(hash, "hash");
    *hash = dup_string(config_hash(study->cfg));
  });
}

macml_status macml_study_run(macml_study* study, macml_log_fn log, void* user) {
  return guarded([&] {
    check_study(study);
    const auto errors = validation_errors(study->cfg);
    if (!errors.empty()) {
      std::string msg = "invalid study config:";
      for (const auto& e : errors) msg += "\n  " + e;
      fail(ErrorKind::InvalidArgument, msg);
    }
    RunOptions run;
    if (log) run.log = [log, user](const std::string& line) { log(line.c_str(), user); };
    study->ran = false;
    study->units = study->failed = study->nonconverged = 0;
    const auto t0 = std::chrono::steady_clock::now();
    if (study->cfg.kind == StudyKind::Asymptotic) {
      auto r = run_asymptotic_study(study->cfg, run);
      for (const auto& m : r.models)
        for (const auto& o : m.outcomes) {
          ++study->units;
          if (o.failed) ++study->failed;
          else if (!o.bias.converged) ++study->nonconverged;
        }
      study->table = std::move(r.table);
    } else {
      auto r = run_finite_sample_study(study->cfg, run);
      for (const auto& f : r.fits) {
        ++study->units;
        if (f.failed) ++study->failed;
        else if (!f.fit.converged) ++study->nonconverged;
      }
      study->table = std::move(r.table);
    }
    study->wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    study->ran = true;
  });
}

macml_status macml_study_counts(const macml_study* study, size_t* units, size_t* failed, size_t* nonconverged) {
  return guarded([&] {
    check_ran(study);
    if (units) *units = study->units;
    if (failed) *failed = study->failed;
    if (nonconverged) *nonconverged = study->nonconverged;
  });
}

macml_status macml_study_table_csv(const macml_study* study, char** csv) {
  return guarded([&] {
    check_ran(study);
    need(csv, "csv");
    std::ostringstream out;
    write_table(study->table, out);
    *csv = dup_string(out.str());
  });
}

macml_status macml_study_manifest(const macml_study* study, const char* csv_path, char** manifest) {
  return guarded([&] {
    check_ran(study);
    need(manifest, "manifest_json");
    std::map<std::string, std::string> files;
    if (csv_path) files["table"] = csv_path;
    *manifest = dup_string(manifest_json(study->cfg,
                                         {{"wall_seconds", study->wall_seconds},
                                          {"units", double(study->units)},
                                          {"failed", double(study->failed)},
                                          {"nonconverged", double(study->nonconverged)},
                                          {"rows", double(study->table.rows.size())}},
                                         files));
  });
}

}  // extern "C"
