// Command-line front end. Uses only the C interface of libmacml.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include "macml/macml.h"

using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct CliError {
  int code;
  std::string message;
};

int exit_code(macml_status s) {
  switch (s) {
    case MACML_OK: return kExitOk;
    case MACML_ERR_INVALID_ARGUMENT:
    case MACML_ERR_IO:
    case MACML_ERR_DIMENSION: return kExitConfig;
    case MACML_ERR_NUMERICAL: return kExitNumerical;
    default: return 1;
  }
}

void check(macml_status s) {
  if (s != MACML_OK) throw CliError{exit_code(s), std::string(macml_status_name(s)) + ": " + macml_last_error()};
}

// Owns a string returned by the library.
struct Owned {
  char* p = nullptr;
  ~Owned() { macml_free(p); }
  std::string str() const { return p ? p : ""; }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError{kExitConfig, "cannot read '" + path + "'"};
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw CliError{kExitConfig, "cannot write '" + path + "'"};
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw CliError{kExitConfig, what + " is not valid JSON: " + e.what()};
  }
}

std::vector<std::string> split_methods(const std::string& list) {
  std::vector<std::string> out;
  std::stringstream ss(list);
  std::string m;
  while (std::getline(ss, m, ','))
    if (!m.empty()) out.push_back(m);
  return out;
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) std::cout << text << "\n";
  else write_file(out_path, text + "\n");
}

struct Options {
  std::string config, out, methods, scale;
  std::uint64_t seed = 0;
  bool seed_set = false;
  unsigned threads = 0;
  double grad_tol = 0.0;
  bool verbose = false;
  std::size_t count = 100, k = 3;
  std::int64_t draws = 1000000;
};

int cmd_approx(const Options& o) {
  Owned report;
  check(macml_approx_report(read_file(o.config).c_str(), o.methods.empty() ? nullptr : o.methods.c_str(),
                            &report.p));
  const json r = parse_json(report.str(), "report");
  if (!o.out.empty()) {
    emit(report.str(), o.out);
    return kExitOk;
  }
  if (r.contains("oracle")) std::printf("%-8s %.17g\n", "oracle", r["oracle"].get<double>());
  for (const auto& row : r["results"]) {
    std::printf("%-8s %.17g", row["method"].get<std::string>().c_str(), row["value"].get<double>());
    if (row.contains("abs_error")) std::printf("  abs_error %.3e", row["abs_error"].get<double>());
    std::printf("\n");
  }
  return kExitOk;
}

int cmd_fit(const Options& o) {
  json cfg = parse_json(read_file(o.config), "fit config");
  if (!cfg.is_object()) throw CliError{kExitConfig, "fit config must be a JSON object"};
  if (o.seed_set) {
    cfg["perm_seed"] = o.seed;
    if (cfg.contains("simulate") && cfg["simulate"].is_object()) cfg["simulate"]["seed"] = o.seed;
  }
  if (o.grad_tol > 0.0) cfg["grad_tol"] = o.grad_tol;
  std::vector<std::string> methods =
      o.methods.empty() ? std::vector<std::string>{cfg.value("method", std::string("SJ-1"))} : split_methods(o.methods);
  json results = json::array();
  for (const auto& m : methods) {
    cfg["method"] = m;
    Owned r;
    check(macml_fit(cfg.dump().c_str(), &r.p));
    json fit = parse_json(r.str(), "fit result");
    fit["config"] = cfg;
    results.push_back(std::move(fit));
  }
  emit(results.size() == 1 ? results[0].dump(2) : results.dump(2), o.out);
  std::size_t failed = 0;
  for (const auto& r : results) failed += r.value("numerical_failure", false) ? 1 : 0;
  if (failed > 0) {
    std::fprintf(stderr, "%zu of %zu fits failed numerically\n", failed, results.size());
    return kExitNumerical;
  }
  return kExitOk;
}

void log_line(const char* line, void*) { std::fprintf(stderr, "%s\n", line); }

int cmd_study(const Options& o) {
  json cfg = parse_json(read_file(o.config), "study config");
  if (!o.scale.empty()) {
    if (cfg.contains("config_hash")) throw CliError{kExitConfig, "--scale cannot be applied to a manifest"};
    cfg["scale"] = o.scale;
  }
  macml_study* raw = nullptr;
  check(macml_study_create(cfg.dump().c_str(), &raw));
  std::unique_ptr<macml_study, decltype(&macml_study_destroy)> study(raw, &macml_study_destroy);
  if (o.seed_set) check(macml_study_set_seed(study.get(), o.seed));
  if (o.threads > 0) check(macml_study_set_threads(study.get(), o.threads));
  if (!o.methods.empty()) check(macml_study_set_methods(study.get(), o.methods.c_str()));
  if (o.grad_tol > 0.0) check(macml_study_set_grad_tol(study.get(), o.grad_tol));

  Owned resolved;
  check(macml_study_config(study.get(), &resolved.p));
  const std::string kind = parse_json(resolved.str(), "config")["kind"].get<std::string>();
  std::string csv_path = o.out.empty() ? kind + ".csv" : o.out;
  std::string manifest_path = csv_path;
  if (manifest_path.size() > 4 && manifest_path.compare(manifest_path.size() - 4, 4, ".csv") == 0)
    manifest_path.resize(manifest_path.size() - 4);
  manifest_path += ".manifest.json";

  check(macml_study_run(study.get(), o.verbose ? &log_line : nullptr, nullptr));
  Owned csv, manifest;
  check(macml_study_table_csv(study.get(), &csv.p));
  check(macml_study_manifest(study.get(), csv_path.c_str(), &manifest.p));
  write_file(csv_path, csv.str());
  write_file(manifest_path, manifest.str() + "\n");

  std::size_t units = 0, failed = 0, nonconverged = 0;
  check(macml_study_counts(study.get(), &units, &failed, &nonconverged));
  std::printf("wrote %s and %s\n", csv_path.c_str(), manifest_path.c_str());
  std::printf("units %zu, failed %zu, not converged %zu\n", units, failed, nonconverged);
  if (failed > 0) {
    std::fprintf(stderr, "%zu of %zu units failed numerically\n", failed, units);
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_oracle_check(const Options& o) {
  Owned report;
  check(macml_oracle_check(o.count, o.k, o.seed_set ? o.seed : 1, o.draws, &report.p));
  emit(report.str(), o.out);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multinomial probit estimation with analytic MVN CDF approximations"};
  app.set_version_flag("--version", std::string(macml_version()));
  app.require_subcommand(1);
  Options o;

  auto seed_opt = [&](CLI::App* c) {
    c->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t s) { o.seed = s, o.seed_set = true; }, "Seed override");
  };

  auto* approx = app.add_subcommand("approx", "Evaluate the approximations on one orthant problem");
  approx->add_option("--config", o.config, "Problem JSON: {\"b\": [...], \"R\": [[...]], \"order\": [...]}")
      ->required();
  approx->add_option("--methods", o.methods, "Comma-separated methods (SJ-1,SJ-A,ME,bME,oracle)");
  approx->add_option("--out", o.out, "Write the JSON report here");

  auto* fit = app.add_subcommand("fit", "Fit a model by maximum approximate composite likelihood");
  fit->add_option("--config", o.config, "Fit config JSON")->required();
  fit->add_option("--methods", o.methods, "Comma-separated methods; one fit each");
  fit->add_option("--grad-tol", o.grad_tol, "Gradient tolerance")->check(CLI::PositiveNumber);
  fit->add_option("--out", o.out, "Write the JSON result here");
  seed_opt(fit);

  auto* study = app.add_subcommand("study", "Run a simulation study");
  study->add_option("--config", o.config, "Study config JSON or a run manifest")->required();
  study->add_option("--scale", o.scale, "Replication budget")->check(CLI::IsMember({"desk", "paper"}));
  study->add_option("--methods", o.methods, "Comma-separated methods");
  study->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
  study->add_option("--grad-tol", o.grad_tol, "Single gradient tolerance (finite-sample studies)")
      ->check(CLI::PositiveNumber);
  study->add_option("--out", o.out, "Output CSV path; the manifest goes next to it");
  study->add_flag("-v,--verbose", o.verbose, "Progress on stderr");
  seed_opt(study);

  auto* oracle = app.add_subcommand("oracle-check", "Compare the oracle CDF with Monte Carlo");
  oracle->add_option("--count", o.count, "Number of random problems")->check(CLI::PositiveNumber);
  oracle->add_option("--k", o.k, "Dimension (1-4)")->check(CLI::Range(1, 4));
  oracle->add_option("--draws", o.draws, "Monte Carlo draws per problem")->check(CLI::Range(2LL, 1LL << 40));
  oracle->add_option("--out", o.out, "Write the JSON report here");
  seed_opt(oracle);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (approx->parsed()) return cmd_approx(o);
    if (fit->parsed()) return cmd_fit(o);
    if (study->parsed()) return cmd_study(o);
    return cmd_oracle_check(o);
  } catch (const CliError& e) {
    std::fprintf(stderr, "error: %s\n", e.message.c_str());
    return e.code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
