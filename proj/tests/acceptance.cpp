// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any failed (unless --exit-zero).

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "macml/estimation.hpp"
#include "macml/experiments.hpp"
#include "macml/mvn_approx.hpp"
#include "macml/randgen.hpp"

using namespace macml;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const std::vector<Method> kApprox{Method::SJ1, Method::SJA, Method::ME, Method::BME};

OrthantProblem random_problem(std::size_t k, std::mt19937_64& rng, bool identity) {
  std::normal_distribution<double> n01;
  OrthantProblem p;
  for (std::size_t i = 0; i < k; ++i) p.b.push_back(n01(rng));
  p.R = identity ? Matrix<double>::identity(k) : vine_correlation(k, 1.0, rng);
  return p;
}

MnpSpec random_spec(std::size_t J, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> asc(-1.0, 1.0), sd(0.3, 1.5);
  MnpSpec s;
  s.ascs.push_back(1.0);
  for (std::size_t j = 1; j < J; ++j) s.ascs.push_back(asc(rng));
  const auto r = vine_correlation(J, 1.0, rng);
  std::vector<double> d(J);
  for (auto& x : d) x = sd(rng);
  s.sigma = Matrix<double>(J, J);
  for (std::size_t i = 0; i < J; ++i)
    for (std::size_t j = 0; j < J; ++j) s.sigma(i, j) = d[i] * r(i, j) * d[j];
  return s;
}

MixedMnpSpec random_mixed(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0), diag(0.5, 1.0);
  MixedMnpSpec s;
  s.J = 4;
  s.mu = {1.0 + 0.5 * u(rng), u(rng), u(rng)};
  s.gamma_chol = Matrix<double>(3, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < i; ++j) s.gamma_chol(i, j) = 0.4 * u(rng);
    s.gamma_chol(i, i) = diag(rng);
  }
  return s;
}

// ---- 1 ----
Outcome exactness() {
  std::mt19937_64 rng(101);
  ApproxOptions opts;
  opts.clamp_floor = 1e-300;
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t k = 2 + t % 3;
    const auto p = random_problem(k, rng, true);
    double prod = 1.0;
    for (double b : p.b) prod *= std_normal_cdf(b);
    const auto perm = random_permutation(k, rng);
    for (Method m : kApprox) worst = std::max(worst, std::abs(approximate(m, p, perm, opts) - prod));
  }
  double worst2 = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const auto p = random_problem(2, rng, false);
    const double exact = bvn_cdf(p.b[0], p.b[1], p.R(0, 1));
    const auto perm = random_permutation(2, rng);
    for (Method m : {Method::SJ1, Method::SJA, Method::BME})
      worst2 = std::max(worst2, std::abs(approximate(m, p, perm, opts) - exact));
  }
  return {worst <= 1e-12 && worst2 <= 1e-13,
          fmt("R=I max |err| %.2e (tol 1e-12); K=2 SJ/bME vs bvn max |err| %.2e (tol 1e-13)", worst, worst2)};
}

// ---- 2 ----
Outcome oracle_fidelity() {
  double worst = 0.0;
  for (double rho : {-0.4, 0.0, 0.3, 0.5, 0.9}) {
    OrthantProblem p;
    p.b = {0.0, 0.0, 0.0};
    p.R = Matrix<double>(3, 3, rho);
    for (int i = 0; i < 3; ++i) p.R(i, i) = 1.0;
    const double exact = 0.125 + 3.0 * std::asin(rho) / (4.0 * std::numbers::pi);
    worst = std::max(worst, std::abs(reference_cdf(p, 1e-10) - exact));
  }
  std::mt19937_64 rng(202);
  double max_z = 0.0;
  int outside = 0;
  const std::int64_t draws = 10'000'000;
  for (int t = 0; t < 100; ++t) {
    const auto p = random_problem(3, rng, false);
    const auto mc = monte_carlo_cdf(p, draws, substream_seed(202, t));
    const double z = std::abs(reference_cdf(p, 1e-10) - mc.estimate) / std::max(mc.std_error, 1.0 / draws);
    max_z = std::max(max_z, z);
    outside += z > 4.0 ? 1 : 0;
  }
  return {worst <= 1e-8 && outside == 0,
          fmt("orthant formula max |err| %.2e (tol 1e-8); MC 1e7 draws: max z %.2f, %d of 100 outside 4 sigma",
              worst, max_z, outside)};
}

// ---- 3 ----
double relative_gap(const std::vector<double>& a, const std::vector<double>& fd) {
  double gap = 0.0, scale = 1e-6;
  for (std::size_t i = 0; i < a.size(); ++i) {
    gap = std::max(gap, std::abs(a[i] - fd[i]));
    scale = std::max(scale, std::abs(fd[i]));
  }
  return gap / scale;
}

Outcome gradients() {
  std::mt19937_64 rng(303);
  std::normal_distribution<double> jitter(0.0, 0.2);
  double worst = 0.0;
  int bad = 0;
  for (int t = 0; t < 100; ++t) {
    FitConfig cfg;
    cfg.method = kApprox[t % 4];
    cfg.perm_seed = 1000 + t;
    std::vector<double> ga, gfd;
    if (t % 2 == 0) {
      const auto s = random_spec(4, rng);
      const auto data = simulate_choices(s, 200, rng);
      auto theta = pack(s);
      for (auto& x : theta) x += jitter(rng);
      const PseudoLikelihood ll(AscModel{s.sigma, 1.0}, data, cfg, pack(s));
      ll.value_and_gradient(theta, ga);
      ll.central_difference(theta, gfd);
    } else {
      const auto s = random_mixed(rng);
      const auto data = simulate_choices(s, 200, rng);
      auto theta = pack(s);
      for (auto& x : theta) x += jitter(rng);
      const PseudoLikelihood ll(MixedModel{4, 3, 0.5}, data, cfg, pack(s));
      ll.value_and_gradient(theta, ga);
      ll.central_difference(theta, gfd);
    }
    const double g = relative_gap(ga, gfd);
    worst = std::max(worst, g);
    bad += g > 1e-4 ? 1 : 0;
  }
  return {bad == 0, fmt("100 triples (ASC J=4 and mixed J=4 M=3, N=200): max relative gap %.2e (tol 1e-4)", worst)};
}

// ---- 4 ----
Outcome consistency() {
  double worst = 0.0;
  int bad = 0;
  for (int t = 0; t < 50; ++t) {
    DgpConfig d;
    d.L = 1.0 + t % 2;
    d.K_sd = 1.0 + (t / 2) % 4;
    std::mt19937_64 rng(substream_seed(404, t));
    const auto truth = draw_true_model(d, rng);
    const auto r = asymptotic_bias(truth, Method::Oracle, 2.0 * d.L);
    double norm = 0.0;
    for (double b : r.bias) norm += b * b;
    norm = std::sqrt(norm);
    worst = std::max(worst, norm);
    bad += norm < 1e-4 ? 0 : 1;
  }
  return {bad == 0, fmt("oracle bias norm on 50 models: max %.2e (tol 1e-4)", worst)};
}

// ---- 5, 6 ----
struct TableCheck {
  const MetricsTable& t;
  std::string missing;
  double get(const std::string& method, const std::string& target, const std::string& metric,
             std::optional<double> x = std::nullopt, std::optional<double> eta = std::nullopt) {
    const auto* r = t.find(method, target, metric, x, eta);
    if (!r) {
      missing += " " + method + "/" + target + "/" + metric;
      return std::nan("");
    }
    return r->value;
  }
};

Outcome inconsistency(const AsymptoticResult& r) {
  TableCheck t{r.table};
  const double sja = t.get("SJ-A", "max_coord", "mae", 0.0), sj1 = t.get("SJ-1", "max_coord", "mae", 0.0);
  const double me = t.get("ME", "max_coord", "mae", 0.0), bme = t.get("bME", "max_coord", "mae", 0.0);
  const double share = t.get("ME", "max_coord", "share_above_0.05", 0.0);
  const bool pass = t.missing.empty() && me >= 1.5 * sja && me >= 1.5 * bme && share >= 0.05;
  return {pass, fmt("%zu models; max-coord MAE SJ-A %.4f SJ-1 %.4f ME %.4f bME %.4f; ME/SJ-A %.2f, ME/bME %.2f "
                    "(need >= 1.5); ME share > 0.05: %.3f (need >= 0.05)%s",
                    r.models.size(), sja, sj1, me, bme, me / sja, me / bme, share, t.missing.c_str())};
}

Outcome probability_gap(const AsymptoticResult& r) {
  TableCheck t{r.table};
  bool ok = true;
  std::string parts;
  for (Method m : kApprox) {
    const auto name = to_string(m);
    const double p = t.get(name, "max_prob", "mae", 0.0), c = t.get(name, "max_coord", "mae", 0.0);
    ok = ok && p <= c;
    parts += fmt(" %s %.4f/%.4f", name.c_str(), p, c);
  }
  const double sja = t.get("SJ-A", "max_prob", "mae", 0.0);
  ok = ok && sja < 0.01 && t.missing.empty();
  return {ok, fmt("prob/param MAE:%s; SJ-A prob MAE %.4f (need < 0.01)%s", parts.c_str(), sja, t.missing.c_str())};
}

// ---- 7 ----
Outcome eta_monotone(const AsymptoticResult& r, const StudyConfig& cfg) {
  bool ok = true;
  std::string parts;
  for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
    double mae[2], se[2];
    std::size_t n[2];
    for (int e = 0; e < 2; ++e) {
      const double eta = e == 0 ? 1.0 : 50.0;
      std::vector<double> v;
      for (const auto& m : r.models)
        if (m.eta == eta && !m.outcomes[mi].failed) v.push_back(m.outcomes[mi].bias.max_abs_bias);
      n[e] = v.size();
      double s = 0.0, s2 = 0.0;
      for (double x : v) s += x;
      mae[e] = s / double(v.size());
      for (double x : v) s2 += (x - mae[e]) * (x - mae[e]);
      se[e] = std::sqrt(s2 / double(v.size() - 1) / double(v.size()));
    }
    const double bound = mae[0] + 2.0 * std::sqrt(se[0] * se[0] + se[1] * se[1]);
    ok = ok && mae[1] <= bound;
    parts += fmt(" %s %.4f -> %.4f (bound %.4f, n %zu/%zu);", to_string(cfg.methods[mi]).c_str(), mae[0], mae[1],
                 bound, n[0], n[1]);
  }
  return {ok, "max-coord MAE eta 1 -> 50:" + parts};
}

// ---- 8 ----
Outcome finite_sample(const FiniteSampleResult& r, const StudyConfig& cfg) {
  TableCheck t{r.table};
  bool a = true, b = true;
  std::string parts;
  for (Method m : cfg.methods) {
    const auto name = to_string(m);
    double worst = 0.0;
    for (std::size_t p = 0; p < 5; ++p)
      worst = std::max(worst, std::abs(t.get(name, r.names[p], "mean") - r.truth[p]));
    const double q = t.get(name, "quotients", "mean_mae");
    a = a && worst < 0.15;
    b = b && q < 0.06;
    parts += fmt(" %s: max |mean b - b0| %.3f, quotient MAE %.4f, mean MAE %.4f;", name.c_str(), worst, q,
                 t.get(name, "all", "mean_mae"));
  }
  const bool c = t.get("bME", "all", "mean_mae") <= t.get("SJ-1", "all", "mean_mae");
  const bool pass = a && b && c && t.missing.empty();
  return {pass, fmt("(a) %s (b) %s (c) %s;", a ? "ok" : "FAIL", b ? "ok" : "FAIL", c ? "ok" : "FAIL") + parts +
                    t.missing};
}

// ---- 9 ----
std::string csv_of(const MetricsTable& t) {
  std::ostringstream out;
  write_table(t, out);
  return out.str();
}

Outcome determinism() {
  auto a = default_config(StudyKind::Asymptotic, Scale::Desk);
  a.replications = 3;
  a.eta_values = {1.0, 50.0};
  a.seed = 909;
  std::vector<std::string> outs;
  for (unsigned threads : {1u, 4u, 4u}) {
    a.threads = threads;
    outs.push_back(csv_of(run_asymptotic_study(a).table));
  }
  auto f = default_config(StudyKind::ToleranceSweep, Scale::Desk);
  f.datasets = 2;
  f.N = 300;
  f.seed = 909;
  std::vector<std::string> fouts;
  for (unsigned threads : {1u, 3u, 3u}) {
    f.threads = threads;
    fouts.push_back(csv_of(run_finite_sample_study(f).table));
  }
  const bool ok = outs[0] == outs[1] && outs[1] == outs[2] && fouts[0] == fouts[1] && fouts[1] == fouts[2];
  return {ok, fmt("asymptotic (%zu bytes) and tolerance-sweep (%zu bytes) CSVs identical across 1 and 3-4 threads "
                  "and repeated runs: %s",
                  outs[0].size(), fouts[0].size(), ok ? "yes" : "no")};
}

// ---- 10 ----
Outcome sj_identities() {
  std::mt19937_64 rng(1010);
  ApproxOptions opts;
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto p = random_problem(3, rng, false);
    double sum = 0.0;
    const auto perms = all_permutations(3);
    for (const auto& perm : perms) sum += sj_single(p, perm, opts);
    worst = std::max(worst, std::abs(sj_average_all(p, opts) - sum / double(perms.size())));
  }
  double jensen = -1e300;
  std::normal_distribution<double> jitter(0.0, 0.5);
  int bad = 0;
  for (int t = 0; t < 100; ++t) {
    const auto s = random_spec(4, rng);
    auto theta = pack(s);
    for (auto& x : theta) x += jitter(rng);
    const double gap = limiting_loglik(theta, s, Method::SJ1) - limiting_loglik(theta, s, Method::SJA);
    jensen = std::max(jensen, gap);
    bad += gap > 1e-12 ? 1 : 0;
  }
  return {worst <= 1e-15 && bad == 0,
          fmt("SJ-A vs enumerated SJ-1 mean max |diff| %.2e (tol 1e-15); max (SJ-1 - SJ-A) limiting value %.2e "
              "(tol 1e-12)",
              worst, jensen)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::string report;
  bool exit_zero = false;
  app.add_option("--only", only, "Criteria to run (default all)")->check(CLI::Range(1, 10));
  app.add_option("--report", report, "Also write the result lines to this file");
  app.add_flag("--exit-zero", exit_zero, "Exit 0 when every criterion ran, even if some failed");
  CLI11_PARSE(app, argc, argv);
  const std::set<int> want(only.begin(), only.end());
  auto enabled = [&](int c) { return want.empty() || want.count(c) > 0; };

  const double budget[11] = {0, 10, 300, 300, 600, 7200, 7200, 3600, 10800, 600, 300};
  std::vector<std::string> lines;
  int failed = 0;
  auto record = [&](int c, const Outcome& o, double secs) {
    const bool pass = o.pass && secs < budget[c];
    failed += pass ? 0 : 1;
    lines.push_back(fmt("criterion %d: %s  %s [%.1f s, budget %.0f s]", c, pass ? "PASS" : "FAIL", o.detail.c_str(),
                        secs, budget[c]));
    std::printf("%s\n", lines.back().c_str());
    std::fflush(stdout);
  };
  auto timed = [&](int c, const std::function<Outcome()>& f) {
    if (!enabled(c)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    record(c, o, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  };

  timed(1, exactness);
  timed(2, oracle_fidelity);
  timed(3, gradients);
  timed(4, consistency);
  if (enabled(5) || enabled(6)) {
    // One run serves both; each line reports the shared run time.
    const auto t0 = std::chrono::steady_clock::now();
    std::optional<AsymptoticResult> r;
    std::string error;
    try {
      r = run_asymptotic_study(default_config(StudyKind::Asymptotic, Scale::Desk));
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (enabled(5)) record(5, r ? inconsistency(*r) : Outcome{false, "error: " + error}, secs);
    if (enabled(6)) record(6, r ? probability_gap(*r) : Outcome{false, "error: " + error}, secs);
  }
  timed(7, [] {
    auto cfg = default_config(StudyKind::Asymptotic, Scale::Desk);
    cfg.eta_values = {1.0, 50.0};
    cfg.replications = 25;  // 8 (L, K) cells: 200 models per eta
    return eta_monotone(run_asymptotic_study(cfg), cfg);
  });
  timed(8, [] {
    const auto cfg = default_config(StudyKind::FiniteSample, Scale::Desk);
    return finite_sample(run_finite_sample_study(cfg), cfg);
  });
  timed(9, determinism);
  timed(10, sj_identities);

  std::printf("%d of %zu criteria failed\n", failed, lines.size());
  if (!report.empty()) {
    std::ofstream out(report);
    for (const auto& l : lines) out << l << "\n";
    out << failed << " of " << lines.size() << " criteria failed\n";
  }
  return failed == 0 || exit_zero ? 0 : 1;
}
