#include "macml/randgen.hpp"

#include <cmath>

#include "macml/error.hpp"

namespace macml {

void validate(const DgpConfig& cfg) {
  require(cfg.L > 0.0, "dgp: L must be positive");
  require(cfg.K_sd > 0.0, "dgp: K_sd must be positive");
  require(cfg.eta >= 1.0, "dgp: eta must be >= 1");
  require(cfg.J >= 2, "dgp: need at least two alternatives");
}

double symmetric_beta(double a, std::mt19937_64& rng) {
  std::gamma_distribution<double> g(a, 1.0);
  const double x = g(rng), y = g(rng);
  return x / (x + y);
}

Matrix<double> vine_correlation(std::size_t K, double eta, std::mt19937_64& rng) {
  require(K >= 1, "vine_correlation: K must be >= 1");
  require(eta >= 1.0, "vine_correlation: eta must be >= 1");
  Matrix<double> partial(K, K), r = Matrix<double>::identity(K);
  double beta = eta + (double(K) - 1.0) / 2.0;
  for (std::size_t k = 0; k + 1 < K; ++k) {
    beta -= 0.5;
    for (std::size_t i = k + 1; i < K; ++i) {
      partial(k, i) = 2.0 * symmetric_beta(beta, rng) - 1.0;
      double p = partial(k, i);
      for (std::size_t l = k; l-- > 0;)
        p = p * std::sqrt((1.0 - partial(l, i) * partial(l, i)) * (1.0 - partial(l, k) * partial(l, k))) +
            partial(l, i) * partial(l, k);
      r(k, i) = r(i, k) = p;
    }
  }
  return r;
}

namespace {

bool differenced_pd(const MnpSpec& s) {
  try {
    for (std::size_t i = 0; i < s.alternatives(); ++i) to_orthant(moments_of(s), i);
  } catch (const Error& e) {
    if (!e.numerical()) throw;
    return false;
  }
  return true;
}

}  // namespace

MnpSpec draw_true_model(const DgpConfig& cfg, std::mt19937_64& rng) {
  validate(cfg);
  std::uniform_real_distribution<double> asc(-cfg.L, cfg.L), sd(0.0, cfg.K_sd);
  for (int attempt = 0; attempt < 100; ++attempt) {
    MnpSpec s;
    s.ascs.resize(cfg.J);
    for (auto& a : s.ascs) a = asc(rng);
    s.ascs[0] = 1.0;
    std::vector<double> d(cfg.J);
    for (auto& x : d) x = std::max(sd(rng), kSdFloor);
    const auto r = vine_correlation(cfg.J, cfg.eta, rng);
    s.sigma = Matrix<double>(cfg.J, cfg.J);
    for (std::size_t i = 0; i < cfg.J; ++i)
      for (std::size_t j = 0; j < cfg.J; ++j) s.sigma(i, j) = d[i] * r(i, j) * d[j];
    if (differenced_pd(s)) return s;
  }
  fail(ErrorKind::SingularMatrix, "draw_true_model: no PD differenced covariance after 100 draws");
}

std::uint64_t substream_seed(std::uint64_t master, std::uint64_t index) {
  // splitmix64 finalizer over (master, index)
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace macml
