#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "macml/mnp_model.hpp"
#include "test_util.hpp"

using namespace macml;

namespace {

MnpSpec random_spec(std::size_t J, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> asc(-1.0, 1.0), sd(0.3, 1.5);
  MnpSpec s;
  s.ascs.push_back(1.0);
  for (std::size_t j = 1; j < J; ++j) s.ascs.push_back(asc(rng));
  const auto r = testutil::random_correlation(J, rng);
  std::vector<double> d(J);
  for (auto& x : d) x = sd(rng);
  s.sigma = Matrix<double>(J, J);
  for (std::size_t i = 0; i < J; ++i)
    for (std::size_t j = 0; j < J; ++j) s.sigma(i, j) = d[i] * r(i, j) * d[j];
  return s;
}

MnpSpec symmetric_spec(std::size_t J, double rho) {
  MnpSpec s;
  s.ascs.assign(J, 1.0);
  s.sigma = Matrix<double>(J, J);
  for (std::size_t i = 0; i < J; ++i)
    for (std::size_t j = 0; j < J; ++j) s.sigma(i, j) = i == j ? 1.0 : rho;
  return s;
}

}  // namespace

TEST(Differencing, Examples) {
  const auto d = differencing_matrix(0, 3);
  const double expect13[2][3] = {{-1, 1, 0}, {-1, 0, 1}};
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) EXPECT_EQ(d.matrix(r, c), expect13[r][c]);
  const auto d22 = differencing_matrix(1, 2);
  EXPECT_EQ(d22.matrix(0, 0), 1.0);
  EXPECT_EQ(d22.matrix(0, 1), -1.0);
  const auto d4 = differencing_matrix(2, 5);
  for (std::size_t r = 0; r < 4; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 5; ++c) sum += d4.matrix(r, c) * 3.7;
    EXPECT_EQ(sum, 0.0);
    EXPECT_EQ(d4.matrix(r, 2), -1.0);
  }
  EXPECT_THROW(differencing_matrix(3, 3), Error);
}

TEST(ToOrthant, BinaryProbit) {
  MnpSpec s{{1.0, 0.3}, Matrix<double>::identity(2)};
  const auto p = to_orthant(s, 0);
  ASSERT_EQ(p.dim(), 1u);
  EXPECT_NEAR(std_normal_cdf(p.b[0]), std_normal_cdf((1.0 - 0.3) / std::sqrt(2.0)), 1e-15);
  EXPECT_NEAR(choice_probability(s, 1, Method::Oracle, Permutation::identity(1)),
              std_normal_cdf((0.3 - 1.0) / std::sqrt(2.0)), 1e-15);
}

TEST(ToOrthant, MatchesDifferencingMatrix) {
  std::mt19937_64 rng(1);
  const auto s = random_spec(4, rng);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto d = differencing_matrix(i, 4).matrix;
    const auto c = multiply(multiply(d, s.sigma), transpose(d));
    const auto p = to_orthant(s, i);
    for (std::size_t a = 0; a < 3; ++a) {
      double db = 0.0;
      for (std::size_t j = 0; j < 4; ++j) db += d(a, j) * s.ascs[j];
      EXPECT_NEAR(p.b[a], -db / std::sqrt(c(a, a)), 1e-14);
      for (std::size_t b = 0; b < 3; ++b)
        EXPECT_NEAR(p.R(a, b), c(a, b) / std::sqrt(c(a, a) * c(b, b)), 1e-14);
    }
    validate(p);
  }
}

TEST(ToOrthant, ScaleInvariance) {
  std::mt19937_64 rng(2);
  const auto s = random_spec(4, rng);
  MnpSpec scaled = s;
  const double c = 3.7;
  for (auto& a : scaled.ascs) a *= c;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) scaled.sigma(i, j) *= c * c;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto p = to_orthant(s, i), q = to_orthant(scaled, i);
    for (std::size_t a = 0; a < 3; ++a) {
      EXPECT_NEAR(p.b[a], q.b[a], 1e-12);
      for (std::size_t b = 0; b < 3; ++b) EXPECT_NEAR(p.R(a, b), q.R(a, b), 1e-12);
    }
  }
}

TEST(ToOrthant, NonPositiveDefiniteDifferences) {
  MnpSpec s{{1.0, 0.0, 0.0}, Matrix<double>(3, 3, 1.0)};  // all utilities perfectly correlated
  EXPECT_THROW(to_orthant(s, 0), Error);
}

TEST(ChoiceProbability, SymmetricSpec) {
  const auto s = symmetric_spec(4, 0.3);
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_NEAR(choice_probability(s, i, Method::Oracle, Permutation::identity(3)), 0.25, 1e-8);
}

TEST(ChoiceProbability, OracleSumsToOne) {
  std::mt19937_64 rng(3);
  for (std::size_t J : {2u, 3u, 4u, 5u}) {
    for (int t = 0; t < 10; ++t) {
      const auto s = random_spec(J, rng);
      double sum = 0.0;
      for (double p : oracle_probabilities(moments_of(s))) sum += p;
      EXPECT_NEAR(sum, 1.0, 1e-7);
    }
  }
}

TEST(ChoiceProbability, ApproximationsCloseToOracle) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 20; ++t) {
    const auto s = random_spec(4, rng);
    for (std::size_t i = 0; i < 4; ++i) {
      const auto perm = random_permutation(3, rng);
      const double truth = choice_probability(s, i, Method::Oracle, perm);
      EXPECT_LT(std::abs(choice_probability(s, i, Method::SJ1, perm) - truth), 0.05);
      EXPECT_NEAR(truth, reference_cdf(to_orthant(s, i), 1e-8), 1e-8);
    }
  }
}

TEST(ComponentOrder, Rules) {
  MnpSpec s{{1.0, -0.5, 2.0, 0.3}, Matrix<double>::identity(4)};
  // Alternatives other than 0 are 1, 2, 3 with means -0.5, 2.0, 0.3.
  EXPECT_EQ(component_order(moments_of(s), 0, OrderingRule::AscDescending).order,
            (std::vector<int>{1, 2, 0}));
  // Limits (1 - mean_j)/sqrt(2) descend in the opposite order.
  EXPECT_EQ(component_order(moments_of(s), 0, OrderingRule::LimitDescending).order,
            (std::vector<int>{0, 2, 1}));
  EXPECT_EQ(parse_ordering(to_string(OrderingRule::LimitDescending)), OrderingRule::LimitDescending);
}

TEST(MixedModel, MomentExamples) {
  Matrix<double> X(3, 2);
  X(0, 0) = 0.5, X(0, 1) = -1.0, X(1, 0) = 2.0, X(1, 1) = 0.25, X(2, 0) = -0.7, X(2, 1) = 1.1;
  const std::vector<double> mu{1.5, -1.0};
  const auto zero = mixed_moments(X, mu, Matrix<double>(2, 2), 0.5);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) EXPECT_EQ(zero.cov(a, b), a == b ? 0.5 : 0.0);
  EXPECT_NEAR(zero.mean[1], 2.0 * 1.5 - 0.25, 1e-15);

  Matrix<double> gamma(3, 3);
  gamma(0, 0) = 1.0, gamma(1, 1) = 2.0, gamma(2, 2) = 0.5;
  gamma(0, 1) = gamma(1, 0) = 0.3;
  gamma(1, 2) = gamma(2, 1) = -0.2;
  const auto ident = mixed_moments(Matrix<double>::identity(3), std::vector<double>{0, 0, 0}, gamma, 0.0);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) EXPECT_EQ(ident.cov(a, b), gamma(a, b));
}

TEST(MixedModel, FiniteSampleGammaMatchesDirectProduct) {
  const double g[5][5] = {{1, -.5, .25, .75, 0},
                          {-.5, 1, .25, -.5, 0},
                          {.25, .25, 1, .33, 0},
                          {.75, -.5, .33, 1, 0},
                          {0, 0, 0, 0, 1}};
  Matrix<double> gamma(5, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) gamma(i, j) = g[i][j];
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  Matrix<double> X(5, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) X(i, j) = n01(rng);
  const auto m = mixed_moments(X, std::vector<double>{1.5, -1, 2, 1, -2}, gamma, 0.5);
  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < 5; ++b) {
      long double direct = a == b ? 0.5L : 0.0L;
      for (int k = 0; k < 5; ++k)
        for (int l = 0; l < 5; ++l) direct += (long double)X(a, k) * g[k][l] * X(b, l);
      EXPECT_NEAR(m.cov(a, b), static_cast<double>(direct), 1e-14);
    }
}

TEST(Loglik, Examples) {
  const std::vector<double> quarter{0.25, 0.25};
  EXPECT_DOUBLE_EQ(loglik(quarter), std::log(0.25));
  const std::vector<double> ones{1.0, 1.0, 1.0};
  EXPECT_EQ(loglik(ones), 0.0);
  const std::vector<double> zero{0.5, 0.0};
  EXPECT_THROW(loglik(zero), Error);
}

TEST(Loglik, FrequencyFormMatchesPerObservation) {
  std::mt19937_64 rng(6);
  const auto s = random_spec(4, rng);
  const auto data = simulate_choices(s, 1000, rng);
  const auto probs = oracle_probabilities(moments_of(s));
  std::vector<double> per_obs;
  for (int c : data.choices) per_obs.push_back(probs[c]);
  EXPECT_NEAR(loglik(per_obs), loglik_by_frequency(data, probs), 1e-15);
}

TEST(Simulate, DominantAlternative) {
  MnpSpec s{{1.0, -5.0, 8.0, 0.0}, Matrix<double>::identity(4)};
  for (std::size_t i = 0; i < 4; ++i) s.sigma(i, i) = 0.01;
  std::mt19937_64 rng(7);
  const auto data = simulate_choices(s, 10000, rng);
  const auto wins = std::count(data.choices.begin(), data.choices.end(), 2);
  EXPECT_GT(wins, 9900);
}

TEST(Simulate, SymmetricFrequencies) {
  const auto s = symmetric_spec(4, 0.4);
  std::mt19937_64 rng(8);
  const std::size_t n = 40000;
  const auto data = simulate_choices(s, n, rng);
  for (int j = 0; j < 4; ++j) {
    const double f = std::count(data.choices.begin(), data.choices.end(), j) / double(n);
    EXPECT_NEAR(f, 0.25, 4.0 * std::sqrt(0.25 * 0.75 / n));
  }
}

TEST(Simulate, FrequenciesMatchOracle) {
  // Brute-force utility simulation pins down the sign convention of to_orthant.
  std::mt19937_64 rng(9);
  const std::size_t n = 100000;
  for (int t = 0; t < 3; ++t) {
    const auto s = random_spec(4, rng);
    const auto data = simulate_choices(s, n, rng);
    const auto probs = oracle_probabilities(moments_of(s));
    for (int j = 0; j < 4; ++j) {
      const double f = std::count(data.choices.begin(), data.choices.end(), j) / double(n);
      EXPECT_NEAR(f, probs[j], 4.0 * std::sqrt(probs[j] * (1 - probs[j]) / n)) << j;
    }
  }
}

TEST(Simulate, MixedFrequenciesMatchOracle) {
  MixedMnpSpec spec;
  spec.J = 3;
  spec.mu = {1.0, -0.5};
  spec.gamma_chol = Matrix<double>(2, 2);
  spec.gamma_chol(0, 0) = 0.8;
  spec.gamma_chol(1, 0) = 0.3;
  spec.gamma_chol(1, 1) = 0.5;
  std::mt19937_64 rng(10);
  const auto data = simulate_choices(spec, 20000, rng);
  // Each observation has its own design, so compare the average log
  // likelihood with its expectation: sum_n log P_n(y_n) vs sum_n sum_j P_nj log P_nj.
  double ll = 0.0, expected = 0.0, var = 0.0;
  for (std::size_t n = 0; n < data.size(); ++n) {
    const auto probs = oracle_probabilities(mixed_to_spec(spec, data.designs[n]));
    ll += std::log(probs[data.choices[n]]);
    double m1 = 0.0, m2 = 0.0;
    for (double p : probs) {
      m1 += p * std::log(p);
      m2 += p * std::log(p) * std::log(p);
    }
    expected += m1;
    var += m2 - m1 * m1;
  }
  EXPECT_NEAR(ll, expected, 4.0 * std::sqrt(var));
}

TEST(Simulate, Deterministic) {
  const auto s = symmetric_spec(3, 0.2);
  std::mt19937_64 a(11), b(11);
  EXPECT_EQ(simulate_choices(s, 500, a).choices, simulate_choices(s, 500, b).choices);
}

TEST(DatasetCsv, RoundTrip) {
  MixedMnpSpec spec;
  spec.J = 3;
  spec.mu = {1.0, -0.5};
  spec.gamma_chol = Matrix<double>::identity(2);
  std::mt19937_64 rng(12);
  const auto data = simulate_choices(spec, 25, rng);
  std::stringstream ss;
  write_dataset_csv(data, ss);
  const auto back = read_dataset_csv(ss, 3);
  EXPECT_EQ(back.choices, data.choices);
  ASSERT_EQ(back.designs.size(), data.designs.size());
  for (std::size_t n = 0; n < data.size(); ++n) EXPECT_EQ(back.designs[n].data(), data.designs[n].data());

  const auto asc = simulate_choices(symmetric_spec(4, 0.1), 30, rng);
  std::stringstream s2;
  write_dataset_csv(asc, s2);
  EXPECT_EQ(s2.str().rfind("obs_id,choice\n1," + std::to_string(asc.choices[0] + 1) + "\n2,", 0), 0u);
  EXPECT_EQ(read_dataset_csv(s2, 4).choices, asc.choices);

  std::stringstream bad("obs_id,choice\n1,7\n");
  EXPECT_THROW(read_dataset_csv(bad, 4), Error);
}
