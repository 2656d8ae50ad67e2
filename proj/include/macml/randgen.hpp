#pragma once

// Random true models for the asymptotic study: correlation matrices from the
// C-vine sampler with density proportional to det(R)^(eta - 1), standard
// deviations and ASCs from uniform draws.

#include <cstdint>
#include <random>

#include "macml/matrix.hpp"
#include "macml/mnp_model.hpp"

namespace macml {

struct DgpConfig {
  double L = 1.0;     // ASCs uniform on [-L, L]
  double K_sd = 1.0;  // standard deviations uniform on [0, K_sd]
  double eta = 1.0;
  std::size_t J = 4;
  std::uint64_t seed = 1;
};

void validate(const DgpConfig& cfg);

inline constexpr double kSdFloor = 1e-3;

// Symmetric Beta(a, a) on (0, 1) via two gamma draws.
double symmetric_beta(double a, std::mt19937_64& rng);

// C-vine: the partial correlation of (k, i) given 0..k-1 is 2 Beta(beta_k,
// beta_k) - 1 with beta_k = eta + (K - 2 - k) / 2, then mapped to a raw
// correlation through the partial-correlation recursion.
Matrix<double> vine_correlation(std::size_t K, double eta, std::mt19937_64& rng);

// ASCs uniform on [-L, L] with the first fixed to 1; Sigma = D(s) R D(s).
// Redraws (at most 100 times) when a differenced covariance is not PD.
MnpSpec draw_true_model(const DgpConfig& cfg, std::mt19937_64& rng);

// Independent stream seed for replication `index` of a run seeded `master`.
std::uint64_t substream_seed(std::uint64_t master, std::uint64_t index);

}  // namespace macml
