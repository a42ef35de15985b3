#pragma once

// Property checks shared by the unit suites and the acceptance binary. Each
// returns the worst observed value of the quantity its name describes so the
// caller decides the tolerance.

#include <cstdint>
#include <string>
#include <vector>

#include "lgn/generators.hpp"
#include "lgn/linalg.hpp"

namespace lgn::testing {

/// Standard-normal n x n matrix scaled by `scale`.
Mat random_matrix(int n, double scale, std::uint64_t seed);

/// Worst |exp((s+t)A) - exp(sA) exp(tA)|_F / |exp((s+t)A)|_F over random draws.
double expm_semigroup_residual(int draws, std::uint64_t seed);
/// Worst |exp(S)^T exp(S) - I|_F over random skew S.
double expm_orthogonality_residual(int draws, std::uint64_t seed);
/// Worst |exp(A) exp(-A) - I|_F over random A.
double expm_inverse_residual(int draws, std::uint64_t seed);

struct GradientCase {
    Variant variant;
    int n;
    int order;
    /// max_i |g_i - fd_i| / max_i |fd_i| with central differences.
    double rel_error;
};

/// Every variant at n in {2, 6} (ParametricLTV at n = 2 only) and Magnus orders 1 and 2.
std::vector<GradientCase> gradient_fd_cases();

/// Largest per-step growth |x_{k+1}| / |x_k| - 1 over rollouts of random
/// SkewDiag and TimeVaryingSD generators at Magnus order `order`. Non-positive
/// when every rollout is monotone.
double sd_energy_max_increase(int draws, std::uint64_t seed, int order);

/// max Re(lambda) over `draws` random SkewDiag generators of mixed dimension.
double skew_diag_max_real(int draws, std::uint64_t seed);

/// Largest difference between the matched cost from match_eigenvalues and an
/// exhaustive permutation search, over random spectra of size 1..6.
double matching_cost_gap(int draws, std::uint64_t seed);

/// Log-log slope of |A_hat - A|_F against dt for Linear-ID on a damped
/// oscillator across dt in {0.4, 0.2, 0.1, 0.05}.
double linear_id_slope();

}  // namespace lgn::testing
