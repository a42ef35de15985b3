#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lgn/linalg.hpp"

namespace lgn {

/// Hypothesis class for the generator A(t).
enum class Variant {
    FullA,            ///< unconstrained n x n matrix (LGN-FA)
    SkewDiag,         ///< S - diag(softplus(d_raw)) (LGN-SD)
    TimeVaryingSD,    ///< S(t) - D(t) over Fourier features
    TimeVaryingFull,  ///< unconstrained A(t) = W phi~(t), the time-varying LGN-FA
    ParametricLTV,    ///< [[0, 1], [-w0^2, -g0 (1 + g_amp sin(w_d t))]]
    PortHamiltonian,  ///< (J - D) P with D = L L^T, P = M M^T
};

[[nodiscard]] std::string_view to_string(Variant v);
[[nodiscard]] Variant variant_from_string(std::string_view name);
[[nodiscard]] bool is_time_invariant(Variant v);

/// Learnable parameters of one generator. All raw values live in a single
/// flat vector `values` whose layout depends on the variant:
///
///   FullA            A row-major, n*n
///   SkewDiag         s (strict upper triangle of S, row-major, n(n-1)/2), d_raw (n)
///   TimeVaryingSD    W_S (n(n-1)/2 x F, row-major), W_D (n x F), F = 2K + 1
///   TimeVaryingFull  W (n*n x F, row-major)
///   ParametricLTV    w0_sq, gamma0, gamma_amp, omega_d
///   PortHamiltonian  j (n(n-1)/2), D factor lower triangle (n(n+1)/2),
///                    P factor lower triangle (n(n+1)/2, diagonal through softplus)
///
/// Lower triangles are stored row by row. `active` masks entries out of
/// training: a masked skew entry is held at zero and a masked SkewDiag
/// dissipation d_i is exactly zero rather than softplus of anything.
struct GeneratorParams {
    Variant variant = Variant::FullA;
    int n = 0;
    Vec values;
    std::vector<std::uint8_t> active;  ///< empty means everything is learnable
    std::vector<double> freqs;         ///< Hz, ascending; time-varying variants only
    std::uint64_t seed = 0;

    [[nodiscard]] bool is_active(Eigen::Index i) const {
        return active.empty() || active[static_cast<std::size_t>(i)] != 0;
    }
    [[nodiscard]] Eigen::Index size() const { return values.size(); }
    /// Number of Fourier-feature columns (2K + 1), or 0 for time-invariant variants.
    [[nodiscard]] int feature_dim() const { return freqs.empty() ? 0 : 2 * static_cast<int>(freqs.size()) + 1; }
};

[[nodiscard]] double softplus(double x);
[[nodiscard]] double softplus_inverse(double y);
[[nodiscard]] double sigmoid(double x);

/// [cos(2 pi f_1 t), sin(2 pi f_1 t), ..., cos(2 pi f_K t), sin(2 pi f_K t)].
[[nodiscard]] Vec fourier_features(double t, const std::vector<double>& freqs_hz);

/// K frequencies whose log10 is uniform on [log10 lo, log10 hi], sorted ascending.
[[nodiscard]] std::vector<double> log_uniform_freqs(int k, double lo, double hi, std::uint64_t seed);

/// Total number of raw values for a variant of dimension n (K frequencies).
[[nodiscard]] Eigen::Index raw_size(Variant v, int n, int k = 0);

/// Number of learnable scalars (active entries only).
[[nodiscard]] Eigen::Index param_count(const GeneratorParams& p);

/// Assemble A(t). Time-invariant variants ignore t.
[[nodiscard]] Mat assemble(const GeneratorParams& p, double t);

/// Assemble a time-varying generator from a precomputed feature vector
/// phi~ = [phi(t); 1]. Bitwise equal to assemble(p, t) for matching features.
[[nodiscard]] Mat assemble_from_features(const GeneratorParams& p, const Vec& features);

/// Pull a cotangent G = dL/dA(t) back to the raw parameter vector, i.e. the
/// gradient of <G, A(t)> with respect to p.values. Masked entries get zero.
[[nodiscard]] Vec assemble_vjp(const GeneratorParams& p, double t, const Mat& g);

/// The dissipation part D(t) for S - D variants: A(t) + A(t)^T == -2 D(t).
[[nodiscard]] Vec dissipation(const GeneratorParams& p, double t);

struct InitOptions {
    double scale = 0.1;          ///< std of the i.i.d. normal perturbation
    double skew_offset = 0.0;    ///< mean of skew (S or J) entries
    double dissipation = 0.05;   ///< initial d_i (softplus image) / D, P factor diagonal target
    int fourier_k = 25;          ///< time-varying variants
    double freq_lo = 0.10;
    double freq_hi = 10.0;
};

/// Deterministic initialization: free parameters ~ N(offset, scale^2). Raw
/// dissipation entries are offset so the initial d_i is about
/// `opt.dissipation`.
[[nodiscard]] GeneratorParams init_params(Variant v, int n, std::uint64_t seed,
                                          const InitOptions& opt = {});

/// SkewDiag with only the listed entries learnable. Masked dissipation entries
/// are exactly zero.
[[nodiscard]] GeneratorParams masked_skew_diag(int n, const std::vector<int>& active_skew,
                                               const std::vector<int>& active_diag,
                                               const Vec& initial_values);

/// Projects a generic matrix onto the SkewDiag chart (used for round trips
/// and test fixtures): S = (A - A^T)/2 above the diagonal, d = softplus^-1(max(-diag(A), tiny)).
[[nodiscard]] GeneratorParams skew_diag_from_matrix(const Mat& a);

/// Parameters of the known-form time-varying oscillator.
[[nodiscard]] GeneratorParams parametric_ltv(double w0_sq, double gamma0, double gamma_amp,
                                             double omega_d);

/// Port-Hamiltonian parameters reproducing the given J (skew), and lower
/// Cholesky-type factors of D and P. The P factor diagonal must be positive.
[[nodiscard]] GeneratorParams port_hamiltonian_from(const Mat& j, const Mat& d_factor,
                                                    const Mat& p_factor);

/// Components of a port-Hamiltonian generator.
struct PortHamiltonianParts {
    Mat j;
    Mat d;
    Mat p;
};
[[nodiscard]] PortHamiltonianParts port_hamiltonian_parts(const GeneratorParams& p);

void to_json(nlohmann::json& j, const GeneratorParams& p);
void from_json(const nlohmann::json& j, GeneratorParams& p);

[[nodiscard]] GeneratorParams load_params(const std::string& path);
void save_params(const GeneratorParams& p, const std::string& path);

}  // namespace lgn
