#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lgn/linalg.hpp"
#include "lgn/propagation.hpp"

namespace lgn {

/// RMSE(pred, truth) / RMS(truth). Throws NumericError when truth is all zero.
[[nodiscard]] double nrmse(const Trajectory& pred, const Trajectory& truth);

/// Energy increase threshold applied to E = |x|^2 / 2.
inline constexpr double kEnergyThreshold = 1e-6;

/// Fraction of steps with E_{k+1} > E_k + threshold.
[[nodiscard]] double energy_violation_rate(const std::vector<double>& energies,
                                           double threshold = kEnergyThreshold);
[[nodiscard]] double energy_violation_rate(const Trajectory& traj, double threshold = kEnergyThreshold);

/// perm[i] is the index in `truth` matched to pred[i], minimising the summed
/// complex distance. Exhaustive for n <= 8, Hungarian algorithm above.
[[nodiscard]] std::vector<std::size_t> match_eigenvalues(const ComplexSpectrum& pred,
                                                         const ComplexSpectrum& truth);

/// |Re(pred_i) - Re(truth_perm(i))| under the optimal matching, in pred order.
[[nodiscard]] std::vector<double> eig_recovery_error(const ComplexSpectrum& pred, const ComplexSpectrum& truth);

/// Mean matched complex distance |pred_i - truth_perm(i)| divided by the
/// spectral radius of truth.
[[nodiscard]] double relative_eig_error(const ComplexSpectrum& pred, const ComplexSpectrum& truth);

struct SpectralSummary {
    double mean_re = 0.0;
    int unstable_count = 0;
    /// One entry per conjugate pair (positive imaginary member).
    std::vector<double> natural_frequencies;
    std::vector<double> damping_ratios;
};

[[nodiscard]] SpectralSummary spectral_summary(const ComplexSpectrum& spec);

[[nodiscard]] double median(std::vector<double> values);
[[nodiscard]] double mean(const std::vector<double>& values);

struct MetricsReport {
    double nrmse = 0.0;
    double energy_violation = 0.0;
    std::vector<double> eig_errors;
    double mean_re = 0.0;
    int unstable_count = 0;
    std::map<std::string, double> extras;

    /// Scalar columns in a fixed order (eig errors reduced to mean/median/max).
    [[nodiscard]] std::vector<std::pair<std::string, double>> columns() const;
    [[nodiscard]] std::string csv_header() const;
    [[nodiscard]] std::string csv_row() const;
};

void to_json(nlohmann::json& j, const MetricsReport& r);
void from_json(const nlohmann::json& j, MetricsReport& r);

}  // namespace lgn
