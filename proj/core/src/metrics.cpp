#include "lgn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "lgn/error.hpp"

namespace lgn {

double nrmse(const Trajectory& pred, const Trajectory& truth) {
    if (pred.size() != truth.size() || !(pred.grid == truth.grid)) {
        throw DimensionError("nrmse: prediction and truth grids differ");
    }
    if (truth.size() == 0) throw DimensionError("nrmse: empty trajectory");
    double err = 0.0;
    double amp = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (pred.states[i].size() != truth.states[i].size()) {
            throw DimensionError("nrmse: state dimensions " + std::to_string(pred.states[i].size()) + " and " +
                                 std::to_string(truth.states[i].size()) + " differ");
        }
        err += (pred.states[i] - truth.states[i]).squaredNorm();
        amp += truth.states[i].squaredNorm();
    }
    if (amp == 0.0) throw NumericError("nrmse: truth trajectory is identically zero");
    // Both means share the 1/T factor.
    return std::sqrt(err / amp);
}

double energy_violation_rate(const std::vector<double>& energies, double threshold) {
    if (energies.size() < 2) throw DimensionError("energy_violation_rate: need at least 2 samples");
    std::size_t count = 0;
    for (std::size_t k = 0; k + 1 < energies.size(); ++k) {
        if (energies[k + 1] > energies[k] + threshold) ++count;
    }
    return static_cast<double>(count) / static_cast<double>(energies.size() - 1);
}

double energy_violation_rate(const Trajectory& traj, double threshold) {
    std::vector<double> e;
    e.reserve(traj.size());
    for (const auto& x : traj.states) e.push_back(0.5 * x.squaredNorm());
    return energy_violation_rate(e, threshold);
}

namespace {

std::vector<std::size_t> brute_force_match(const std::vector<std::vector<double>>& cost) {
    const std::size_t n = cost.size();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<std::size_t> best = perm;
    double best_cost = std::numeric_limits<double>::infinity();
    do {
        double c = 0.0;
        for (std::size_t i = 0; i < n; ++i) c += cost[i][perm[i]];
        if (c < best_cost) {
            best_cost = c;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

// Shortest augmenting path form of the Hungarian method with row/column
// potentials u, v; p[j] is the row assigned to column j (1-based, 0 = free).
std::vector<std::size_t> hungarian(const std::vector<std::vector<double>>& cost) {
    const std::size_t n = cost.size();
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> perm(n);
    for (std::size_t j = 1; j <= n; ++j) perm[p[j] - 1] = j - 1;
    return perm;
}

}  // namespace

std::vector<std::size_t> match_eigenvalues(const ComplexSpectrum& pred, const ComplexSpectrum& truth) {
    if (pred.size() != truth.size()) {
        throw DimensionError("eigenvalue matching: " + std::to_string(pred.size()) + " predicted vs " +
                             std::to_string(truth.size()) + " true eigenvalues");
    }
    const std::size_t n = pred.size();
    std::vector<std::vector<double>> cost(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) cost[i][j] = std::abs(pred.values[i] - truth.values[j]);
    }
    if (n <= 8) return brute_force_match(cost);
    return hungarian(cost);
}

std::vector<double> eig_recovery_error(const ComplexSpectrum& pred, const ComplexSpectrum& truth) {
    const auto perm = match_eigenvalues(pred, truth);
    std::vector<double> out(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        out[i] = std::abs(pred.values[i].real() - truth.values[perm[i]].real());
    }
    return out;
}

double relative_eig_error(const ComplexSpectrum& pred, const ComplexSpectrum& truth) {
    const auto perm = match_eigenvalues(pred, truth);
    if (pred.size() == 0) return 0.0;
    double radius = 0.0;
    for (const auto& z : truth.values) radius = std::max(radius, std::abs(z));
    if (radius == 0.0) throw NumericError("relative_eig_error: true spectral radius is zero");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(pred.values[i] - truth.values[perm[i]]);
    return sum / static_cast<double>(pred.size()) / radius;
}

SpectralSummary spectral_summary(const ComplexSpectrum& spec) {
    SpectralSummary s;
    if (spec.size() == 0) return s;
    double sum = 0.0;
    for (const auto& z : spec.values) {
        sum += z.real();
        if (z.real() > 0.0) ++s.unstable_count;
        if (z.imag() > 0.0) {
            const double w = std::abs(z);
            s.natural_frequencies.push_back(w);
            s.damping_ratios.push_back(-z.real() / w);
        }
    }
    s.mean_re = sum / static_cast<double>(spec.size());
    return s;
}

double median(std::vector<double> values) {
    if (values.empty()) throw DimensionError("median of an empty list");
    const auto mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double hi = values[mid];
    if (values.size() % 2 == 1) return hi;
    const double lo = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

double mean(const std::vector<double>& values) {
    if (values.empty()) throw DimensionError("mean of an empty list");
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

std::vector<std::pair<std::string, double>> MetricsReport::columns() const {
    std::vector<std::pair<std::string, double>> cols{{"nrmse", nrmse},
                                                     {"energy_violation", energy_violation},
                                                     {"mean_re", mean_re},
                                                     {"unstable_count", static_cast<double>(unstable_count)}};
    if (!eig_errors.empty()) {
        cols.emplace_back("eig_error_mean", mean(eig_errors));
        cols.emplace_back("eig_error_median", median(eig_errors));
        cols.emplace_back("eig_error_max", *std::max_element(eig_errors.begin(), eig_errors.end()));
    }
    for (const auto& [k, v] : extras) cols.emplace_back(k, v);
    return cols;
}

std::string MetricsReport::csv_header() const {
    std::string out;
    for (const auto& [k, v] : columns()) out += (out.empty() ? "" : ",") + k;
    return out;
}

std::string MetricsReport::csv_row() const {
    std::string out;
    char buf[40];
    for (const auto& [k, v] : columns()) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        if (!out.empty()) out += ",";
        out += buf;
    }
    return out;
}

void to_json(nlohmann::json& j, const MetricsReport& r) {
    j = nlohmann::json::object();
    j["nrmse"] = r.nrmse;
    j["energy_violation"] = r.energy_violation;
    j["eig_errors"] = r.eig_errors;
    j["mean_re"] = r.mean_re;
    j["unstable_count"] = r.unstable_count;
    for (const auto& [k, v] : r.extras) j[k] = v;
}

void from_json(const nlohmann::json& j, MetricsReport& r) {
    try {
        r.nrmse = j.at("nrmse").get<double>();
        r.energy_violation = j.at("energy_violation").get<double>();
        r.eig_errors = j.value("eig_errors", std::vector<double>{});
        r.mean_re = j.at("mean_re").get<double>();
        r.unstable_count = j.at("unstable_count").get<int>();
        r.extras.clear();
        for (const auto& [k, v] : j.items()) {
            if (k == "nrmse" || k == "energy_violation" || k == "eig_errors" || k == "mean_re" ||
                k == "unstable_count") {
                continue;
            }
            if (v.is_number()) r.extras[k] = v.get<double>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("metrics report: ") + e.what());
    }
}

}  // namespace lgn
