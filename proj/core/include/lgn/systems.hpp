#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "lgn/linalg.hpp"
#include "lgn/propagation.hpp"

namespace lgn {

/// Conservative oscillator, A = [[0, w], [-w, 0]].
struct LCSystem {
    double omega = 1.0;
};

/// Damped oscillator, A = [[0, 1], [-w^2, -gamma]].
struct RLCSystem {
    double omega = 1.0;
    double gamma = 0.1;
};

/// Oscillator with damping gamma(t) = gamma0 (1 + gamma_amp sin(omega_d t)).
struct LTVOscillator {
    double omega0 = 1.0;
    double gamma0 = 0.3;
    double gamma_amp = 0.15;
    double omega_d = 1.0;
};

/// m-section LC chain with series resistance per section, in energy
/// coordinates. State is (q_1..q_m, p_1..p_m); dimension 2m.
struct RLCLadder {
    int sections = 1;
    double inductance = 1.0;
    double capacitance = 1.0;
    std::vector<double> resistance;  ///< one per section
};

using SystemSpec = std::variant<LCSystem, RLCSystem, LTVOscillator, RLCLadder>;

[[nodiscard]] int state_dim(const SystemSpec& spec);
[[nodiscard]] bool is_time_invariant(const SystemSpec& spec);
[[nodiscard]] std::string system_name(const SystemSpec& spec);
void validate(const SystemSpec& spec);

/// The exact A(t).
[[nodiscard]] Mat generator_of(const SystemSpec& spec, double t);

/// A = S - D for the ladder; (A + A^T)/2 == -D exactly.
[[nodiscard]] Mat build_ladder(const RLCLadder& ladder);

/// Ladder with `sections` identical sections.
[[nodiscard]] RLCLadder uniform_ladder(int sections, double r, double l = 1.0, double c = 1.0);

/// Ground-truth trajectory: exact exponential propagation for LTI systems, a
/// step-halving RK4 reference for time-varying ones.
[[nodiscard]] Trajectory simulate_truth(const SystemSpec& spec, const TimeGrid& grid, const Vec& x0);

/// Fixed-step RK4 reference for x' = A(t) x, halving the substep until two
/// successive refinements agree to `rel_tol` (relative to the largest state
/// norm). Throws NumericError if `max_halvings` is exhausted.
[[nodiscard]] Trajectory reference_integrate(const SystemSpec& spec, const TimeGrid& grid,
                                             const Vec& x0, double rel_tol = 1e-10,
                                             int max_halvings = 14);

/// RMS amplitude sqrt(1/T sum_i |x_i|^2).
[[nodiscard]] double rms_amplitude(const Trajectory& traj);

/// The perturbation add_noise applies: entries i.i.d. N(0, (level * rms)^2).
[[nodiscard]] std::vector<Vec> noise_realization(const Trajectory& traj, double level,
                                                 std::uint64_t seed);
[[nodiscard]] Trajectory add_noise(const Trajectory& traj, double level, std::uint64_t seed);

/// i.i.d. standard-normal vectors scaled to unit Euclidean norm.
[[nodiscard]] std::vector<Vec> random_initial_states(int n, int count, std::uint64_t seed);

struct Dataset {
    std::vector<Trajectory> trajectories;
    double noise_level = 0.0;
    std::uint64_t seed = 0;
    SystemSpec provenance = LCSystem{};

    [[nodiscard]] int dim() const;
    /// Throws unless every trajectory is valid and shares one dimension.
    void validate() const;
};

/// Simulates each initial state on `grid` and perturbs with noise; trajectory
/// k uses noise seed `seed + k`.
[[nodiscard]] Dataset make_dataset(const SystemSpec& spec, const TimeGrid& grid,
                                   const std::vector<Vec>& initial_states, double noise_level,
                                   std::uint64_t seed);

void to_json(nlohmann::json& j, const SystemSpec& spec);
void from_json(const nlohmann::json& j, SystemSpec& spec);

/// CSV with header `t,x0,...,x{n-1}`, values at 17 significant digits.
void write_trajectory_csv(const Trajectory& traj, const std::string& path);
[[nodiscard]] Trajectory read_trajectory_csv(const std::string& path);

/// Writes traj_000.csv, ... and manifest.json into `dir`.
void write_dataset(const Dataset& data, const std::string& dir);
/// Reads a manifest and the trajectory files it lists.
[[nodiscard]] Dataset read_dataset(const std::string& manifest_path);

}  // namespace lgn
