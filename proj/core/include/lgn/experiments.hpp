#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lgn/generators.hpp"
#include "lgn/metrics.hpp"
#include "lgn/systems.hpp"
#include "lgn/training.hpp"

namespace lgn {

struct GridSpec {
    double t_start = 0.0;
    double t_end = 10.0;
    double dt = 0.1;

    [[nodiscard]] TimeGrid make() const { return TimeGrid::uniform(t_start, t_end, dt); }
};

/// Everything one experiment run needs. Defaults per id come from
/// default_config(); a JSON document overrides any subset of fields.
struct ExperimentConfig {
    std::string id = "custom";
    SystemSpec system = LCSystem{};
    TrainConfig train;
    InitOptions init;
    GridSpec train_grid;
    GridSpec test_grid{0.0, 100.0, 0.1};
    /// Model names: lgn, lgn-sd, lgn-fa, lgn-tv-sd, lgn-tv-fa, lgn-param,
    /// linear-id, ph-window.
    std::vector<std::string> models;
    /// Models whose divergence is the expected outcome.
    std::vector<std::string> expected_divergence;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    /// Explicit initial state; when empty, `trajectories` unit-norm random states are drawn.
    std::vector<double> x0;
    int trajectories = 1;
    double noise = 0.0;
    /// Best-of-N restarts for every gradient-trained LGN model.
    int restarts = 1;
    /// exp4-noise.
    std::vector<double> noise_levels;
    /// a1-magnus order study.
    std::vector<double> dt_sweep;
    double order_horizon = 20.0;
    /// a2-stiff.
    int tau = 5;
    int ph_restarts = 5;
    std::string ph_optimizer = "lbfgs";
    std::optional<SystemSpec> control_system;
    bool tau_ablation = false;

    void validate() const;
};

[[nodiscard]] const std::vector<std::string>& experiment_ids();

/// Protocol defaults for an experiment id. Throws ConfigError listing
/// the valid ids for an unknown one.
[[nodiscard]] ExperimentConfig default_config(const std::string& id);

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

/// Applies `overrides` on top of `base`. Keys may be nested objects (merged
/// recursively) or dotted field paths such as "train.lr".
[[nodiscard]] ExperimentConfig apply_overrides(const ExperimentConfig& base, const nlohmann::json& overrides);

/// Reads a JSON override file (IoError / ConfigError on failure).
[[nodiscard]] nlohmann::json read_json_file(const std::string& path);
void write_json_file(const nlohmann::json& j, const std::string& path);

/// Replaces the ladder with `sections` sections, keeping the first section's
/// resistance for all of them. ConfigError for non-ladder systems.
void set_ladder_sections(ExperimentConfig& cfg, int sections);

struct ExperimentOutcome {
    nlohmann::json summary;
    /// A model diverged without being listed in expected_divergence.
    bool unexpected_divergence = false;
    std::vector<std::string> messages;
};

/// Synthesizes the data, fits every model, evaluates on the test grid and
/// writes summary.json, results.csv, per-model checkpoints, metrics and loss
/// histories, the datasets and plot data into cfg.out_dir.
[[nodiscard]] ExperimentOutcome run_experiment(const ExperimentConfig& cfg);

/// The training dataset an experiment would use (noise level `cfg.noise`).
[[nodiscard]] Dataset experiment_dataset(const ExperimentConfig& cfg);

/// A model produced by one of the fitting procedures.
struct FittedModel {
    std::string name;
    std::optional<GeneratorParams> params;  ///< gradient-trained models
    std::optional<Mat> matrix;              ///< linear-id
    Eigen::Index param_count = 0;
    int magnus_order = 1;
    std::vector<EpochRecord> history;
    std::vector<double> restart_losses;
    std::string optimizer;

    [[nodiscard]] bool time_invariant() const;
    [[nodiscard]] Mat generator(double t) const;
    [[nodiscard]] Trajectory predict(const TimeGrid& grid, const Vec& x0) const;
};

/// Fits one named model on `data` using the experiment's training settings.
/// DivergenceError propagates.
[[nodiscard]] FittedModel fit_model(const std::string& name, const ExperimentConfig& cfg, const Dataset& data);

/// Metrics of `model` against noiseless truth rollouts (one per initial
/// state). Eigenvalue errors are filled when both model and system are
/// time-invariant. Throws DivergenceError when a rollout's squared error
/// exceeds the divergence threshold or is non-finite.
[[nodiscard]] MetricsReport evaluate_model(const FittedModel& model, const SystemSpec& system,
                                           const std::vector<Trajectory>& truth, double divergence_threshold);

/// Mean over time samples of |pred - truth| / |truth|, averaged over trajectories.
[[nodiscard]] double mean_relative_error(const std::vector<Trajectory>& pred, const std::vector<Trajectory>& truth);

/// Least-squares slope of log(err) against log(dt).
[[nodiscard]] double loglog_slope(const std::vector<double>& dt, const std::vector<double>& err);

/// Checkpoint JSON of a fitted model (generator params or a constant matrix).
void save_model(const FittedModel& model, const std::string& path);
[[nodiscard]] FittedModel load_model(const std::string& path);

}  // namespace lgn
