#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lgn/generators.hpp"
#include "lgn/systems.hpp"

namespace lgn {

struct TrainConfig {
    double lr = 1e-2;
    int epochs = 3000;
    double clip_norm = 1.0;
    int scheduler_patience = 200;
    double scheduler_factor = 0.5;
    int magnus_order = 1;
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    /// Relative decrease of the best loss that counts as improvement.
    double improvement_threshold = 1e-8;
    /// Loss above this (or non-finite) aborts the fit.
    double divergence_threshold = 1e12;
    /// Horizon curriculum: the epochs are split into this many stages whose
    /// training horizons grow geometrically from `curriculum_start` (a
    /// fraction of each trajectory) to the full trajectory. 1 disables it.
    int curriculum_stages = 1;
    double curriculum_start = 0.1;

    void validate() const;

    /// Fraction of each trajectory used during `stage`.
    [[nodiscard]] double horizon_fraction(int stage) const;
    /// Stage index of a 1-based epoch.
    [[nodiscard]] int stage_of(int epoch) const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Fields missing from `j` keep their current values.
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochRecord {
    int epoch = 0;
    double loss = 0.0;
    double lr = 0.0;
};

/// Adam moments and plateau-scheduler bookkeeping for one run.
struct TrainState {
    long step = 0;
    Vec m;
    Vec v;
    double lr0 = 0.0;
    double lr = 0.0;
    int reductions = 0;
    double best_loss = 0.0;
    int epochs_since_improvement = 0;
    std::vector<EpochRecord> history;

    [[nodiscard]] static TrainState start(const GeneratorParams& p, const TrainConfig& cfg);

    /// Records the epoch loss and applies the plateau rule; lr only ever decreases.
    void observe(int epoch, double loss, const TrainConfig& cfg);
    /// Forget the best loss (the objective changed); lr and moments are kept.
    void reset_plateau();
};

/// Sum over trajectories and samples i >= 1 of |x_i - xhat_i|^2, where each
/// rollout starts from that trajectory's observed x_0.
[[nodiscard]] double loss(const GeneratorParams& p, const Dataset& data, int order);

struct LossGrad {
    double loss = 0.0;
    Vec grad;
};

/// Loss and its exact gradient with respect to p.values, by reverse-mode
/// accumulation through the rollout, each matrix exponential, the Magnus
/// exponent and the parameter assembly. Masked entries get zero gradient.
[[nodiscard]] LossGrad loss_and_grad(const GeneratorParams& p, const Dataset& data, int order);
[[nodiscard]] Vec grad(const GeneratorParams& p, const Dataset& data, int order);

/// Scales g to norm `clip_norm` when it is longer.
[[nodiscard]] Vec clip_by_norm(const Vec& g, double clip_norm);

/// Global-norm clipping followed by one bias-corrected Adam update.
void adam_step(TrainState& state, GeneratorParams& p, const Vec& g, const TrainConfig& cfg);

struct FitResult {
    GeneratorParams params;
    std::vector<EpochRecord> history;
    double final_lr = 0.0;
};

/// Called after every update with the epoch index and the new parameters.
using EpochObserver = std::function<void(int, const GeneratorParams&)>;

/// The first `fraction` of every trajectory (at least two samples each).
[[nodiscard]] Dataset truncate_horizon(const Dataset& data, double fraction);

/// Full-batch loop: loss -> gradient -> clip -> Adam -> plateau scheduler.
/// With a curriculum the recorded loss is that of the current stage's
/// horizon; Adam moments and lr carry across stages. Throws DivergenceError when the loss is non-finite or exceeds the
/// divergence threshold.
[[nodiscard]] FitResult fit(const GeneratorParams& init, const Dataset& data, const TrainConfig& cfg,
                            const EpochObserver& observer = {});

struct RestartFit {
    FitResult best;
    int best_index = 0;
    /// Full-horizon training loss of each restart; +inf marks a divergence.
    std::vector<double> losses;
};

/// Runs `fit` from make_init(0..restarts-1) and keeps the run with the lowest
/// full-horizon training loss (ties to the lower index). Divergent restarts
/// are skipped; if all diverge the last DivergenceError is rethrown.
[[nodiscard]] RestartFit fit_best_of(const std::function<GeneratorParams(int)>& make_init, const Dataset& data,
                                     const TrainConfig& cfg, int restarts);

/// `epoch,loss,lr` rows.
void write_history_csv(const std::vector<EpochRecord>& history, const std::string& path);

}  // namespace lgn
