#include "lgn/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>

#include "lgn/error.hpp"
#include "lgn/propagation.hpp"

namespace lgn {

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("train config: lr must be > 0");
    if (epochs < 0) throw ConfigError("train config: epochs must be >= 0");
    if (!(clip_norm > 0.0)) throw ConfigError("train config: clip_norm must be > 0");
    if (scheduler_patience < 1) throw ConfigError("train config: scheduler_patience must be >= 1");
    if (!(scheduler_factor > 0.0 && scheduler_factor < 1.0)) {
        throw ConfigError("train config: scheduler_factor must lie in (0, 1)");
    }
    require_magnus_order(magnus_order);
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        throw ConfigError("train config: Adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw ConfigError("train config: adam_eps must be > 0");
    if (curriculum_stages < 1) throw ConfigError("train config: curriculum_stages must be >= 1");
    if (!(curriculum_start > 0.0 && curriculum_start <= 1.0)) {
        throw ConfigError("train config: curriculum_start must lie in (0, 1]");
    }
}

double TrainConfig::horizon_fraction(int stage) const {
    if (curriculum_stages == 1 || stage >= curriculum_stages - 1) return 1.0;
    return curriculum_start * std::pow(1.0 / curriculum_start, static_cast<double>(stage) / (curriculum_stages - 1));
}

int TrainConfig::stage_of(int epoch) const {
    const int per_stage = epochs / curriculum_stages;
    if (per_stage == 0) return curriculum_stages - 1;
    return std::min(curriculum_stages - 1, (epoch - 1) / per_stage);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"lr", c.lr},
                       {"epochs", c.epochs},
                       {"clip_norm", c.clip_norm},
                       {"scheduler_patience", c.scheduler_patience},
                       {"scheduler_factor", c.scheduler_factor},
                       {"magnus_order", c.magnus_order},
                       {"seed", c.seed},
                       {"adam_beta1", c.adam_beta1},
                       {"adam_beta2", c.adam_beta2},
                       {"adam_eps", c.adam_eps},
                       {"improvement_threshold", c.improvement_threshold},
                       {"divergence_threshold", c.divergence_threshold},
                       {"curriculum_stages", c.curriculum_stages},
                       {"curriculum_start", c.curriculum_start}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    try {
        c.lr = j.value("lr", c.lr);
        c.epochs = j.value("epochs", c.epochs);
        c.clip_norm = j.value("clip_norm", c.clip_norm);
        c.scheduler_patience = j.value("scheduler_patience", c.scheduler_patience);
        c.scheduler_factor = j.value("scheduler_factor", c.scheduler_factor);
        c.magnus_order = j.value("magnus_order", c.magnus_order);
        c.seed = j.value("seed", c.seed);
        c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
        c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
        c.adam_eps = j.value("adam_eps", c.adam_eps);
        c.improvement_threshold = j.value("improvement_threshold", c.improvement_threshold);
        c.divergence_threshold = j.value("divergence_threshold", c.divergence_threshold);
        c.curriculum_stages = j.value("curriculum_stages", c.curriculum_stages);
        c.curriculum_start = j.value("curriculum_start", c.curriculum_start);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("train config: ") + e.what());
    }
    c.validate();
}

TrainState TrainState::start(const GeneratorParams& p, const TrainConfig& cfg) {
    TrainState s;
    s.m = Vec::Zero(p.values.size());
    s.v = Vec::Zero(p.values.size());
    s.lr0 = cfg.lr;
    s.lr = cfg.lr;
    s.best_loss = std::numeric_limits<double>::infinity();
    return s;
}

void TrainState::observe(int epoch, double loss_value, const TrainConfig& cfg) {
    history.push_back({epoch, loss_value, lr});
    if (loss_value < best_loss * (1.0 - cfg.improvement_threshold) || !std::isfinite(best_loss)) {
        best_loss = loss_value;
        epochs_since_improvement = 0;
        return;
    }
    if (++epochs_since_improvement >= cfg.scheduler_patience) {
        ++reductions;
        lr = lr0 * std::pow(cfg.scheduler_factor, reductions);
        epochs_since_improvement = 0;
    }
}

void TrainState::reset_plateau() {
    best_loss = std::numeric_limits<double>::infinity();
    epochs_since_improvement = 0;
}

namespace {

void check_data(const GeneratorParams& p, const Dataset& data) {
    for (const auto& tr : data.trajectories) {
        if (tr.dim() != p.n) {
            throw ConfigError("dataset has state dimension " + std::to_string(tr.dim()) +
                              " but the generator has dimension " + std::to_string(p.n));
        }
        if (tr.states.size() != tr.grid.size()) throw ConfigError("trajectory length mismatch");
    }
}

// Per-trajectory pieces of the time-invariant objective. Step matrices are
// shared between trajectories, keyed by step length (one key on uniform grids).
struct LtiSteps {
    Mat a;
    std::map<double, Mat> phi;

    const Mat& get(double h) {
        auto it = phi.find(h);
        if (it == phi.end()) it = phi.emplace(h, expm(a * h)).first;
        return it->second;
    }
};

// Uniform grids share one step length (the mean step) so every step reuses one exponential.
struct StepKeys {
    const TimeGrid& grid;
    bool uniform;
    double h;

    explicit StepKeys(const TimeGrid& g)
        : grid(g), uniform(g.is_uniform()),
          h((g[g.size() - 1] - g[0]) / static_cast<double>(g.size() - 1)) {}
    [[nodiscard]] double operator()(std::size_t k) const { return uniform ? h : grid.step(k); }
};

double lti_trajectory(LtiSteps& steps, const Trajectory& tr, std::map<double, Mat>* g_phi) {
    const std::size_t count = tr.size();
    if (count < 2) return 0.0;
    const StepKeys step_key(tr.grid);
    std::vector<Vec> pred(count);
    pred[0] = tr.states[0];
    double loss_value = 0.0;
    for (std::size_t k = 1; k < count; ++k) {
        pred[k] = steps.get(step_key(k - 1)) * pred[k - 1];
        loss_value += (pred[k] - tr.states[k]).squaredNorm();
    }
    if (g_phi == nullptr) return loss_value;

    const auto n = tr.dim();
    std::map<double, Mat> local;
    Vec lambda = Vec::Zero(n);
    for (std::size_t k = count - 1; k >= 1; --k) {
        lambda += 2.0 * (pred[k] - tr.states[k]);
        const double h = step_key(k - 1);
        auto it = local.find(h);
        if (it == local.end()) it = local.emplace(h, Mat::Zero(n, n)).first;
        it->second.noalias() += lambda * pred[k - 1].transpose();
        lambda = steps.get(h).transpose() * lambda;
    }
    for (auto& [h, g] : local) {
        auto it = g_phi->find(h);
        if (it == g_phi->end()) {
            g_phi->emplace(h, std::move(g));
        } else {
            it->second += g;
        }
    }
    return loss_value;
}

struct LtvStep {
    double h = 0.0;
    MagnusNodes nodes;
    Mat omega;
    Mat phi;
};

double ltv_trajectory(const GeneratorParams& p, const Trajectory& tr, int order, Vec* grad_out) {
    const std::size_t count = tr.size();
    if (count < 2) return 0.0;
    std::vector<LtvStep> steps(count - 1);
    std::vector<Vec> pred(count);
    pred[0] = tr.states[0];
    double loss_value = 0.0;
    for (std::size_t k = 0; k + 1 < count; ++k) {
        auto& s = steps[k];
        s.h = tr.grid.step(k);
        s.nodes.mid = assemble(p, tr.grid.midpoint(k));
        if (order == 2) {
            s.nodes.start = assemble(p, tr.grid[k]);
            s.nodes.end = assemble(p, tr.grid[k + 1]);
        }
        s.omega = magnus_exponent(s.nodes, s.h, order);
        s.phi = expm(s.omega);
        pred[k + 1] = s.phi * pred[k];
        loss_value += (pred[k + 1] - tr.states[k + 1]).squaredNorm();
    }
    if (grad_out == nullptr) return loss_value;

    Vec g = Vec::Zero(p.values.size());
    Vec lambda = Vec::Zero(tr.dim());
    for (std::size_t k = count - 1; k >= 1; --k) {
        lambda += 2.0 * (pred[k] - tr.states[k]);
        const auto& s = steps[k - 1];
        const Mat g_phi = lambda * pred[k - 1].transpose();
        const Mat g_omega = expm_vjp(s.omega, g_phi);
        const MagnusNodes g_nodes = magnus_exponent_vjp(s.nodes, s.h, order, g_omega);
        g += assemble_vjp(p, tr.grid.midpoint(k - 1), g_nodes.mid);
        if (order == 2) {
            g += assemble_vjp(p, tr.grid[k - 1], g_nodes.start);
            g += assemble_vjp(p, tr.grid[k], g_nodes.end);
        }
        lambda = s.phi.transpose() * lambda;
    }
    *grad_out = std::move(g);
    return loss_value;
}

LossGrad evaluate(const GeneratorParams& p, const Dataset& data, int order, bool want_grad) {
    require_magnus_order(order);
    check_data(p, data);
    LossGrad out;
    out.grad = Vec::Zero(p.values.size());
    if (is_time_invariant(p.variant)) {
        LtiSteps steps{assemble(p, 0.0), {}};
        std::map<double, Mat> g_phi;
        for (const auto& tr : data.trajectories) {
            out.loss += lti_trajectory(steps, tr, want_grad ? &g_phi : nullptr);
        }
        if (want_grad) {
            Mat g_a = Mat::Zero(p.n, p.n);
            for (const auto& [h, g] : g_phi) g_a += h * expm_vjp(steps.a * h, g);
            out.grad = assemble_vjp(p, 0.0, g_a);
        }
        return out;
    }
    for (const auto& tr : data.trajectories) {
        Vec g;
        out.loss += ltv_trajectory(p, tr, order, want_grad ? &g : nullptr);
        if (want_grad) out.grad += g;
    }
    return out;
}

}  // namespace

double loss(const GeneratorParams& p, const Dataset& data, int order) {
    return evaluate(p, data, order, false).loss;
}

LossGrad loss_and_grad(const GeneratorParams& p, const Dataset& data, int order) {
    return evaluate(p, data, order, true);
}

Vec grad(const GeneratorParams& p, const Dataset& data, int order) {
    return evaluate(p, data, order, true).grad;
}

Dataset truncate_horizon(const Dataset& data, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("truncate_horizon: fraction must lie in (0, 1]");
    Dataset out = data;
    if (fraction == 1.0) return out;
    for (auto& tr : out.trajectories) {
        if (tr.size() < 2) continue;
        const auto keep = std::max<std::size_t>(
            2, static_cast<std::size_t>(fraction * static_cast<double>(tr.size() - 1)) + 1);
        tr.grid = tr.grid.slice(0, keep - 1);
        tr.states.resize(keep);
    }
    return out;
}

Vec clip_by_norm(const Vec& g, double clip_norm) {
    const double norm = g.norm();
    if (norm > clip_norm) return g * (clip_norm / norm);
    return g;
}

void adam_step(TrainState& state, GeneratorParams& p, const Vec& g, const TrainConfig& cfg) {
    if (g.size() != p.values.size() || state.m.size() != p.values.size()) {
        throw DimensionError("adam_step: gradient / state / parameter sizes differ");
    }
    const Vec clipped = clip_by_norm(g, cfg.clip_norm);
    ++state.step;
    const double b1 = cfg.adam_beta1;
    const double b2 = cfg.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (Eigen::Index i = 0; i < p.values.size(); ++i) {
        if (!p.is_active(i)) continue;
        state.m(i) = b1 * state.m(i) + (1.0 - b1) * clipped(i);
        state.v(i) = b2 * state.v(i) + (1.0 - b2) * clipped(i) * clipped(i);
        const double m_hat = state.m(i) / c1;
        const double v_hat = state.v(i) / c2;
        p.values(i) -= state.lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
}

FitResult fit(const GeneratorParams& init, const Dataset& data, const TrainConfig& cfg,
              const EpochObserver& observer) {
    cfg.validate();
    data.validate();
    check_data(init, data);
    GeneratorParams p = init;
    TrainState state = TrainState::start(p, cfg);
    int stage = -1;
    Dataset stage_data;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        if (cfg.stage_of(epoch) != stage) {
            stage = cfg.stage_of(epoch);
            stage_data = truncate_horizon(data, cfg.horizon_fraction(stage));
            state.reset_plateau();
        }
        LossGrad lg;
        try {
            lg = loss_and_grad(p, stage_data, cfg.magnus_order);
        } catch (const NumericError& e) {
            throw DivergenceError("fit: numeric failure at epoch " + std::to_string(epoch) + ": " + e.what(),
                                  epoch, std::numeric_limits<double>::infinity());
        }
        if (!std::isfinite(lg.loss) || lg.loss > cfg.divergence_threshold || !lg.grad.allFinite()) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "fit: diverged at epoch %d (loss %.6g, threshold %.3g)", epoch,
                          lg.loss, cfg.divergence_threshold);
            throw DivergenceError(buf, epoch, lg.loss);
        }
        adam_step(state, p, lg.grad, cfg);
        // The plateau rule sees this epoch's loss and sets the next epoch's lr.
        state.observe(epoch, lg.loss, cfg);
        if (observer) observer(epoch, p);
    }
    return {std::move(p), std::move(state.history), state.lr};
}

RestartFit fit_best_of(const std::function<GeneratorParams(int)>& make_init, const Dataset& data,
                       const TrainConfig& cfg, int restarts) {
    if (restarts < 1) throw ConfigError("fit_best_of: restarts must be >= 1");
    RestartFit out;
    double best = std::numeric_limits<double>::infinity();
    std::optional<DivergenceError> last_error;
    for (int r = 0; r < restarts; ++r) {
        try {
            FitResult res = fit(make_init(r), data, cfg);
            const double full = loss(res.params, data, cfg.magnus_order);
            out.losses.push_back(std::isfinite(full) ? full : std::numeric_limits<double>::infinity());
            if (full < best) {
                best = full;
                out.best = std::move(res);
                out.best_index = r;
            }
        } catch (const DivergenceError& e) {
            out.losses.push_back(std::numeric_limits<double>::infinity());
            last_error = e;
        }
    }
    if (!std::isfinite(best)) {
        if (last_error) throw *last_error;
        throw DivergenceError("fit_best_of: no restart produced a finite loss", 0, best);
    }
    return out;
}

void write_history_csv(const std::vector<EpochRecord>& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "epoch,loss,lr\n";
    char buf[96];
    for (const auto& r : history) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", r.epoch, r.loss, r.lr);
        out << buf;
    }
}

}  // namespace lgn
