#include "lgn/baselines.hpp"

#include <cmath>
#include <limits>
#include <map>

#include <ceres/gradient_problem.h>
#include <ceres/gradient_problem_solver.h>

#include "lgn/error.hpp"

namespace lgn {

std::vector<DerivativeSample> central_diff(const Trajectory& traj) {
    traj.validate();
    if (traj.size() < 3) throw ConfigError("central_diff: need at least 3 samples");
    if (!traj.grid.is_uniform()) throw ConfigError("central_diff: grid is not uniform");
    const double dt = (traj.grid[traj.size() - 1] - traj.grid[0]) / static_cast<double>(traj.size() - 1);
    std::vector<DerivativeSample> out;
    out.reserve(traj.size() - 2);
    for (std::size_t i = 1; i + 1 < traj.size(); ++i) {
        out.push_back({traj.states[i], (traj.states[i + 1] - traj.states[i - 1]) / (2.0 * dt)});
    }
    return out;
}

Mat linear_id(const Dataset& data) {
    data.validate();
    const int n = data.dim();
    std::vector<DerivativeSample> all;
    for (const auto& tr : data.trajectories) {
        auto s = central_diff(tr);
        all.insert(all.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
    }
    const auto count = static_cast<Eigen::Index>(all.size());
    if (count < n) {
        throw NumericError("linear_id: " + std::to_string(count) + " derivative samples for a " +
                           std::to_string(n) + "-dimensional state");
    }
    // Row form: X^T A^T = Xdot^T.
    Mat xt(count, n);
    Mat dxt(count, n);
    for (Eigen::Index i = 0; i < count; ++i) {
        xt.row(i) = all[static_cast<std::size_t>(i)].x.transpose();
        dxt.row(i) = all[static_cast<std::size_t>(i)].dx.transpose();
    }
    const Eigen::ColPivHouseholderQR<Mat> qr(xt);
    if (qr.rank() < n) {
        throw NumericError("linear_id: state matrix X is rank deficient (numerical rank " +
                           std::to_string(qr.rank()) + " < n = " + std::to_string(n) + ")");
    }
    return qr.solve(dxt).transpose();
}

WindowedDataset make_windows(const Dataset& data, int tau) {
    if (tau < 1) throw ConfigError("make_windows: tau must be >= 1");
    data.validate();
    WindowedDataset out;
    out.tau = tau;
    const auto len = static_cast<std::size_t>(tau);
    for (std::size_t t = 0; t < data.trajectories.size(); ++t) {
        const auto& tr = data.trajectories[t];
        if (tr.size() < len + 1) {
            throw ConfigError("make_windows: trajectory " + std::to_string(t) + " has " +
                              std::to_string(tr.size()) + " samples, need tau + 1 = " +
                              std::to_string(len + 1));
        }
        if (!tr.grid.is_uniform()) throw ConfigError("make_windows: grid is not uniform");
        const double dt = (tr.grid[tr.size() - 1] - tr.grid[0]) / static_cast<double>(tr.size() - 1);
        for (std::size_t s = 0; s + len < tr.size(); ++s) {
            Window w;
            w.start = tr.states[s];
            w.targets.assign(tr.states.begin() + static_cast<std::ptrdiff_t>(s + 1),
                             tr.states.begin() + static_cast<std::ptrdiff_t>(s + len + 1));
            w.dt = dt;
            out.windows.push_back(std::move(w));
        }
    }
    return out;
}

LossGrad window_loss_and_grad(const GeneratorParams& p, const WindowedDataset& wd) {
    if (!is_time_invariant(p.variant)) throw ConfigError("window loss needs a time-invariant generator");
    const Mat a = assemble(p, 0.0);
    const auto n = a.rows();
    // Per distinct dt: exp(A k dt) and the cotangent of each, k = 1..tau.
    struct Horizon {
        std::vector<Mat> phi;
        std::vector<Mat> g;
    };
    std::map<double, Horizon> horizons;
    auto horizon_for = [&](double dt) -> Horizon& {
        auto it = horizons.find(dt);
        if (it != horizons.end()) return it->second;
        Horizon h;
        for (int k = 1; k <= wd.tau; ++k) {
            h.phi.push_back(expm(a * (k * dt)));
            h.g.push_back(Mat::Zero(n, n));
        }
        return horizons.emplace(dt, std::move(h)).first->second;
    };

    LossGrad out;
    for (const auto& w : wd.windows) {
        if (w.start.size() != n) throw ConfigError("window loss: state dimension mismatch");
        Horizon& h = horizon_for(w.dt);
        for (std::size_t k = 0; k < w.targets.size(); ++k) {
            const Vec r = h.phi[k] * w.start - w.targets[k];
            out.loss += r.squaredNorm();
            h.g[k].noalias() += 2.0 * r * w.start.transpose();
        }
    }
    Mat g_a = Mat::Zero(n, n);
    for (const auto& [dt, h] : horizons) {
        for (int k = 1; k <= wd.tau; ++k) {
            const double s = k * dt;
            g_a += s * expm_vjp(a * s, h.g[static_cast<std::size_t>(k - 1)]);
        }
    }
    out.grad = assemble_vjp(p, 0.0, g_a);
    return out;
}

namespace {

class WindowObjective final : public ceres::FirstOrderFunction {
public:
    WindowObjective(GeneratorParams templ, const WindowedDataset& wd) : templ_(std::move(templ)), wd_(wd) {}

    bool Evaluate(const double* parameters, double* cost, double* gradient) const override {
        GeneratorParams p = templ_;
        p.values = Eigen::Map<const Vec>(parameters, templ_.values.size());
        try {
            const LossGrad lg = window_loss_and_grad(p, wd_);
            if (!std::isfinite(lg.loss) || !lg.grad.allFinite()) return false;
            *cost = lg.loss;
            if (gradient != nullptr) Eigen::Map<Vec>(gradient, lg.grad.size()) = lg.grad;
        } catch (const NumericError&) {
            return false;
        }
        return true;
    }

    int NumParameters() const override { return static_cast<int>(templ_.values.size()); }

private:
    GeneratorParams templ_;
    const WindowedDataset& wd_;
};

double run_lbfgs(GeneratorParams& p, const WindowedDataset& wd, const PortHamiltonianOptions& opt) {
    ceres::GradientProblemSolver::Options options;
    options.line_search_direction_type = ceres::LBFGS;
    options.max_lbfgs_rank = 10;
    options.max_num_iterations = opt.max_iterations;
    options.function_tolerance = opt.function_tolerance;
    options.gradient_tolerance = opt.gradient_tolerance;
    options.parameter_tolerance = 0.0;
    options.logging_type = ceres::SILENT;
    ceres::GradientProblem problem(new WindowObjective(p, wd));
    ceres::GradientProblemSolver::Summary summary;
    ceres::Solve(options, problem, p.values.data(), &summary);
    if (summary.termination_type == ceres::FAILURE) {
        throw DivergenceError("L-BFGS failed: " + summary.message, summary.iterations.empty() ? 0 : static_cast<int>(summary.iterations.size()),
                              summary.final_cost);
    }
    return window_loss_and_grad(p, wd).loss;
}

double run_adam(GeneratorParams& p, const WindowedDataset& wd, const TrainConfig& cfg) {
    TrainState state = TrainState::start(p, cfg);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const LossGrad lg = window_loss_and_grad(p, wd);
        if (!std::isfinite(lg.loss) || lg.loss > cfg.divergence_threshold) {
            throw DivergenceError("Adam window fit diverged", epoch, lg.loss);
        }
        adam_step(state, p, lg.grad, cfg);
        state.observe(epoch, lg.loss, cfg);
    }
    return window_loss_and_grad(p, wd).loss;
}

}  // namespace

PortHamiltonianFit fit_port_hamiltonian(const Dataset& data, int tau, const TrainConfig& cfg,
                                        const PortHamiltonianOptions& opt) {
    if (opt.restarts < 1) throw ConfigError("fit_port_hamiltonian: restarts must be >= 1");
    const WindowedDataset wd = make_windows(data, tau);
    const int n = data.dim();
    PortHamiltonianFit best;
    best.loss = std::numeric_limits<double>::infinity();
    best.optimizer = opt.optimizer == PhOptimizer::Lbfgs ? "lbfgs" : "adam";
    for (int r = 0; r < opt.restarts; ++r) {
        GeneratorParams p = init_params(Variant::PortHamiltonian, n, cfg.seed + static_cast<std::uint64_t>(r), opt.init);
        double final_loss = std::numeric_limits<double>::infinity();
        try {
            final_loss = opt.optimizer == PhOptimizer::Lbfgs ? run_lbfgs(p, wd, opt) : run_adam(p, wd, cfg);
        } catch (const NumericError&) {
            final_loss = std::numeric_limits<double>::infinity();
        }
        if (!std::isfinite(final_loss)) final_loss = std::numeric_limits<double>::infinity();
        best.restart_losses.push_back(final_loss);
        if (final_loss < best.loss) {
            best.loss = final_loss;
            best.params = std::move(p);
            best.best_restart = r;
        }
    }
    if (!std::isfinite(best.loss)) {
        std::string msg = "fit_port_hamiltonian: every restart diverged (losses:";
        for (double l : best.restart_losses) msg += " " + std::to_string(l);
        throw DivergenceError(msg + ")", 0, best.loss);
    }
    return best;
}

}  // namespace lgn
