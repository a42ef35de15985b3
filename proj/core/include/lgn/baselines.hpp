#pragma once

#include <string>
#include <vector>

#include "lgn/generators.hpp"
#include "lgn/systems.hpp"
#include "lgn/training.hpp"

namespace lgn {

struct DerivativeSample {
    Vec x;
    Vec dx;
};

/// Central differences (x_{i+1} - x_{i-1}) / (2 dt) at interior samples.
/// Requires a uniform grid with at least three samples.
[[nodiscard]] std::vector<DerivativeSample> central_diff(const Trajectory& traj);

/// Unconstrained least squares min_A |Xdot - A X|_F over every central
/// difference pair of every trajectory, solved by column-pivoted QR.
/// Throws NumericError when X is rank deficient.
[[nodiscard]] Mat linear_id(const Dataset& data);

struct Window {
    Vec start;
    std::vector<Vec> targets;  ///< the tau samples following `start`
    double dt = 0.0;
};

struct WindowedDataset {
    int tau = 1;
    std::vector<Window> windows;
};

/// All stride-1 windows of tau + 1 consecutive samples, trajectory by trajectory.
[[nodiscard]] WindowedDataset make_windows(const Dataset& data, int tau);

/// sum_w sum_{k=1..tau} |x_k - exp(A k dt) x_start|^2 for a time-invariant
/// generator, with its gradient.
[[nodiscard]] LossGrad window_loss_and_grad(const GeneratorParams& p, const WindowedDataset& w);

enum class PhOptimizer { Lbfgs, Adam };

struct PortHamiltonianOptions {
    int restarts = 5;
    PhOptimizer optimizer = PhOptimizer::Lbfgs;
    InitOptions init{};
    /// L-BFGS stopping rules; the defaults follow the common L-BFGS-B ones.
    int max_iterations = 15000;
    double function_tolerance = 2.220446049250313e-09;
    double gradient_tolerance = 1e-5;
};

struct PortHamiltonianFit {
    GeneratorParams params;
    double loss = 0.0;
    int best_restart = 0;
    std::vector<double> restart_losses;  ///< +inf marks a diverged restart
    std::string optimizer;
};

/// tau-window fit of A = (J - D) P. Each restart r starts from
/// init_params(PortHamiltonian, n, cfg.seed + r); the lowest final window
/// loss wins, ties going to the lower restart index. Adam runs use `cfg`.
/// Throws DivergenceError when every restart fails.
[[nodiscard]] PortHamiltonianFit fit_port_hamiltonian(const Dataset& data, int tau,
                                                      const TrainConfig& cfg,
                                                      const PortHamiltonianOptions& opt = {});

}  // namespace lgn
