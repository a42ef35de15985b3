#include <cmath>

#include <gtest/gtest.h>

#include "lgn/baselines.hpp"
#include "lgn/error.hpp"
#include "support/properties.hpp"

namespace {

using lgn::Dataset;
using lgn::Mat;
using lgn::TimeGrid;
using lgn::Trajectory;
using lgn::Vec;

Trajectory scalar_traj(const TimeGrid& grid, double (*f)(double)) {
    Trajectory tr;
    tr.grid = grid;
    for (double t : grid.times()) tr.states.push_back((Vec(1) << f(t)).finished());
    return tr;
}

TEST(CentralDiff, ConstantAndLinear) {
    const TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 0.1);
    for (const auto& s : lgn::central_diff(scalar_traj(grid, [](double) { return 3.0; }))) EXPECT_EQ(s.dx(0), 0.0);
    const auto lin = lgn::central_diff(scalar_traj(grid, [](double t) { return 2.5 * t; }));
    ASSERT_EQ(lin.size(), grid.size() - 2);
    for (const auto& s : lin) EXPECT_NEAR(s.dx(0), 2.5, 1e-13);
}

TEST(CentralDiff, SineHasSincFactor) {
    const double dt = 0.2;
    const TimeGrid grid = TimeGrid::uniform(0.0, 3.0, dt);
    const auto d = lgn::central_diff(scalar_traj(grid, [](double t) { return std::sin(t); }));
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double t = grid[i + 1];
        EXPECT_NEAR(d[i].dx(0), std::cos(t) * std::sin(dt) / dt, 1e-14);
    }
}

TEST(CentralDiff, Preconditions) {
    EXPECT_THROW((void)lgn::central_diff(scalar_traj(TimeGrid({0.0, 0.1, 0.3}), [](double t) { return t; })),
                 lgn::ConfigError);
    EXPECT_THROW((void)lgn::central_diff(scalar_traj(TimeGrid({0.0, 0.1}), [](double t) { return t; })),
                 lgn::ConfigError);
}

TEST(LinearId, FineGridRecovery) {
    const lgn::RLCSystem sys{1.0, 0.1};
    const Dataset d = lgn::make_dataset(sys, TimeGrid::uniform(0.0, 20.0, 0.01), {(Vec(2) << 1.0, 0.0).finished()},
                                        0.0, 0);
    EXPECT_LE((lgn::linear_id(d) - lgn::generator_of(sys, 0.0)).norm(), 1e-3);
}

TEST(LinearId, DecoupledDecay) {
    // x_i(t) = x_i(0) e^{-t}: central differences give -sinh(dt)/dt per coordinate.
    const double dt = 0.05;
    Dataset d;
    d.provenance = lgn::LCSystem{};
    for (int k = 0; k < 2; ++k) {
        Trajectory tr;
        tr.grid = TimeGrid::uniform(0.0, 2.0, dt);
        for (double t : tr.grid.times()) tr.states.push_back((Vec(2) << (k + 1) * std::exp(-t), (2 - k) * std::exp(-t)).finished());
        d.trajectories.push_back(tr);
    }
    const Mat a = lgn::linear_id(d);
    const double want = -std::sinh(dt) / dt;
    EXPECT_NEAR(a(0, 0), want, 1e-10);
    EXPECT_NEAR(a(1, 1), want, 1e-10);
    EXPECT_NEAR(a(0, 1), 0.0, 1e-10);
    EXPECT_NEAR(a(0, 0), -1.0, dt * dt);
}

TEST(LinearId, RankDeficiencyIsNamed) {
    // One trajectory sitting on an eigenvector spans a single direction.
    const Dataset d = lgn::make_dataset(lgn::uniform_ladder(1, 0.0), TimeGrid::uniform(0.0, 1.0, 0.1),
                                        {Vec::Zero(2)}, 0.0, 0);
    try {
        (void)lgn::linear_id(d);
        FAIL() << "expected rank error";
    } catch (const lgn::NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("rank"), std::string::npos);
    }
}

TEST(LinearIdProperty, SecondOrderConvergence) { EXPECT_NEAR(lgn::testing::linear_id_slope(), 2.0, 0.2); }

TEST(Windows, Counts) {
    const Dataset d = lgn::make_dataset(lgn::RLCSystem{}, TimeGrid::uniform(0.0, 5.0, 0.1),
                                        lgn::random_initial_states(2, 2, 0), 0.0, 0);
    ASSERT_EQ(d.trajectories[0].size(), 51u);
    const auto w = lgn::make_windows(d, 5);
    EXPECT_EQ(w.windows.size(), 2u * 46u);
    EXPECT_EQ(w.tau, 5);
    EXPECT_EQ(lgn::make_windows(d, 50).windows.size(), 2u);
    EXPECT_THROW((void)lgn::make_windows(d, 51), lgn::ConfigError);
    EXPECT_THROW((void)lgn::make_windows(d, 0), lgn::ConfigError);
}

TEST(Windows, ConsecutiveAndTiling) {
    const Dataset d = lgn::make_dataset(lgn::RLCSystem{}, TimeGrid::uniform(0.0, 5.0, 0.1),
                                        lgn::random_initial_states(2, 1, 0), 0.0, 0);
    const auto& s = d.trajectories[0].states;
    const auto w = lgn::make_windows(d, 5);
    for (std::size_t i = 0; i < w.windows.size(); ++i) {
        EXPECT_EQ(w.windows[i].start, s[i]);
        for (int k = 0; k < 5; ++k) EXPECT_EQ(w.windows[i].targets[k], s[i + k + 1]);
        EXPECT_DOUBLE_EQ(w.windows[i].dt, 0.1);
    }
    std::vector<Vec> tiled{w.windows[0].start};
    for (std::size_t i = 0; i < w.windows.size(); i += 5)
        tiled.insert(tiled.end(), w.windows[i].targets.begin(), w.windows[i].targets.end());
    EXPECT_EQ(tiled, s);
}

TEST(WindowLoss, DirectSumAndGradient) {
    const Dataset d = lgn::make_dataset(lgn::uniform_ladder(2, 0.3), TimeGrid::uniform(0.0, 2.0, 0.1),
                                        lgn::random_initial_states(4, 2, 3), 0.02, 1);
    const auto w = lgn::make_windows(d, 4);
    const auto p = lgn::init_params(lgn::Variant::PortHamiltonian, 4, 6);
    const Mat a = lgn::assemble(p, 0.0);
    double want = 0.0;
    for (const auto& win : w.windows)
        for (int k = 1; k <= 4; ++k) want += (win.targets[k - 1] - lgn::expm(a * (k * win.dt)) * win.start).squaredNorm();
    const auto lg = lgn::window_loss_and_grad(p, w);
    EXPECT_NEAR(lg.loss, want, 1e-12 * want);
    Vec fd(p.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        auto plus = p;
        auto minus = p;
        plus.values(i) += 1e-6;
        minus.values(i) -= 1e-6;
        fd(i) = (lgn::window_loss_and_grad(plus, w).loss - lgn::window_loss_and_grad(minus, w).loss) / 2e-6;
    }
    EXPECT_LE((lg.grad - fd).lpNorm<Eigen::Infinity>() / fd.lpNorm<Eigen::Infinity>(), 1e-5);
}

TEST(PortHamiltonian, FitRecordsOptimizerAndKeepsStructure) {
    const Dataset d = lgn::make_dataset(lgn::uniform_ladder(2, 0.5), TimeGrid::uniform(0.0, 10.0, 0.1),
                                        lgn::random_initial_states(4, 3, 2), 0.0, 0);
    lgn::TrainConfig cfg;
    cfg.epochs = 200;
    lgn::PortHamiltonianOptions opt;
    opt.restarts = 2;
    opt.max_iterations = 400;
    for (auto which : {lgn::PhOptimizer::Lbfgs, lgn::PhOptimizer::Adam}) {
        opt.optimizer = which;
        const auto res = lgn::fit_port_hamiltonian(d, 5, cfg, opt);
        EXPECT_EQ(res.optimizer, which == lgn::PhOptimizer::Lbfgs ? "lbfgs" : "adam");
        ASSERT_EQ(res.restart_losses.size(), 2u);
        EXPECT_EQ(res.loss, res.restart_losses[res.best_restart]);
        const auto parts = lgn::port_hamiltonian_parts(res.params);
        EXPECT_GE(Eigen::SelfAdjointEigenSolver<Mat>(parts.d).eigenvalues().minCoeff(), -1e-12);
        EXPECT_GE(Eigen::SelfAdjointEigenSolver<Mat>(parts.p).eigenvalues().minCoeff(), 1e-12);
    }
}

TEST(PortHamiltonian, LbfgsRecoversUniformLadder) {
    const auto truth = lgn::uniform_ladder(2, 0.5);
    const Dataset d = lgn::make_dataset(truth, TimeGrid::uniform(0.0, 20.0, 0.1),
                                        lgn::random_initial_states(4, 3, 2), 0.0, 0);
    lgn::PortHamiltonianOptions opt;
    opt.restarts = 2;
    const auto res = lgn::fit_port_hamiltonian(d, 5, lgn::TrainConfig{}, opt);
    EXPECT_LE((lgn::assemble(res.params, 0.0) - lgn::build_ladder(truth)).norm(), 1e-3);
}

TEST(PortHamiltonian, MakeWindowsPreconditionPropagates) {
    const Dataset d = lgn::make_dataset(lgn::RLCSystem{}, TimeGrid::uniform(0.0, 0.3, 0.1),
                                        lgn::random_initial_states(2, 1, 0), 0.0, 0);
    EXPECT_THROW((void)lgn::fit_port_hamiltonian(d, 5, lgn::TrainConfig{}), lgn::ConfigError);
}

}  // namespace
