#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "lgn/error.hpp"
#include "lgn/propagation.hpp"
#include "lgn/systems.hpp"
#include "support/properties.hpp"

namespace {

using lgn::GeneratorParams;
using lgn::Mat;
using lgn::TimeGrid;
using lgn::Vec;

Vec e1() { return (Vec(2) << 1.0, 0.0).finished(); }

GeneratorParams ltv_truth() { return lgn::parametric_ltv(1.0, 0.3, 0.15, 1.0); }

double max_error(const lgn::Trajectory& a, const lgn::Trajectory& b) {
    double e = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) e = std::max(e, (a.states[i] - b.states[i]).norm());
    return e;
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]) / x.size();
        my += std::log(y[i]) / y.size();
    }
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
        sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
    }
    return sxy / sxx;
}

TEST(TimeGrid, Invariants) {
    EXPECT_THROW(TimeGrid({0.0, 0.0}), lgn::ConfigError);
    EXPECT_THROW(TimeGrid({0.0, 1.0, 0.5}), lgn::ConfigError);
    EXPECT_THROW(TimeGrid({0.0, std::nan("")}), lgn::ConfigError);
    const TimeGrid g = TimeGrid::uniform(0.0, 10.0, 0.1);
    EXPECT_EQ(g.size(), 101u);
    EXPECT_TRUE(g.is_uniform());
    EXPECT_FALSE(TimeGrid({0.0, 0.1, 0.3}).is_uniform());
    EXPECT_DOUBLE_EQ(g.midpoint(3), 0.35);
}

TEST(PropagateLti, ZeroGeneratorHoldsState) {
    const Vec x0 = (Vec(3) << 0.2, -1.0, 4.0).finished();
    const auto tr = lgn::propagate_lti(Mat::Zero(3, 3), TimeGrid::uniform(0.0, 5.0, 0.5), x0);
    for (const Vec& x : tr.states) EXPECT_EQ(x, x0);
}

TEST(PropagateLti, QuarterTurnIsClockwise) {
    Mat a(2, 2);
    a << 0, 1, -1, 0;
    const auto tr = lgn::propagate_lti(a, TimeGrid({0.0, std::numbers::pi / 2}), e1());
    EXPECT_NEAR(tr.states[1](0), 0.0, 1e-15);
    EXPECT_NEAR(tr.states[1](1), -1.0, 1e-15);
    EXPECT_EQ(tr.states[0], e1());
}

TEST(PropagateLti, DampedOscillatorAgainstReference) {
    const lgn::RLCSystem sys{1.0, 0.1};
    const TimeGrid grid = TimeGrid::uniform(0.0, 20.0, 0.1);
    const auto exact = lgn::propagate_lti(lgn::generator_of(sys, 0.0), grid, e1());
    const auto ref = lgn::reference_integrate(sys, grid, e1(), 1e-10);
    EXPECT_NEAR(exact.states.back().norm(), ref.states.back().norm(), 1e-9);
    EXPECT_LE(exact.states.back().norm(), std::exp(-0.05 * 20.0) * 1.06);
}

TEST(PropagateLti, NonUniformGridMatchesUniform) {
    Mat a(2, 2);
    a << -0.1, 0.7, -0.9, -0.2;
    const auto u = lgn::propagate_lti(a, TimeGrid({0.0, 0.5, 1.0, 1.5}), e1());
    const auto n = lgn::propagate_lti(a, TimeGrid({0.0, 0.5, 1.2, 1.5}), e1());
    EXPECT_LE((u.states.back() - n.states.back()).norm(), 1e-14);
}

TEST(PropagateLti, EmptyGridIsConfigError) {
    EXPECT_THROW((void)lgn::propagate_lti(Mat::Zero(2, 2), TimeGrid(), e1()), lgn::ConfigError);
}

TEST(Magnus, ConstantGeneratorGivesAh) {
    const GeneratorParams p = lgn::init_params(lgn::Variant::SkewDiag, 3, 4);
    const Mat a = lgn::assemble(p, 0.0);
    for (int order : {1, 2}) EXPECT_LE((lgn::magnus_step(p, 0.3, 0.55, order) - 0.25 * a).norm(), 1e-15);
}

TEST(Magnus, SecondOrderFormula) {
    // Order 2: Simpson quadrature of A over the step plus (h^2/12)[A(t_n+1), A(t_n)].
    const GeneratorParams p = ltv_truth();
    const double h = 0.1;
    const auto a = [](double t) {
        Mat m(2, 2);
        m << 0, 1, -1, -0.3 * (1 + 0.15 * std::sin(t));
        return m;
    };
    const Mat a0 = a(0.0);
    const Mat am = a(0.05);
    const Mat a1 = a(0.1);
    const Mat simpson = h / 6 * (a0 + 4 * am + a1);
    const Mat comm = a1 * a0 - a0 * a1;
    const Mat want = simpson + h * h / 12 * comm;
    EXPECT_LE((lgn::magnus_step(p, 0.0, h, 2) - want).norm(), 1e-16);
    EXPECT_LE((lgn::magnus_step(p, 0.0, h, 1) - h * am).norm(), 1e-16);
    // The correction is (0.01/12) [A(0.1), A(0)] = -(0.01/12) [A(0), A(0.1)].
    EXPECT_LE((lgn::magnus_step(p, 0.0, h, 2) - simpson + 0.01 / 12 * lgn::commutator(a0, a1)).norm(), 1e-16);
}

TEST(Magnus, OrderGapShrinksCubically) {
    const GeneratorParams p = ltv_truth();
    std::vector<double> hs;
    std::vector<double> gaps;
    for (double h : {0.4, 0.2, 0.1, 0.05, 0.025}) {
        hs.push_back(h);
        gaps.push_back((lgn::magnus_step(p, 0.7, 0.7 + h, 2) - lgn::magnus_step(p, 0.7, 0.7 + h, 1)).norm());
    }
    EXPECT_NEAR(slope(hs, gaps), 3.0, 0.1);
}

TEST(Magnus, RejectsBadOrder) {
    EXPECT_THROW(lgn::require_magnus_order(3), lgn::ConfigError);
    EXPECT_THROW((void)lgn::magnus_step(ltv_truth(), 0.0, 0.1, 0), lgn::ConfigError);
}

TEST(Magnus, ExponentVjpMatchesFiniteDifferences) {
    const lgn::MagnusNodes nodes{lgn::testing::random_matrix(3, 1.0, 1), lgn::testing::random_matrix(3, 1.0, 2),
                                 lgn::testing::random_matrix(3, 1.0, 3)};
    const Mat g = lgn::testing::random_matrix(3, 1.0, 4);
    const double h = 0.3;
    const auto cot = lgn::magnus_exponent_vjp(nodes, h, 2, g);
    const double eps = 1e-6;
    Mat* fields[] = {nullptr, nullptr, nullptr};
    const Mat* cots[] = {&cot.start, &cot.mid, &cot.end};
    for (int which = 0; which < 3; ++which) {
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                lgn::MagnusNodes plus = nodes;
                lgn::MagnusNodes minus = nodes;
                fields[0] = which == 0 ? &plus.start : which == 1 ? &plus.mid : &plus.end;
                fields[1] = which == 0 ? &minus.start : which == 1 ? &minus.mid : &minus.end;
                (*fields[0])(r, c) += eps;
                (*fields[1])(r, c) -= eps;
                const double fd = (lgn::frobenius_inner(g, lgn::magnus_exponent(plus, h, 2)) -
                                   lgn::frobenius_inner(g, lgn::magnus_exponent(minus, h, 2))) /
                                  (2 * eps);
                EXPECT_NEAR((*cots[which])(r, c), fd, 1e-8);
            }
        }
    }
}

TEST(RolloutLtv, TimeInvariantParamsMatchLti) {
    const GeneratorParams p = lgn::init_params(lgn::Variant::FullA, 4, 6);
    const Vec x0 = lgn::random_initial_states(4, 1, 2).front();
    const TimeGrid grid = TimeGrid::uniform(0.0, 5.0, 0.1);
    const auto lti = lgn::propagate_lti(p, grid, x0);
    for (int order : {1, 2}) {
        const auto ltv = lgn::rollout_ltv(p, grid, x0, order);
        for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_LE((ltv.states[i] - lti.states[i]).norm(), 1e-12);
    }
}

TEST(RolloutLtv, SecondOrderBeatsFirstByTenAtCoarseStep) {
    const lgn::LTVOscillator sys{};
    const TimeGrid grid = TimeGrid::uniform(0.0, 20.0, 0.4);
    const auto ref = lgn::reference_integrate(sys, grid, e1());
    const double e1m = max_error(lgn::rollout_ltv(ltv_truth(), grid, e1(), 1), ref);
    const double e2m = max_error(lgn::rollout_ltv(ltv_truth(), grid, e1(), 2), ref);
    EXPECT_LE(e2m, e1m / 10.0);
}

TEST(RolloutLtv, GlobalOrderSlopes) {
    const lgn::LTVOscillator sys{};
    std::vector<double> dts;
    std::vector<double> err1;
    std::vector<double> err2;
    for (double dt : {0.4, 0.2, 0.1, 0.05}) {
        const TimeGrid grid = TimeGrid::uniform(0.0, 20.0, dt);
        const auto ref = lgn::reference_integrate(sys, grid, e1());
        dts.push_back(dt);
        err1.push_back(max_error(lgn::rollout_ltv(ltv_truth(), grid, e1(), 1), ref));
        err2.push_back(max_error(lgn::rollout_ltv(ltv_truth(), grid, e1(), 2), ref));
    }
    EXPECT_NEAR(slope(dts, err1), 2.0, 0.3);
    EXPECT_NEAR(slope(dts, err2), 4.0, 0.5);
}

TEST(Rollout, PureSkewConservesNorm) {
    lgn::InitOptions opt;
    opt.scale = 1.0;
    GeneratorParams p = lgn::init_params(lgn::Variant::SkewDiag, 5, 3, opt);
    p = lgn::masked_skew_diag(5, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, {}, p.values);
    const Vec x0 = lgn::random_initial_states(5, 1, 8).front();
    const auto tr = lgn::rollout(p, TimeGrid::uniform(0.0, 1000.0, 0.1), x0, 1);
    ASSERT_EQ(tr.size(), 10001u);
    for (const Vec& x : tr.states) ASSERT_NEAR(x.norm(), 1.0, 1e-10);
}

TEST(Rollout, IsMarkovian) {
    lgn::InitOptions opt;
    opt.fourier_k = 3;
    const GeneratorParams p = lgn::init_params(lgn::Variant::TimeVaryingSD, 3, 12, opt);
    const TimeGrid grid = TimeGrid::uniform(0.0, 6.0, 0.1);
    const Vec x0 = lgn::random_initial_states(3, 1, 1).front();
    for (int order : {1, 2}) {
        const auto whole = lgn::rollout(p, grid, x0, order);
        const auto first = lgn::rollout(p, grid.slice(0, 25), x0, order);
        const auto second = lgn::rollout(p, grid.slice(25, grid.size() - 1), first.states.back(), order);
        EXPECT_LE((second.states.back() - whole.states.back()).norm(), 1e-12);
    }
}

TEST(RolloutProperty, SdEnergyDecayFirstOrder) {
    EXPECT_LE(lgn::testing::sd_energy_max_increase(60, 5, 1), 1e-12);
}

TEST(RolloutProperty, SdEnergyDecaySecondOrder) {
    EXPECT_LE(lgn::testing::sd_energy_max_increase(60, 5, 2), 1e-12);
}

TEST(Commutator, MeanNormOfOscillatorHasClosedForm) {
    // [A(s), A(t)] = (g(s) - g(t)) [[0, 1], [w^2, 0]] for A = [[0, 1], [-w^2, -g]].
    const lgn::LTVOscillator sys{};
    const TimeGrid grid = TimeGrid::uniform(0.0, 20.0, 0.1);
    const auto gamma = [&](double t) { return sys.gamma0 * (1 + sys.gamma_amp * std::sin(sys.omega_d * t)); };
    double want = 0.0;
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        want += std::sqrt(1.0 + std::pow(sys.omega0, 4)) * std::abs(gamma(grid[k]) - gamma(grid[k + 1]));
    }
    want /= static_cast<double>(grid.size() - 1);
    const double got = lgn::mean_commutator_norm([&](double t) { return lgn::generator_of(sys, t); }, grid);
    EXPECT_NEAR(got, want, 1e-15);
    EXPECT_NEAR(got, 0.0041072908104598784, 1e-15);
}

}  // namespace
