#include "properties.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "lgn/baselines.hpp"
#include "lgn/metrics.hpp"
#include "lgn/propagation.hpp"
#include "lgn/systems.hpp"
#include "lgn/training.hpp"

namespace lgn::testing {

Mat random_matrix(int n, double scale, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, scale);
    Mat m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = normal(rng);
    return m;
}

namespace {

int dim_of_draw(int k) { return 1 + k % 8; }

double scale_of_draw(int k) { return 0.1 * std::pow(10.0, k % 4); }

}  // namespace

double expm_semigroup_residual(int draws, std::uint64_t seed) {
    double worst = 0.0;
    for (int k = 0; k < draws; ++k) {
        const Mat a = random_matrix(dim_of_draw(k), scale_of_draw(k) / 4.0, seed + k);
        const double s = 0.3 + 0.1 * (k % 5);
        const double t = 1.7 - 0.2 * (k % 3);
        const Mat whole = expm((s + t) * a);
        const Mat parts = expm(s * a) * expm(t * a);
        worst = std::max(worst, (whole - parts).norm() / whole.norm());
    }
    return worst;
}

double expm_orthogonality_residual(int draws, std::uint64_t seed) {
    double worst = 0.0;
    for (int k = 0; k < draws; ++k) {
        const Mat m = random_matrix(dim_of_draw(k), scale_of_draw(k), seed + k);
        const Mat s = m - m.transpose();
        const Mat q = expm(s);
        worst = std::max(worst, (q.transpose() * q - Mat::Identity(q.rows(), q.cols())).norm());
    }
    return worst;
}

double expm_inverse_residual(int draws, std::uint64_t seed) {
    double worst = 0.0;
    for (int k = 0; k < draws; ++k) {
        const int n = dim_of_draw(k);
        const Mat a = random_matrix(n, 5.0 / (n * (1 + k % 4)), seed + k);
        const Mat prod = expm(a) * expm(-a);
        worst = std::max(worst, (prod - Mat::Identity(a.rows(), a.cols())).norm());
    }
    return worst;
}

std::vector<GradientCase> gradient_fd_cases() {
    const Variant variants[] = {Variant::FullA,           Variant::SkewDiag,      Variant::TimeVaryingSD,
                                Variant::TimeVaryingFull, Variant::ParametricLTV, Variant::PortHamiltonian};
    std::vector<GradientCase> out;
    for (int n : {2, 6}) {
        const SystemSpec spec = n == 2 ? SystemSpec{LTVOscillator{}} : SystemSpec{uniform_ladder(3, 0.1)};
        const Dataset data =
            make_dataset(spec, TimeGrid::uniform(0.0, 3.0, 0.1), random_initial_states(n, 2, 3), 0.05, 11);
        for (Variant v : variants) {
            if (v == Variant::ParametricLTV && n != 2) continue;
            InitOptions opt;
            opt.scale = 0.3;
            opt.fourier_k = 3;
            const GeneratorParams p = init_params(v, n, 7, opt);
            for (int order : {1, 2}) {
                const Vec g = loss_and_grad(p, data, order).grad;
                Vec fd(p.size());
                for (Eigen::Index i = 0; i < p.size(); ++i) {
                    const double h = 1e-5 * std::max(1.0, std::abs(p.values(i)));
                    GeneratorParams plus = p;
                    GeneratorParams minus = p;
                    plus.values(i) += h;
                    minus.values(i) -= h;
                    fd(i) = (loss(plus, data, order) - loss(minus, data, order)) / (2.0 * h);
                }
                const double rel = (g - fd).lpNorm<Eigen::Infinity>() / fd.lpNorm<Eigen::Infinity>();
                out.push_back({v, n, order, rel});
            }
        }
    }
    return out;
}

double sd_energy_max_increase(int draws, std::uint64_t seed, int order) {
    double worst = -1.0;
    const TimeGrid grid = TimeGrid::uniform(0.0, 20.0, 0.1);
    for (int k = 0; k < draws; ++k) {
        const int n = 2 + k % 5;
        InitOptions opt;
        opt.scale = 1.0;
        opt.fourier_k = 4;
        opt.dissipation = k % 2 == 0 ? 0.05 : 1e-4;
        const Variant v = k % 3 == 0 ? Variant::TimeVaryingSD : Variant::SkewDiag;
        const GeneratorParams p = init_params(v, n, seed + k, opt);
        const Vec x0 = random_initial_states(n, 1, seed + 1000 + k).front();
        const Trajectory tr = rollout(p, grid, x0, order);
        for (std::size_t i = 0; i + 1 < tr.size(); ++i) {
            worst = std::max(worst, tr.states[i + 1].norm() / tr.states[i].norm() - 1.0);
        }
    }
    return worst;
}

double skew_diag_max_real(int draws, std::uint64_t seed) {
    double worst = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < draws; ++k) {
        InitOptions opt;
        opt.scale = 2.0;
        opt.dissipation = k % 4 == 0 ? 1e-9 : 0.3;
        const GeneratorParams p = init_params(Variant::SkewDiag, 2 + k % 19, seed + k, opt);
        worst = std::max(worst, eig(assemble(p, 0.0)).max_real());
    }
    return worst;
}

double matching_cost_gap(int draws, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    double worst = 0.0;
    for (int k = 0; k < draws; ++k) {
        const std::size_t n = 1 + static_cast<std::size_t>(k % 6);
        ComplexSpectrum pred;
        ComplexSpectrum truth;
        for (std::size_t i = 0; i < n; ++i) {
            pred.values.emplace_back(normal(rng), normal(rng));
            truth.values.emplace_back(normal(rng), normal(rng));
        }
        const auto cost = [&](const std::vector<std::size_t>& perm) {
            double c = 0.0;
            for (std::size_t i = 0; i < n; ++i) c += std::abs(pred.values[i] - truth.values[perm[i]]);
            return c;
        };
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        double best = std::numeric_limits<double>::infinity();
        do {
            best = std::min(best, cost(perm));
        } while (std::next_permutation(perm.begin(), perm.end()));
        worst = std::max(worst, std::abs(cost(match_eigenvalues(pred, truth)) - best));
    }
    return worst;
}

double linear_id_slope() {
    const RLCSystem sys{1.0, 0.1};
    const Mat a = generator_of(sys, 0.0);
    std::vector<double> log_dt;
    std::vector<double> log_err;
    for (double dt : {0.4, 0.2, 0.1, 0.05}) {
        const Dataset data =
            make_dataset(sys, TimeGrid::uniform(0.0, 20.0, dt), {(Vec(2) << 1.0, 0.0).finished()}, 0.0, 0);
        log_dt.push_back(std::log(dt));
        log_err.push_back(std::log((linear_id(data) - a).norm()));
    }
    const double mx = std::accumulate(log_dt.begin(), log_dt.end(), 0.0) / log_dt.size();
    const double my = std::accumulate(log_err.begin(), log_err.end(), 0.0) / log_err.size();
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < log_dt.size(); ++i) {
        sxy += (log_dt[i] - mx) * (log_err[i] - my);
        sxx += (log_dt[i] - mx) * (log_dt[i] - mx);
    }
    return sxy / sxx;
}

}  // namespace lgn::testing
