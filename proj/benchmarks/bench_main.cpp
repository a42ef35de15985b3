#include <random>

#include <benchmark/benchmark.h>

#include "lgn/baselines.hpp"
#include "lgn/linalg.hpp"
#include "lgn/propagation.hpp"
#include "lgn/systems.hpp"
#include "lgn/training.hpp"

namespace {

lgn::Mat random_matrix(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    lgn::Mat m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = normal(rng) / n;
    return m;
}

void BM_Expm(benchmark::State& state) {
    const lgn::Mat m = random_matrix(static_cast<int>(state.range(0)), 1);
    for (auto _ : state) benchmark::DoNotOptimize(lgn::expm(m));
}
BENCHMARK(BM_Expm)->Arg(2)->Arg(6)->Arg(20)->Arg(100);

void BM_ExpmFrechet(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const lgn::Mat m = random_matrix(n, 1);
    const lgn::Mat e = random_matrix(n, 2);
    for (auto _ : state) benchmark::DoNotOptimize(lgn::expm_frechet(m, e));
}
BENCHMARK(BM_ExpmFrechet)->Arg(2)->Arg(6)->Arg(20)->Arg(100);

void BM_Eig(benchmark::State& state) {
    const lgn::Mat m = random_matrix(static_cast<int>(state.range(0)), 3);
    for (auto _ : state) benchmark::DoNotOptimize(lgn::eig(m));
}
BENCHMARK(BM_Eig)->Arg(6)->Arg(20)->Arg(100);

void BM_LossAndGradLti(benchmark::State& state) {
    const int sections = static_cast<int>(state.range(0));
    const auto data = lgn::make_dataset(lgn::uniform_ladder(sections, 0.1), lgn::TimeGrid::uniform(0.0, 30.0, 0.1),
                                        lgn::random_initial_states(2 * sections, 3, 0), 0.0, 0);
    lgn::InitOptions opt;
    opt.scale = 0.3;
    const auto p = lgn::init_params(lgn::Variant::SkewDiag, 2 * sections, 1, opt);
    for (auto _ : state) benchmark::DoNotOptimize(lgn::loss_and_grad(p, data, 1));
}
BENCHMARK(BM_LossAndGradLti)->Arg(3)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_LossAndGradLtv(benchmark::State& state) {
    const auto data = lgn::make_dataset(lgn::LTVOscillator{}, lgn::TimeGrid::uniform(0.0, 20.0, 0.1),
                                        {(lgn::Vec(2) << 1.0, 0.0).finished()}, 0.0, 0);
    lgn::InitOptions opt;
    opt.fourier_k = 25;
    const auto p = lgn::init_params(lgn::Variant::TimeVaryingSD, 2, 1, opt);
    const int order = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(lgn::loss_and_grad(p, data, order));
}
BENCHMARK(BM_LossAndGradLtv)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
