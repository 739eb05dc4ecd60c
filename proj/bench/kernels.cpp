// Serial reference vs OpenMP path for the data-parallel kernels.

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "anq/constrained_target.hpp"
#include "anq/geometry.hpp"
#include "anq/rng.hpp"
#include "anq/tabular.hpp"

using namespace anq;

namespace {

Exec exec_of(const benchmark::State& st) { return st.range(0) ? Exec::parallel : Exec::serial; }

void BM_ConstrainedTarget2D(benchmark::State& st) {
    auto q = [](std::span<const double> a) { return std::sin(3.0 * a[0]) * std::cos(2.0 * a[1]) - a[0] * a[1]; };
    const std::vector<std::vector<double>> acts{{-0.5, 0.2}, {0.4, -0.3}, {0.1, 0.6}};
    const std::vector<double> radii{0.2, 0.35, 0.1};
    for (auto _ : st) {
        benchmark::DoNotOptimize(oracle::brute_force_constrained_target(q, acts, radii, 1000, 1.0, exec_of(st)).value);
    }
}

void BM_Hausdorff(benchmark::State& st) {
    const auto s = geometry::SupportSpec::box(2, 1.0);
    auto rng = make_rng(1, 0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    geometry::PointSet c;
    for (int i = 0; i < 200; ++i) {
        const double p[2] = {u(rng), u(rng)};
        c.push(p);
    }
    const auto un = geometry::BallUnion::uniform(c, 0.1);
    for (auto _ : st) benchmark::DoNotOptimize(geometry::hausdorff_distance(s, un, 0.01, exec_of(st)).distance);
}

void BM_Coverage(benchmark::State& st) {
    const auto s = geometry::SupportSpec::box(2, 1.0);
    for (auto _ : st) benchmark::DoNotOptimize(geometry::coverage_trial(s, 0.2, 300, 8, 0.02, 3, exec_of(st)).successes);
}

void BM_PerformanceBoundSuite(benchmark::State& st) {
    for (auto _ : st) benchmark::DoNotOptimize(oracle::run_performance_bound_suite(5, 200, st.range(0) != 0).min_slack);
}

}  // namespace

BENCHMARK(BM_ConstrainedTarget2D)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Hausdorff)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Coverage)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PerformanceBoundSuite)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
