// Microbenchmarks for the hot paths: batched network evaluation, the
// piecewise-constant builder, breakpoint extraction, the piecewise-linear fit
// dynamic program, and one full-batch training epoch.

#include <benchmark/benchmark.h>

#include <vector>

#include "apx/analysis.hpp"
#include "apx/construct.hpp"
#include "apx/learn.hpp"
#include "apx/network.hpp"
#include "apx/rng.hpp"

namespace {

using namespace apx;

Network make_refined_pwc(int k) {
    Activation act = Activation::make(ActKind::Sigmoid);
    ReferencePoint ref = find_reference_point(act, 3);
    GridSpec g{1, k, 1.0 / (24.0 * k * k)};
    PiecewiseConstantSpec spec;
    spec.grid = g;
    spec.coeffs.resize(spec.cell_count());
    Rng rng(5);
    for (double& c : spec.coeffs) c = rng.uniform(-1.0, 1.0);
    for (double c : spec.coeffs) spec.c_max = std::max(spec.c_max, std::abs(c));
    return build_refined_pwc(act, ref, spec, 0.1);
}

void BM_EvaluateBatch(benchmark::State& state) {
    Network net = make_refined_pwc(4);
    const long n = state.range(0);
    Eigen::MatrixXd pts(1, n);
    Rng rng(6);
    for (long i = 0; i < n; ++i) pts(0, i) = rng.uniform();
    for (auto _ : state) {
        benchmark::DoNotOptimize(evaluate_batch(net, pts));
    }
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_EvaluateBatch)->Arg(1024)->Arg(16384);

void BM_BuildRefinedPwc(benchmark::State& state) {
    for (auto _ : state) {
        benchmark::DoNotOptimize(make_refined_pwc(static_cast<int>(state.range(0))));
    }
}
BENCHMARK(BM_BuildRefinedPwc)->Arg(2)->Arg(6);

void BM_ExtractProfile(benchmark::State& state) {
    Rng rng(7);
    Network net{Activation::make(ActKind::ReLU), {}};
    int in = 1;
    for (int li = 0; li < 4; ++li) {
        int out = li == 3 ? 1 : 8;
        Layer layer;
        layer.rows = out;
        layer.cols = in;
        for (int r = 0; r < out * in; ++r) layer.weight.push_back(rng.uniform(-1.0, 1.0));
        for (int r = 0; r < out; ++r) layer.bias.push_back(rng.uniform(-1.0, 1.0));
        net.layers.push_back(layer);
        in = out;
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(extract_pwl_profile(net));
    }
}
BENCHMARK(BM_ExtractProfile);

void BM_PwlFitDp(benchmark::State& state) {
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            best_pwl_sq_error_dp(8, static_cast<int>(state.range(0))));
    }
}
BENCHMARK(BM_PwlFitDp)->Arg(1024)->Arg(4096);

void BM_TrainEpochs(benchmark::State& state) {
    RFFTarget target = gen_rff_target(2, 10, 1);
    Dataset data = gen_dataset(target, state.range(0), 0.1, 2,
                               std::max(sup_norm_estimate(target, 10000, 1), 1e-9));
    TrainConfig cfg;
    cfg.width = 256;
    cfg.act = Activation::make(ActKind::GELU);
    cfg.learning_rate = 1e-2;
    cfg.l2_coeff = 1e-4;
    cfg.epochs = 50;
    cfg.single_precision = true;
    for (auto _ : state) {
        benchmark::DoNotOptimize(train_two_layer(data, cfg));
    }
    state.SetItemsProcessed(state.iterations() * cfg.epochs);
}
BENCHMARK(BM_TrainEpochs)->Arg(512)->Arg(2048)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
