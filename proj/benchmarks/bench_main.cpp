#include <benchmark/benchmark.h>

#include <random>

#include "dlsr/autograd.hpp"
#include "dlsr/conv.hpp"
#include "dlsr/evaluation.hpp"
#include "dlsr/genotype.hpp"
#include "dlsr/losses.hpp"
#include "dlsr/search_space.hpp"

namespace {

using namespace dlsr;

Tensor filled(Shape shape, std::uint64_t seed) {
    Tensor t(std::move(shape));
    Rng rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& v : t.values()) v = u(rng);
    return t;
}

// args: channels, kernel, groups (0 = depthwise)
void BM_ConvForward(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0)), k = static_cast<int>(state.range(1));
    const int groups = state.range(2) == 0 ? c : 1;
    const Tensor x = filled({1, c, 48, 48}, 1);
    const Tensor w = filled({c, c / groups, k, k}, 2);
    ConvGeometry g;
    g.padding = k / 2;
    g.groups = groups;
    for (auto _ : state) benchmark::DoNotOptimize(conv2d_forward(x, w, nullptr, g));
    state.SetItemsProcessed(state.iterations() * 48LL * 48 * c * (c / groups) * k * k);
}
BENCHMARK(BM_ConvForward)->Args({16, 3, 1})->Args({16, 7, 1})->Args({48, 3, 1})->Args({48, 7, 0})->Unit(benchmark::kMicrosecond);

void BM_ConvBackward(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0)), k = static_cast<int>(state.range(1));
    const Tensor x = filled({1, c, 48, 48}, 1);
    const Tensor w = filled({c, c, k, k}, 2);
    const Tensor dy = filled({1, c, 48, 48}, 3);
    ConvGeometry g;
    g.padding = k / 2;
    for (auto _ : state) {
        Tensor dx(x.shape()), dw(w.shape());
        conv2d_backward(x, w, dy, g, &dx, &dw, nullptr);
        benchmark::DoNotOptimize(dx);
    }
}
BENCHMARK(BM_ConvBackward)->Args({16, 3})->Args({48, 3})->Unit(benchmark::kMicrosecond);

SupernetConfig small_config(int channels, int cells) {
    SupernetConfig cfg;
    cfg.channels = channels;
    cfg.num_cells = cells;
    cfg.scale = 2;
    return cfg;
}

void BM_SupernetForward(benchmark::State& state) {
    const SrNetwork net = make_supernet(small_config(static_cast<int>(state.range(0)), 3), 1);
    const Tensor lr = filled({1, 3, 32, 32}, 4);
    for (auto _ : state) benchmark::DoNotOptimize(net.upscale(lr));
}
BENCHMARK(BM_SupernetForward)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

// One search-style step: forward, total loss with the regulariser, backward.
void BM_SupernetForwardBackward(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0));
    const SrNetwork net = make_supernet(small_config(c, 3), 1);
    const Tensor lr = filled({2, 3, 16, 16}, 5);
    Tensor hr = filled({2, 3, 32, 32}, 6);
    const LoGKernel kernel = LoGKernel::make();
    LossWeights w;
    w.gamma = 0.1;
    const ParamList params = net.all_parameters();
    for (auto _ : state) {
        const auto terms = total_loss(net.forward(ag::constant(lr)), hr, net.arch().alpha, c, w, kernel);
        terms.total.backward();
        for (auto p : params.items()) p.var.zero_grad();
    }
}
BENCHMARK(BM_SupernetForwardBackward)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_DerivedForward(benchmark::State& state) {
    const Genotype g = uniform_genotype({"conv1x1", "sepconv3x3", "sepconv7x7"}, 16, 3, 2);
    const SrNetwork net = build_derived_network(g, SupernetConfig{}, 1);
    const Tensor lr = filled({1, 3, 32, 32}, 7);
    for (auto _ : state) benchmark::DoNotOptimize(net.upscale(lr));
}
BENCHMARK(BM_DerivedForward)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
