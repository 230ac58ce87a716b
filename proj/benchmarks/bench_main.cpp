#include <benchmark/benchmark.h>

#include <random>

#include "mtr/eval.hpp"
#include "mtr/network.hpp"
#include "mtr/synthdata.hpp"

using namespace mtr;

namespace {

std::vector<double> random_input(std::size_t n) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> x(n);
    for (auto& v : x) v = u(rng);
    return x;
}

RegionSample labeled_sample() {
    RegionSample s{Box(0, 0, 1, 1)};
    s.det_label = DetLabel::Positive;
    s.pose_targets = std::vector<NormalizedKeypoint>(kNumKeypoints, NormalizedKeypoint{0.1, -0.1, true});
    s.action_label = 3;
    return s;
}

void BM_Forward(benchmark::State& state) {
    const MultitaskNet net{NetworkConfig{}};
    const auto params = net.init_params(1);
    const auto x = random_input(net.config().input.size());
    ForwardCache cache;
    for (auto _ : state) {
        net.forward(params, x, cache);
        benchmark::DoNotOptimize(cache.outputs.det_probs);
    }
}
BENCHMARK(BM_Forward);

void BM_ForwardBackward(benchmark::State& state) {
    const MultitaskNet net{NetworkConfig{}};
    const auto params = net.init_params(1);
    const auto x = random_input(net.config().input.size());
    const auto sample = labeled_sample();
    ForwardCache cache;
    auto grads = params.zeros_like();
    for (auto _ : state) {
        net.forward(params, x, cache);
        benchmark::DoNotOptimize(net.accumulate_gradients(params, x, sample, {1, 1, 2}, cache, grads));
    }
}
BENCHMARK(BM_ForwardBackward);

void BM_Iou(benchmark::State& state) {
    const Box a(3, 4, 40, 80), b(10, 2, 50, 70);
    for (auto _ : state) benchmark::DoNotOptimize(iou(a, b));
}
BENCHMARK(BM_Iou);

void BM_AveragePrecision(benchmark::State& state) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<ScoredOutcome> outcomes(static_cast<std::size_t>(state.range(0)));
    std::size_t positives = 0;
    for (auto& o : outcomes) {
        o.score = u(rng);
        o.true_positive = u(rng) < 0.3;
        positives += o.true_positive ? 1 : 0;
    }
    for (auto _ : state) benchmark::DoNotOptimize(average_precision(pr_curve(outcomes, positives + 1)));
}
BENCHMARK(BM_AveragePrecision)->Arg(100)->Arg(10000);

void BM_Nms(benchmark::State& state) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 80.0);
    std::vector<ScoredPrediction> preds;
    for (int i = 0; i < state.range(0); ++i) {
        const double x = u(rng), y = u(rng);
        preds.push_back({0, u(rng), BoxPayload{Box(x, y, x + 16, y + 30), 0}});
    }
    for (auto _ : state) benchmark::DoNotOptimize(non_max_suppression(preds, 0.3));
}
BENCHMARK(BM_Nms)->Arg(100)->Arg(1000);

void BM_RenderRegion(benchmark::State& state) {
    const auto scene = generate_scene(SceneSpec{}, 7);
    std::vector<double> out(kCanvasChannels * 24 * 24);
    for (auto _ : state) {
        render_region(scene.canvas, Box(10.5, 12.25, 42.0, 70.0), 24, out);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_RenderRegion);

void BM_GenerateScene(benchmark::State& state) {
    std::uint64_t seed = 0;
    for (auto _ : state) benchmark::DoNotOptimize(generate_scene(SceneSpec{}, ++seed));
}
BENCHMARK(BM_GenerateScene);

}  // namespace
BENCHMARK_MAIN();
