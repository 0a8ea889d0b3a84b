// Microbenchmarks for the hot paths: backbone convs, the attention stage,
// BEV overlap, and a full optimizer step on the toy detector.

#include <benchmark/benchmark.h>

#include "mono3d/attention.hpp"
#include "mono3d/box.hpp"
#include "mono3d/detector.hpp"
#include "mono3d/ops.hpp"
#include "mono3d/rng.hpp"
#include "mono3d/synth.hpp"

using namespace mono3d;

namespace {

TensorRef random_map(Rng& rng, int h, int w, int c) {
  auto x = make_tensor(Shape::hwc(h, w, c));
  for (std::int64_t i = 0; i < x->size(); ++i) (*x)[i] = rng.uniform(-1, 1);
  return x;
}

void bench_conv3x3_forward(benchmark::State& state) {
  Rng rng{1};
  const int c = static_cast<int>(state.range(0));
  auto x = random_map(rng, 32, 32, c);
  auto w = make_tensor(Shape::of4(3, 3, c, c));
  for (std::int64_t i = 0; i < w->size(); ++i) (*w)[i] = rng.uniform(-0.1, 0.1);
  auto b = make_tensor(Shape::vec(c));
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(conv3x3(tape, x, w, b, 1));
  }
}
BENCHMARK(bench_conv3x3_forward)->Arg(16)->Arg(64);

void bench_conv3x3_backward(benchmark::State& state) {
  Rng rng{2};
  const int c = static_cast<int>(state.range(0));
  auto x = random_map(rng, 32, 32, c);
  auto w = make_tensor(Shape::of4(3, 3, c, c));
  for (std::int64_t i = 0; i < w->size(); ++i) (*w)[i] = rng.uniform(-0.1, 0.1);
  auto b = make_tensor(Shape::vec(c));
  for (auto _ : state) {
    Tape tape;
    auto y = conv3x3(tape, x, w, b, 1);
    const int n = static_cast<int>(y->size());
    auto flat = reshape(tape, y, Shape::mat(1, n));
    auto loss = smooth_l1_to_const(tape, flat, std::vector<double>(static_cast<std::size_t>(n), 0.0), 1.0);
    tape.backward(loss);
    benchmark::DoNotOptimize(w->grad_view());
    w->zero_grad();
    b->zero_grad();
    x->zero_grad();
  }
}
BENCHMARK(bench_conv3x3_backward)->Arg(16);

void bench_attention_stage(benchmark::State& state) {
  Rng rng{3};
  AttentionConfig cfg;
  cfg.channels = 64;
  auto x = random_map(rng, 16, 16, cfg.channels);
  ParamRegistry params;
  init_attention_params(params, cfg, rng);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(attention_forward(tape, x, params, cfg));
  }
}
BENCHMARK(bench_attention_stage);

void bench_iou_bev(benchmark::State& state) {
  Rng rng{4};
  std::vector<std::pair<Box3D, Box3D>> pairs;
  for (int i = 0; i < 256; ++i) {
    Box3D a{rng.uniform(-5, 5), 0, rng.uniform(5, 25), rng.uniform(1, 5),
            rng.uniform(1, 3), rng.uniform(1, 2), rng.uniform(-3, 3)};
    Box3D b = a;
    b.cx += rng.uniform(-2, 2);
    b.cz += rng.uniform(-2, 2);
    b.ry = rng.uniform(-3, 3);
    pairs.emplace_back(a, b);
  }
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& [a, b] = pairs[i++ & 255];
    benchmark::DoNotOptimize(iou_bev(a, b));
  }
}
BENCHMARK(bench_iou_bev);

void bench_train_step(benchmark::State& state) {
  DetectorConfig cfg;
  cfg.targets.image_w = cfg.targets.image_h = 32;
  cfg.stage_channels = {8, 12, 16, 16};
  cfg.head_channels = 32;
  cfg.attention.channels = 16;
  cfg.attention.expansion = 2;
  cfg.attention.groups = 4;
  cfg.attention.reduce = cfg.targets.reduce;
  SceneConfig scfg;
  scfg.targets = cfg.targets;
  const auto scenes = generate_dataset(5, 4, scfg);
  ParamRegistry params;
  Rng rng{6};
  init_detector_params(params, cfg, rng);
  TrainConfig tc;
  tc.steps = 1;
  tc.log_every = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(train_detector(params, cfg, scenes, tc));
  }
}
BENCHMARK(bench_train_step)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
