#include <benchmark/benchmark.h>

#include "framecast/autograd.hpp"
#include "framecast/e3d.hpp"
#include "framecast/metrics.hpp"
#include "framecast/rng.hpp"
#include "framecast/train.hpp"

using namespace framecast;

namespace {

Tensor randn(Shape shape, RngStream& rng) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = 0.1 * rng.normal();
  return t;
}

void BM_Conv3dForward(benchmark::State& state) {
  RngStream rng(1);
  Tensor x = randn({16, 2, 16, 16}, rng);
  Tensor k = randn({16, 16, 2, 3, 3}, rng);
  Tensor b = randn({16}, rng);
  NoGradGuard ng;
  for (auto _ : state) {
    Var y = conv3d(constant(x), constant(k), constant(b), {1, 1, 1}, {0, 1, 1});
    benchmark::DoNotOptimize(y->value.data());
  }
}
BENCHMARK(BM_Conv3dForward);

void BM_Conv3dTrainStep(benchmark::State& state) {
  RngStream rng(1);
  Tensor x = randn({16, 2, 16, 16}, rng);
  Tensor k = randn({16, 16, 2, 3, 3}, rng);
  Tensor b = randn({16}, rng);
  for (auto _ : state) {
    Var kk = leaf(k, true);
    Var bb = leaf(b, true);
    Var y = conv3d(constant(x), kk, bb, {1, 1, 1}, {0, 1, 1});
    Var loss = mean(mul(y, y));
    backward(loss);
    benchmark::DoNotOptimize(kk->grad.data());
  }
}
BENCHMARK(BM_Conv3dTrainStep);

void BM_Upsample2(benchmark::State& state) {
  RngStream rng(2);
  Tensor x = randn({8, 32, 32}, rng);
  NoGradGuard ng;
  for (auto _ : state) {
    Var y = upsample2_bilinear(constant(x));
    benchmark::DoNotOptimize(y->value.data());
  }
}
BENCHMARK(BM_Upsample2);

void BM_RecallCellStep(benchmark::State& state) {
  E3DConfig cfg;
  cfg.in_channels = 8;
  cfg.channels = 8;
  RngStream rng(3);
  ParamSet ps;
  add_e3d_cell_params(ps, "cell", cfg, &rng);
  RecallState st = init_recall_state(cfg, 16, 16);
  for (int i = 0; i < 4; ++i) st.bank.push_back(constant(randn({8, 16, 16}, rng)));
  Tensor in = randn({8, 16, 16}, rng);
  NoGradGuard ng;
  for (auto _ : state) {
    auto [out, next] = cell_step(ps, "cell", cfg, constant(in), st);
    benchmark::DoNotOptimize(out->value.data());
  }
}
BENCHMARK(BM_RecallCellStep);

void BM_Ssim64(benchmark::State& state) {
  RngStream rng(4);
  VideoSequence a{randn({10, 64, 64, 1}, rng), "a"};
  VideoSequence b{randn({10, 64, 64, 1}, rng), "b"};
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim64);

void BM_PriorPredict(benchmark::State& state) {
  GeneratorConfig gcfg;
  gcfg.n_scales = 2;
  gcfg.channels = 8;
  gcfg.context_len = 5;
  gcfg.horizon = 5;
  LatentConfig lcfg{gcfg.d_z, 1, 8};
  RngStream rng(5);
  ParamSet ps;
  add_generator_params(ps, "gen.", gcfg, &rng);
  add_latent_encoder_params(ps, "latent.", lcfg, &rng);
  VideoSequence ctx{randn({5, 32, 32, 1}, rng), "ctx"};
  for (std::int64_t i = 0; i < ctx.frames.size(); ++i)
    ctx.frames[i] = std::min(1.0, std::abs(ctx.frames[i]));
  std::uint64_t seed = 0;
  for (auto _ : state) {
    VideoSequence out = predict(ps, gcfg, lcfg, ctx, PredictMode::prior, seed++);
    benchmark::DoNotOptimize(out.frames.data());
  }
}
BENCHMARK(BM_PriorPredict);

void BM_TrainStep(benchmark::State& state) {
  ModelConfig cfg;
  cfg.gen.n_scales = 2;
  cfg.gen.channels = 8;
  cfg.gen.context_len = 2;
  cfg.gen.horizon = 2;
  cfg.gen.d_z = 4;
  cfg.gen.tau = 2;
  cfg.latent = {4, 1, 8};
  cfg.ae = {1, 16, 16, 4, 8};
  cfg.video_head = {1, 8};
  cfg.manifold_head = {8, 16};
  cfg.data.canvas_h = 16;
  cfg.data.canvas_w = 16;
  cfg.data.n_sprites = 1;
  cfg.data.glyphs = {Tensor::full({5, 5}, 1.0)};
  cfg.seed = 6;
  std::vector<VideoSequence> seqs = generate_dataset(cfg.data, 4, 2);
  std::vector<Window> batch = dataset_windows(seqs, {2, 2, 4});
  std::vector<Tensor> frames;
  for (const auto& s : seqs)
    for (std::int64_t t = 0; t < s.length(); ++t) frames.push_back(frame_chw(s, t));
  TrainState st = init_train_state(cfg);
  st.ae = pretrain_autoencoder(frames, cfg.ae, 10, 6);
  for (auto _ : state) {
    LossBreakdown b = train_step(st, batch);
    benchmark::DoNotOptimize(b.combined);
  }
}
BENCHMARK(BM_TrainStep);

}  // namespace

BENCHMARK_MAIN();
