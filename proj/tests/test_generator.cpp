#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "framecast/error.hpp"
#include "framecast/generator.hpp"
#include "framecast/rng.hpp"

using namespace framecast;

namespace {

Tensor random_map(Shape shape, RngStream& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

VideoSequence random_clip(int64_t t, int64_t h, int64_t w, int64_t c, uint64_t seed) {
  RngStream rng(seed);
  VideoSequence seq;
  seq.id = "clip";
  seq.frames = random_map({t, h, w, c}, rng, 0.0, 1.0);
  return seq;
}

std::vector<Tensor> random_latents(int64_t m, int64_t d, uint64_t seed) {
  RngStream rng(seed);
  std::vector<Tensor> zs;
  for (int64_t j = 0; j < m; ++j) zs.push_back(random_map({d}, rng));
  return zs;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (int64_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

GeneratorConfig tiny_config() {
  GeneratorConfig cfg;
  cfg.n_scales = 2;
  cfg.channels = 3;
  cfg.context_len = 3;
  cfg.horizon = 2;
  cfg.d_z = 3;
  cfg.tau = 3;
  return cfg;
}

}  // namespace

TEST_CASE("combining scales upsamples, adds, and clamps only at the end") {
  RngStream rng(5);
  Tensor coarse = random_map({2, 3, 4}, rng, 0.0, 1.0);
  Tensor zero_res({2, 6, 8});
  Tensor up = combine_scales(coarse, zero_res, false);
  REQUIRE(up.shape() == Shape{2, 6, 8});

  SUBCASE("zero residual reproduces the bare upsample") {
    NoGradGuard ng;
    Tensor direct = upsample2_bilinear(constant(coarse))->value;
    CHECK(max_abs_diff(up, direct) == 0.0);
  }
  SUBCASE("zero coarse passes the residual through") {
    Tensor res = random_map({2, 6, 8}, rng);
    Tensor out = combine_scales(Tensor({2, 3, 4}), res, false);
    CHECK(max_abs_diff(out, res) == 0.0);
  }
  SUBCASE("a constant plane stays the same constant at double resolution") {
    Tensor flat = Tensor::full({1, 4, 4}, 0.5);
    Tensor out = combine_scales(flat, Tensor({1, 8, 8}), false);
    for (int64_t i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("the final scale clamps into the pixel range") {
    Tensor big = Tensor::full({1, 2, 2}, 0.9);
    Tensor res = Tensor::full({1, 4, 4}, 0.9);
    Tensor lo = combine_scales(big, Tensor::full({1, 4, 4}, -5.0), true);
    Tensor hi = combine_scales(big, res, true);
    for (int64_t i = 0; i < hi.size(); ++i) {
      CHECK(lo[i] == 0.0);
      CHECK(hi[i] == 1.0);
    }
    Tensor open = combine_scales(big, res, false);
    for (int64_t i = 0; i < open.size(); ++i) CHECK(open[i] == doctest::Approx(1.8));
  }
  SUBCASE("resolution or channel mismatch is rejected") {
    CHECK_THROWS_AS(combine_scales(coarse, Tensor({2, 6, 9}), false), Error);
    CHECK_THROWS_AS(combine_scales(coarse, Tensor({3, 6, 8}), false), Error);
    CHECK_THROWS_AS(combine_scales(coarse, Tensor({2, 12, 16}), false), Error);
  }
}

TEST_CASE("rollout obeys the shape contract and is deterministic") {
  GeneratorConfig cfg = tiny_config();
  RngStream rng(11);
  ParamSet ps;
  add_generator_params(ps, "g.", cfg, &rng);
  VideoSequence ctx = random_clip(cfg.context_len, 8, 8, 1, 21);
  std::vector<Tensor> zs = random_latents(cfg.horizon, cfg.d_z, 31);

  VideoSequence pred = rollout(ps, "g.", cfg, ctx, zs);
  CHECK(pred.length() == cfg.horizon);
  CHECK(pred.height() == 8);
  CHECK(pred.width() == 8);
  CHECK(pred.channels() == 1);
  CHECK(pred.id == ctx.id);

  VideoSequence again = rollout(ps, "g.", cfg, ctx, zs);
  CHECK(max_abs_diff(pred.frames, again.frames) == 0.0);

  SUBCASE("every emitted pixel lies in the unit interval") {
    CHECK(pred.frames.min() >= 0.0);
    CHECK(pred.frames.max() <= 1.0);
  }
  SUBCASE("the latent actually steers the output") {
    std::vector<Tensor> other = random_latents(cfg.horizon, cfg.d_z, 32);
    VideoSequence moved = rollout(ps, "g.", cfg, ctx, other);
    CHECK(max_abs_diff(pred.frames, moved.frames) > 0.0);
  }
}

TEST_CASE("vacuous rollout and argument mismatches") {
  GeneratorConfig cfg = tiny_config();
  cfg.horizon = 0;
  RngStream rng(12);
  ParamSet ps;
  add_generator_params(ps, "g.", cfg, &rng);
  VideoSequence ctx = random_clip(cfg.context_len, 8, 8, 1, 22);

  VideoSequence pred = rollout(ps, "g.", cfg, ctx, {});
  CHECK(pred.length() == 0);
  CHECK(pred.height() == 8);

  SUBCASE("latent count must match the horizon") {
    CHECK_THROWS_AS(rollout(ps, "g.", cfg, ctx, random_latents(1, cfg.d_z, 1)), Error);
    cfg.horizon = 2;
    CHECK_THROWS_AS(rollout(ps, "g.", cfg, ctx, random_latents(1, cfg.d_z, 1)), Error);
    try {
      rollout(ps, "g.", cfg, ctx, random_latents(3, cfg.d_z, 1));
      FAIL("missing latent mismatch error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::shape_mismatch);
    }
  }
  SUBCASE("latent width must match d_z") {
    cfg.horizon = 1;
    CHECK_THROWS_AS(rollout(ps, "g.", cfg, ctx, random_latents(1, cfg.d_z + 1, 1)), Error);
  }
  SUBCASE("context length must match the configured window") {
    cfg.horizon = 1;
    VideoSequence shorter = random_clip(cfg.context_len - 1, 8, 8, 1, 23);
    CHECK_THROWS_AS(rollout(ps, "g.", cfg, shorter, random_latents(1, cfg.d_z, 1)), Error);
  }
  SUBCASE("frame size must divide by 2^n_scales") {
    cfg.horizon = 1;
    VideoSequence odd = random_clip(cfg.context_len, 6, 8, 1, 24);
    CHECK_THROWS_AS(rollout(ps, "g.", cfg, odd, random_latents(1, cfg.d_z, 1)), Error);
  }
  SUBCASE("config validation") {
    GeneratorConfig bad = tiny_config();
    bad.n_scales = 0;
    CHECK_THROWS_AS(validate(bad), Error);
    bad = tiny_config();
    bad.horizon = -1;
    CHECK_THROWS_AS(validate(bad), Error);
    bad = tiny_config();
    bad.kernel = 2;
    CHECK_THROWS_AS(validate(bad), Error);
  }
}

TEST_CASE("zeroed residual heads telescope the coarse prediction upward") {
  for (int64_t scales : {2, 3}) {
    GeneratorConfig cfg = tiny_config();
    cfg.n_scales = scales;
    cfg.horizon = 3;
    RngStream rng(13);
    ParamSet ps;
    add_generator_params(ps, "g.", cfg, &rng);
    for (int64_t s = 1; s < scales; ++s) {
      ps.require("g.s" + std::to_string(s) + ".head.w").value().fill(0.0);
      ps.require("g.s" + std::to_string(s) + ".head.b").value().fill(0.0);
    }
    int64_t side = 8 << (scales - 1);
    VideoSequence ctx = random_clip(cfg.context_len, side, side, 1, 25);
    std::vector<Tensor> zs = random_latents(cfg.horizon, cfg.d_z, 35);

    NoGradGuard ng;
    std::vector<Var> zvars;
    for (const Tensor& z : zs) zvars.push_back(constant(z));
    std::vector<std::vector<Var>> per_scale;
    std::vector<Var> fine = rollout_frames(ps, "g.", cfg, ctx, zvars, &per_scale);
    REQUIRE(per_scale.size() == static_cast<size_t>(scales));
    REQUIRE(per_scale[0].size() == fine.size());
    for (size_t j = 0; j < fine.size(); ++j) {
      Var lifted = per_scale[0][j];
      for (int64_t s = 1; s < scales; ++s) lifted = upsample2_bilinear(lifted);
      CHECK(max_abs_diff(lifted->value, fine[j]->value) < 1e-6);
      CHECK(max_abs_diff(per_scale[static_cast<size_t>(scales - 1)][j]->value,
                         fine[j]->value) == 0.0);
    }
  }
}

TEST_CASE("generator parameter gradients match central finite differences") {
  GeneratorConfig cfg = tiny_config();
  RngStream rng(14);
  ParamSet ps;
  add_generator_params(ps, "g.", cfg, &rng);
  VideoSequence ctx = random_clip(cfg.context_len, 8, 8, 1, 26);
  std::vector<Tensor> zs = random_latents(cfg.horizon, cfg.d_z, 36);

  auto forward = [&]() {
    std::vector<Var> zvars;
    for (const Tensor& z : zs) zvars.push_back(constant(z));
    std::vector<Var> frames = rollout_frames(ps, "g.", cfg, ctx, zvars);
    return mean(frames.back());
  };

  ps.zero_grad();
  Var loss = forward();
  backward(loss);
  ps.harvest();

  const double h = 1e-5;
  RngStream pick(99);
  bool every_group_live = true;
  for (const auto& p : ps.all()) {
    int64_t n = p->value().size();
    bool live = false;
    for (int trial = 0; trial < 4; ++trial) {
      int64_t idx = static_cast<int64_t>(pick.below(static_cast<uint64_t>(n)));
      double keep = p->value().data()[idx];
      double analytic = p->grad().data()[idx];
      if (analytic != 0.0) live = true;
      NoGradGuard ng;
      p->value().data()[idx] = keep + h;
      double up = forward()->value.item();
      p->value().data()[idx] = keep - h;
      double dn = forward()->value.item();
      p->value().data()[idx] = keep;
      double fd = (up - dn) / (2 * h);
      double rel = std::abs(analytic - fd) / std::max({1.0, std::abs(fd), std::abs(analytic)});
      CHECK(rel < 1e-3);
    }
    if (p->name().find(".w") != std::string::npos && !live) every_group_live = false;
  }
  CHECK(every_group_live);
}

TEST_CASE("latent gradients flow through the rollout") {
  GeneratorConfig cfg = tiny_config();
  cfg.horizon = 2;
  RngStream rng(15);
  ParamSet ps;
  add_generator_params(ps, "g.", cfg, &rng);
  VideoSequence ctx = random_clip(cfg.context_len, 8, 8, 1, 27);
  std::vector<Tensor> zs = random_latents(cfg.horizon, cfg.d_z, 37);

  std::vector<Var> zvars;
  for (const Tensor& z : zs) zvars.push_back(leaf(z, true));
  std::vector<Var> frames = rollout_frames(ps, "g.", cfg, ctx, zvars);
  backward(mean(frames.back()));
  for (const Var& zv : zvars) {
    REQUIRE(zv->grad.size() == cfg.d_z);
    double mag = 0;
    for (int64_t i = 0; i < cfg.d_z; ++i) mag += std::abs(zv->grad[i]);
    CHECK(mag > 0.0);
  }
}

TEST_CASE("prediction modes draw seeded latents") {
  GeneratorConfig gcfg = tiny_config();
  LatentConfig lcfg;
  lcfg.d_z = gcfg.d_z;
  lcfg.in_channels = 1;
  lcfg.features = 4;
  RngStream rng(16);
  ParamSet ps;
  add_generator_params(ps, "gen.", gcfg, &rng);
  add_latent_encoder_params(ps, "latent.", lcfg, &rng);
  VideoSequence ctx = random_clip(gcfg.context_len, 8, 8, 1, 28);
  VideoSequence fut = random_clip(gcfg.horizon, 8, 8, 1, 29);

  VideoSequence a = predict(ps, gcfg, lcfg, ctx, PredictMode::prior, 7);
  VideoSequence b = predict(ps, gcfg, lcfg, ctx, PredictMode::prior, 7);
  CHECK(a.length() == gcfg.horizon);
  CHECK(max_abs_diff(a.frames, b.frames) == 0.0);

  VideoSequence c = predict(ps, gcfg, lcfg, ctx, PredictMode::prior, 8);
  CHECK(max_abs_diff(a.frames, c.frames) > 0.0);

  VideoSequence p1 = predict(ps, gcfg, lcfg, ctx, PredictMode::posterior, 7, &fut);
  VideoSequence p2 = predict(ps, gcfg, lcfg, ctx, PredictMode::posterior, 7, &fut);
  CHECK(max_abs_diff(p1.frames, p2.frames) == 0.0);
  CHECK(max_abs_diff(p1.frames, a.frames) > 0.0);

  SUBCASE("posterior mode without targets is a misuse error") {
    try {
      predict(ps, gcfg, lcfg, ctx, PredictMode::posterior, 7);
      FAIL("missing misuse error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::misuse);
    }
  }
  SUBCASE("target geometry is checked") {
    VideoSequence late = random_clip(gcfg.horizon + 1, 8, 8, 1, 30);
    CHECK_THROWS_AS(predict(ps, gcfg, lcfg, ctx, PredictMode::posterior, 7, &late), Error);
    VideoSequence wide = random_clip(gcfg.horizon, 8, 16, 1, 30);
    CHECK_THROWS_AS(predict(ps, gcfg, lcfg, ctx, PredictMode::posterior, 7, &wide), Error);
  }
  SUBCASE("latent width must agree between the two configs") {
    LatentConfig off = lcfg;
    off.d_z = gcfg.d_z + 1;
    try {
      predict(ps, gcfg, off, ctx, PredictMode::prior, 7);
      FAIL("missing config error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::config);
    }
  }
}
