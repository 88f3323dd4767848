#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "framecast/adversary.hpp"
#include "framecast/losses.hpp"
#include "framecast/rng.hpp"

using namespace framecast;
namespace fs = std::filesystem;

namespace {

std::vector<Tensor> sprite_frames(int64_t count, uint64_t seed) {
  MovingSpriteSpec spec;
  spec.canvas_h = 32;
  spec.canvas_w = 32;
  spec.n_sprites = 1;
  spec.speed = 2.0;
  spec.seed = seed;
  Tensor blob({7, 7});
  for (int64_t i = 0; i < 7; ++i)
    for (int64_t j = 0; j < 7; ++j) {
      double dy = i - 3.0, dx = j - 3.0;
      blob.at({i, j}) = std::max(0.0, 1.0 - std::sqrt(dy * dy + dx * dx) / 3.5);
    }
  spec.glyphs = {blob};
  VideoSequence seq = generate_moving_sprites(spec, count);
  std::vector<Tensor> frames;
  for (int64_t t = 0; t < seq.length(); ++t) frames.push_back(frame_chw(seq, t));
  return frames;
}

AutoencoderConfig small_ae_cfg() {
  AutoencoderConfig cfg;
  cfg.height = 32;
  cfg.width = 32;
  cfg.features = 6;
  cfg.manifold_dim = 8;
  return cfg;
}

Tensor random_map(Shape shape, RngStream& rng) {
  Tensor t(shape);
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform();
  return t;
}

}  // namespace

TEST_CASE("autoencoder pretraining reduces held-out error and freezes") {
  auto frames = sprite_frames(40, 7);
  Autoencoder ae = pretrain_autoencoder(frames, small_ae_cfg(), 150, 11);
  CHECK(ae.frozen);
  CHECK(ae.report.heldout_after <= ae.report.heldout_before);
  CHECK(ae.report.steps == 150);

  // encoder output dimension honours the configured manifold width
  NoGradGuard ng;
  Var feat = encode_frame(ae, constant(frames[0]));
  CHECK(feat->value.shape() == Shape{8});

  CHECK_THROWS_AS(pretrain_autoencoder({}, small_ae_cfg(), 10, 1), Error);
}

TEST_CASE("frozen encoder digest survives optimization attempts") {
  auto frames = sprite_frames(12, 3);
  Autoencoder ae = pretrain_autoencoder(frames, small_ae_cfg(), 20, 5);
  const uint64_t before = ae.digest();

  // an optimizer pointed straight at frozen parameters must not move them
  Adam opt(AdamConfig{});
  std::vector<Parameter*> ptrs;
  for (auto& p : ae.params.all()) ptrs.push_back(p.get());
  for (int s = 0; s < 10; ++s) {
    ae.params.zero_grad();
    Var feat = encode_frame(ae, constant(frames[s % frames.size()]));
    backward(sum(feat));
    ae.params.harvest();
    opt.step(ptrs);
  }
  CHECK(ae.digest() == before);

  // and gradients do not flow into frozen leaves at all
  ae.params.zero_grad();
  Var feat = encode_frame(ae, constant(frames[0]));
  backward(sum(feat));
  ae.params.harvest();
  for (auto& p : ae.params.all()) CHECK(p->grad().abs_max() == 0.0);
}

TEST_CASE("manifold_map requires freezing and is deterministic per frame") {
  auto frames = sprite_frames(6, 9);
  Autoencoder raw = make_autoencoder(small_ae_cfg(), 2);
  VideoSequence seq;
  seq.frames = Tensor({3, 32, 32, 1});
  for (int64_t t = 0; t < 3; ++t)
    for (int64_t i = 0; i < 32; ++i)
      for (int64_t j = 0; j < 32; ++j) seq.frames.at({t, i, j, 0}) = frames[t].at({0, i, j});

  try {
    manifold_map(raw, seq);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::misuse);
  }

  Autoencoder ae = pretrain_autoencoder(frames, small_ae_cfg(), 15, 5);
  Tensor feats = manifold_map(ae, seq);
  CHECK(feats.shape() == Shape{3, 8});
  Tensor again = manifold_map(ae, seq);
  for (int64_t i = 0; i < feats.size(); ++i) CHECK(feats.data()[i] == again.data()[i]);

  // identical frames map to identical features
  VideoSequence twice;
  twice.frames = Tensor({2, 32, 32, 1});
  for (int64_t t = 0; t < 2; ++t)
    for (int64_t i = 0; i < 32; ++i)
      for (int64_t j = 0; j < 32; ++j) twice.frames.at({t, i, j, 0}) = frames[0].at({0, i, j});
  Tensor pair = manifold_map(ae, twice);
  for (int64_t j = 0; j < 8; ++j) CHECK(pair.at({0, j}) == pair.at({1, j}));
}

TEST_CASE("autoencoder checkpoint round trip") {
  auto frames = sprite_frames(10, 21);
  Autoencoder ae = pretrain_autoencoder(frames, small_ae_cfg(), 25, 13);
  fs::path dir = fs::temp_directory_path() / "fc_ae_test";
  fs::create_directories(dir);
  auto path = (dir / "ae.bin").string();
  save_autoencoder(ae, path);
  Autoencoder back = load_autoencoder(path);
  CHECK(back.frozen);
  CHECK(back.digest() == ae.digest());
  CHECK(back.cfg.manifold_dim == 8);
  CHECK(back.report.heldout_after == doctest::Approx(ae.report.heldout_after).epsilon(1e-12));

  NoGradGuard ng;
  Var a = encode_frame(ae, constant(frames[0]));
  Var b = encode_frame(back, constant(frames[0]));
  for (int64_t j = 0; j < 8; ++j) CHECK(a->value.data()[j] == b->value.data()[j]);
  fs::remove_all(dir);
}

TEST_CASE("zero-parameter heads sit at exactly one half") {
  VideoHeadConfig vcfg;
  ManifoldHeadConfig mcfg;
  mcfg.manifold_dim = 8;
  RngStream rng(31);
  ParamSet ps;
  add_video_head_params(ps, "d", vcfg, &rng);
  add_manifold_head_params(ps, "dm", mcfg, &rng);
  for (auto& p : ps.all()) p->value().fill(0.0);

  VideoSequence clip;
  clip.frames = random_map({3, 8, 8, 1}, rng);
  CHECK(discriminate_video(ps, "d", vcfg, clip) == 0.5);

  Tensor feats = random_map({4, 8}, rng);
  CHECK(discriminate_features(ps, "dm", mcfg, feats) == 0.5);
}

TEST_CASE("scores stay strictly inside (0,1) across random trials") {
  VideoHeadConfig vcfg;
  ManifoldHeadConfig mcfg;
  mcfg.manifold_dim = 6;
  RngStream rng(37);
  ParamSet ps;
  add_video_head_params(ps, "d", vcfg, &rng);
  add_manifold_head_params(ps, "dm", mcfg, &rng);

  for (int trial = 0; trial < 10000; ++trial) {
    if (trial % 2 == 0) {
      VideoSequence clip;
      clip.frames = random_map({2, 8, 8, 1}, rng);
      double s = discriminate_video(ps, "d", vcfg, clip);
      CHECK(s > 0.0);
      CHECK(s < 1.0);
    } else {
      double s = discriminate_features(ps, "dm", mcfg, random_map({3, 6}, rng));
      CHECK(s > 0.0);
      CHECK(s < 1.0);
    }
  }
}

TEST_CASE("a batch of clips yields one score each and single-frame clips work") {
  VideoHeadConfig vcfg;
  RngStream rng(41);
  ParamSet ps;
  add_video_head_params(ps, "d", vcfg, &rng);
  std::vector<double> scores;
  for (int b = 0; b < 5; ++b) {
    VideoSequence clip;
    clip.frames = random_map({4, 8, 8, 1}, rng);
    scores.push_back(discriminate_video(ps, "d", vcfg, clip));
  }
  CHECK(scores.size() == 5);

  VideoSequence single;
  single.frames = random_map({1, 8, 8, 1}, rng);
  double s = discriminate_video(ps, "d", vcfg, single);
  CHECK(s > 0.0);
  CHECK(s < 1.0);
}

TEST_CASE("head parameters are independent across heads") {
  VideoHeadConfig vcfg;
  ManifoldHeadConfig mcfg;
  mcfg.manifold_dim = 6;
  RngStream rng(43);
  ParamSet d, dvae, dm1, dm2;
  add_video_head_params(d, "d", vcfg, &rng);
  add_video_head_params(dvae, "dvae", vcfg, &rng);
  add_manifold_head_params(dm1, "dm1", mcfg, &rng);
  add_manifold_head_params(dm2, "dm2", mcfg, &rng);
  uint64_t digests[4] = {d.value_digest(), dvae.value_digest(), dm1.value_digest(),
                         dm2.value_digest()};

  // update only d
  VideoSequence clip;
  clip.frames = random_map({3, 8, 8, 1}, rng);
  std::vector<Var> frames;
  for (int64_t t = 0; t < 3; ++t) frames.push_back(constant(frame_chw(clip, t)));
  d.zero_grad();
  backward(discriminate_video(d, "d", vcfg, frames));
  d.harvest();
  Adam opt(AdamConfig{});
  std::vector<Parameter*> ptrs;
  for (auto& p : d.all()) ptrs.push_back(p.get());
  opt.step(ptrs);

  CHECK(d.value_digest() != digests[0]);
  CHECK(dvae.value_digest() == digests[1]);
  CHECK(dm1.value_digest() == digests[2]);
  CHECK(dm2.value_digest() == digests[3]);
}

TEST_CASE("video head gradients match finite differences") {
  VideoHeadConfig vcfg;
  vcfg.features = 4;
  RngStream rng(47);
  ParamSet ps;
  add_video_head_params(ps, "d", vcfg, &rng);
  std::vector<Tensor> plain;
  for (int t = 0; t < 3; ++t) plain.push_back(random_map({1, 8, 8}, rng));

  auto forward = [&]() {
    std::vector<Var> frames;
    for (const auto& f : plain) frames.push_back(constant(f));
    return discriminate_video(ps, "d", vcfg, frames);
  };

  ps.zero_grad();
  backward(forward());
  ps.harvest();

  const double h = 1e-5;
  RngStream pick(3);
  for (const auto& p : ps.all()) {
    for (int trial = 0; trial < 6; ++trial) {
      int64_t idx = static_cast<int64_t>(pick.below(static_cast<uint64_t>(p->value().size())));
      double keep = p->value().data()[idx];
      NoGradGuard ng;
      p->value().data()[idx] = keep + h;
      double up = forward()->value.item();
      p->value().data()[idx] = keep - h;
      double dn = forward()->value.item();
      p->value().data()[idx] = keep;
      double fd = (up - dn) / (2 * h);
      double got = p->grad().data()[idx];
      CHECK(std::abs(got - fd) / std::max({1.0, std::abs(fd), std::abs(got)}) < 1e-3);
    }
  }
}

TEST_CASE("objectives compose with heads end to end") {
  // d_objective fed from real heads sits below the 0.5 stationary value
  VideoHeadConfig vcfg;
  ManifoldHeadConfig mcfg;
  mcfg.manifold_dim = 8;
  RngStream rng(53);
  ParamSet heads;
  add_video_head_params(heads, "d", vcfg, &rng);
  add_manifold_head_params(heads, "dm", mcfg, &rng);
  auto frames = sprite_frames(8, 71);
  Autoencoder ae = pretrain_autoencoder(frames, small_ae_cfg(), 10, 3);

  VideoSequence real, fake;
  real.frames = Tensor({4, 32, 32, 1});
  fake.frames = Tensor({4, 32, 32, 1});
  for (int64_t t = 0; t < 4; ++t)
    for (int64_t i = 0; i < 32; ++i)
      for (int64_t j = 0; j < 32; ++j) {
        real.frames.at({t, i, j, 0}) = frames[t].at({0, i, j});
        fake.frames.at({t, i, j, 0}) = rng.uniform();
      }

  double rd = discriminate_video(heads, "d", vcfg, real);
  double fd = discriminate_video(heads, "d", vcfg, fake);
  double rm = discriminate_features(heads, "dm", mcfg, manifold_map(ae, real));
  double fm = discriminate_features(heads, "dm", mcfg, manifold_map(ae, fake));
  double obj = d_objective(rd, rm, fd, fm);
  CHECK(std::isfinite(obj));
  CHECK(obj <= 4.0 * std::log(0.5) + 1e-9 + 4.0);  // loose sanity: finite, bounded above
  CHECK(g_objective(fd, fm) > 0.0);
}
