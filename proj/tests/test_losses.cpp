#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "framecast/losses.hpp"
#include "framecast/rng.hpp"

using namespace framecast;

namespace {

VideoSequence seq_filled(int64_t t, int64_t h, int64_t w, double value) {
  VideoSequence s;
  s.frames = Tensor({t, h, w, 1});
  s.frames.fill(value);
  return s;
}

Tensor vec1(double v) {
  Tensor t({1});
  t.data()[0] = v;
  return t;
}

}  // namespace

TEST_CASE("l1 reference points under the mean convention") {
  auto a = seq_filled(2, 8, 8, 0.3);
  CHECK(l1_loss(a, a) == 0.0);

  auto b = seq_filled(2, 8, 8, 0.4);
  CHECK(l1_loss(a, b) == doctest::Approx(0.1).epsilon(1e-12));

  auto c = seq_filled(2, 8, 8, 0.3);
  c.frames.at({1, 3, 3, 0}) = 1.3;  // one element differs by 1.0 out of N=128
  CHECK(l1_loss(a, c) == doctest::Approx(1.0 / 128.0).epsilon(1e-12));

  CHECK(l1_loss(a, b, L1Convention::sum) ==
        doctest::Approx(0.1 * 128.0).epsilon(1e-9));

  auto d = seq_filled(3, 8, 8, 0.0);
  CHECK_THROWS_AS(l1_loss(a, d), Error);
}

TEST_CASE("taped l1 agrees with the plain form and has sign gradients") {
  RngStream rng(3);
  VideoSequence target;
  target.frames = Tensor({2, 6, 6, 1});
  for (int64_t i = 0; i < target.frames.size(); ++i) target.frames.data()[i] = rng.uniform();
  std::vector<Var> pred;
  std::vector<Tensor> pred_plain;
  VideoSequence pred_seq;
  pred_seq.frames = Tensor({2, 6, 6, 1});
  for (int64_t t = 0; t < 2; ++t) {
    Tensor f({1, 6, 6});
    for (int64_t i = 0; i < f.size(); ++i) f.data()[i] = rng.uniform();
    pred.push_back(leaf(f, true));
    for (int64_t i = 0; i < 6; ++i)
      for (int64_t j = 0; j < 6; ++j) pred_seq.frames.at({t, i, j, 0}) = f.at({0, i, j});
  }
  Var loss = l1_loss(pred, target);
  CHECK(loss->value.item() == doctest::Approx(l1_loss(pred_seq, target)).epsilon(1e-12));
  backward(loss);
  const double n = 72.0;
  for (int64_t t = 0; t < 2; ++t)
    for (int64_t i = 0; i < 6; ++i)
      for (int64_t j = 0; j < 6; ++j) {
        double diff = pred[t]->value.at({0, i, j}) - target.frames.at({t, i, j, 0});
        CHECK(pred[t]->grad.at({0, i, j}) ==
              doctest::Approx((diff > 0 ? 1.0 : -1.0) / n).epsilon(1e-12));
      }

  // sum convention only rescales; the argmin (pred == target) is shared
  std::vector<Var> exact;
  for (int64_t t = 0; t < 2; ++t) exact.push_back(constant(frame_chw(target, t)));
  CHECK(l1_loss(exact, target)->value.item() == 0.0);
  CHECK(l1_loss(exact, target, L1Convention::sum)->value.item() == 0.0);
}

TEST_CASE("kl_loss means over timesteps") {
  std::vector<GaussianParams> zero(3, standard_prior(4));
  CHECK(kl_loss(zero) == 0.0);

  GaussianParams half{vec1(1.0), vec1(0.0)};  // KL = 0.5
  CHECK(kl_loss({half, half}) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(kl_loss({half}) == doctest::Approx(kl_to_prior(half)).epsilon(1e-12));

  Var m = leaf(vec1(1.0), true), lv = leaf(vec1(0.0), true);
  Var taped = kl_loss(std::vector<GaussianVars>{{m, lv}, {m, lv}});
  CHECK(taped->value.item() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(kl_loss(std::vector<GaussianParams>{}), Error);
}

TEST_CASE("d_objective reference values and clamping") {
  double at_half = d_objective(0.5, 0.5, 0.5, 0.5);
  CHECK(at_half == doctest::Approx(4.0 * std::log(0.5)).epsilon(1e-12));
  CHECK(at_half == doctest::Approx(-2.772588722239781).epsilon(1e-12));

  double eps = 1e-7;
  double ideal = d_objective(1.0 - eps, 1.0 - eps, eps, eps);
  CHECK(ideal == doctest::Approx(4.0 * std::log(1.0 - eps)).epsilon(1e-9));
  CHECK(ideal > -1e-5);

  // out-of-range scores are clamped, never -inf
  CHECK(std::isfinite(d_objective(0.0, 1.0, 0.0, 1.0)));
  CHECK(d_objective(0.0, 0.5, 0.5, 0.5) ==
        doctest::Approx(std::log(eps) + 3 * std::log(0.5)).epsilon(1e-9));
}

TEST_CASE("indistinguishable inputs cap d_objective at the 0.5 stationary point") {
  double best = 4.0 * std::log(0.5);
  for (double s = 0.05; s < 0.999; s += 0.05) {
    double v = d_objective(s, s, s, s);
    CHECK(v <= best + 1e-12);
    if (std::abs(s - 0.5) > 0.01) CHECK(v < best);
  }
}

TEST_CASE("g_objective rewards fooling the heads") {
  CHECK(g_objective(0.5, 0.5) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
  CHECK(g_objective(0.9, 0.9) < g_objective(0.5, 0.5));
  CHECK(std::isfinite(g_objective(0.0, 0.0)));
}

TEST_CASE("taped objectives match plain ones and their finite differences") {
  RngStream rng(77);
  for (int rep = 0; rep < 5; ++rep) {
    double vals[4];
    for (auto& v : vals) v = rng.uniform(0.05, 0.95);
    Var s0 = leaf(vec1(vals[0]), true), s1 = leaf(vec1(vals[1]), true);
    Var s2 = leaf(vec1(vals[2]), true), s3 = leaf(vec1(vals[3]), true);
    Var d = d_objective(s0, s1, s2, s3);
    CHECK(d->value.item() ==
          doctest::Approx(d_objective(vals[0], vals[1], vals[2], vals[3])).epsilon(1e-12));
    backward(d);
    const double h = 1e-6;
    Var leaves[4] = {s0, s1, s2, s3};
    for (int i = 0; i < 4; ++i) {
      double orig = vals[i];
      double args[4];
      std::copy(vals, vals + 4, args);
      args[i] = orig + h;
      double up = d_objective(args[0], args[1], args[2], args[3]);
      args[i] = orig - h;
      double dn = d_objective(args[0], args[1], args[2], args[3]);
      double fd = (up - dn) / (2 * h);
      double got = leaves[i]->grad.item();
      CHECK(std::abs(got - fd) / std::max({1.0, std::abs(fd), std::abs(got)}) < 1e-4);
    }

    Var f0 = leaf(vec1(vals[2]), true), f1 = leaf(vec1(vals[3]), true);
    Var g = g_objective(f0, f1);
    CHECK(g->value.item() == doctest::Approx(g_objective(vals[2], vals[3])).epsilon(1e-12));
    backward(g);
    double fd0 = (g_objective(vals[2] + h, vals[3]) - g_objective(vals[2] - h, vals[3])) / (2 * h);
    CHECK(std::abs(f0->grad.item() - fd0) / std::max(1.0, std::abs(fd0)) < 1e-4);
  }
}

TEST_CASE("combined_loss applies the default weights") {
  auto b = combined_loss(1.0, 1.0, 1.0, 1.0);
  CHECK(b.combined == doctest::Approx(1.05).epsilon(1e-12));
  CHECK(combined_loss(0.0, 0.0, 0.0, 0.0).combined == 0.0);
  CHECK(combined_loss(2.0, 0.0, 0.0, 0.0).combined == doctest::Approx(0.5).epsilon(1e-12));

  // breakdown invariant
  CHECK(std::abs(b.combined - (b.weights.l1 * b.l1 + b.weights.kl * b.kl +
                               b.weights.mggan1 * b.mggan1 + b.weights.mggan2 * b.mggan2)) <
        1e-6);

  LossWeights w;
  w.kl = -0.1;
  CHECK_THROWS_AS(combined_loss(1, 1, 1, 1, w), Error);

  LossWeights custom{1.0, 2.0, 3.0, 4.0};
  CHECK(combined_loss(1, 1, 1, 1, custom).combined == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("combined_loss is positively homogeneous") {
  RngStream rng(13);
  for (int rep = 0; rep < 50; ++rep) {
    double p[4];
    for (auto& v : p) v = rng.uniform(0.0, 5.0);
    double a = rng.uniform(0.0, 3.0);
    double lhs = combined_loss(a * p[0], a * p[1], a * p[2], a * p[3]).combined;
    double rhs = a * combined_loss(p[0], p[1], p[2], p[3]).combined;
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
  }
}

TEST_CASE("taped combined matches the plain breakdown") {
  Var l1 = leaf(vec1(0.8), true), kl = leaf(vec1(2.0), true);
  Var m1 = leaf(vec1(-1.4), true), m2 = leaf(vec1(0.6), true);
  Var c = combined_loss(l1, kl, m1, m2);
  auto plain = combined_loss(0.8, 2.0, -1.4, 0.6);
  CHECK(c->value.item() == doctest::Approx(plain.combined).epsilon(1e-12));
  backward(c);
  CHECK(l1->grad.item() == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(kl->grad.item() == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(m1->grad.item() == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(m2->grad.item() == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("csv serialization carries the five loss columns") {
  CHECK(loss_csv_header() == "step,l1,kl,mggan1,mggan2,combined");
  auto b = combined_loss(0.5, 0.25, -2.0, 1.5);
  auto row = loss_csv_row(42, b);
  CHECK(row.rfind("42,", 0) == 0);
  CHECK(row.find("0.5") != std::string::npos);
  CHECK(row.find("-2") != std::string::npos);
  // parse back: five commas
  CHECK(std::count(row.begin(), row.end(), ',') == 5);
}

TEST_CASE("head-level mggan_loss hits the zero-parameter reference point") {
  VideoHeadConfig vcfg;
  ManifoldHeadConfig mcfg;
  mcfg.manifold_dim = 8;
  RngStream rng(61);
  ParamSet d, dm;
  add_video_head_params(d, "d", vcfg, &rng);
  add_manifold_head_params(dm, "dm", mcfg, &rng);
  for (auto& p : d.all()) p->value().fill(0.0);
  for (auto& p : dm.all()) p->value().fill(0.0);

  AutoencoderConfig acfg;
  acfg.height = 32;
  acfg.width = 32;
  acfg.features = 4;
  acfg.manifold_dim = 8;
  std::vector<Tensor> frames;
  for (int i = 0; i < 4; ++i) {
    Tensor f({1, 32, 32});
    for (int64_t j = 0; j < f.size(); ++j) f.data()[j] = rng.uniform();
    frames.push_back(f);
  }
  Autoencoder ae = pretrain_autoencoder(frames, acfg, 3, 5);

  VideoSequence real, fake;
  real.frames = Tensor({3, 32, 32, 1});
  fake.frames = Tensor({3, 32, 32, 1});
  for (int64_t i = 0; i < real.frames.size(); ++i) {
    real.frames.data()[i] = rng.uniform();
    fake.frames.data()[i] = rng.uniform();
  }
  auto [d_obj, g_obj] = mggan_loss(d, "d", vcfg, dm, "dm", mcfg, ae, real, fake);
  CHECK(d_obj == doctest::Approx(4.0 * std::log(0.5)).epsilon(1e-12));
  CHECK(g_obj == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));

  VideoSequence bad;
  bad.frames = Tensor({2, 32, 32, 1});
  CHECK_THROWS_AS(mggan_loss(d, "d", vcfg, dm, "dm", mcfg, ae, real, bad), Error);
}
