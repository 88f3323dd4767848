#include "framecast/latent.hpp"

#include <cmath>

#include "framecast/error.hpp"

namespace framecast {

namespace {
constexpr double kLogvarLimit = 10.0;
}

void add_latent_encoder_params(ParamSet& ps, const std::string& prefix, const LatentConfig& cfg,
                               RngStream* rng) {
  if (cfg.d_z < 1 || cfg.in_channels < 1 || cfg.features < 1)
    fail(ErrorKind::config, "latent config dimensions must be positive");
  const int64_t f = cfg.features;
  ps.create(prefix + ".enc1.w", {f, 2 * cfg.in_channels, 3, 3}, Init::fanin_uniform, rng);
  ps.create(prefix + ".enc1.b", {f}, Init::zeros);
  ps.create(prefix + ".enc2.w", {2 * f, f, 3, 3}, Init::fanin_uniform, rng);
  ps.create(prefix + ".enc2.b", {2 * f}, Init::zeros);
  ps.create(prefix + ".enc3.w", {2 * f, 2 * f, 3, 3}, Init::fanin_uniform, rng);
  ps.create(prefix + ".enc3.b", {2 * f}, Init::zeros);
  ps.create(prefix + ".head.w", {2 * cfg.d_z, 2 * f}, Init::fanin_uniform, rng);
  ps.create(prefix + ".head.b", {2 * cfg.d_z}, Init::zeros);
}

GaussianVars encode_pair(ParamSet& ps, const std::string& prefix, const LatentConfig& cfg,
                         const Var& frame_a, const Var& frame_b) {
  require_same_shape(frame_a->value, frame_b->value, "encoded frame pair");
  auto w = [&](const std::string& n) { return ps.require(prefix + "." + n).var(); };
  Var x = concat_channels({frame_a, frame_b});
  Var h = leaky_relu(conv2d(x, w("enc1.w"), w("enc1.b"), {2, 2}, {1, 1}));
  h = leaky_relu(conv2d(h, w("enc2.w"), w("enc2.b"), {2, 2}, {1, 1}));
  h = leaky_relu(conv2d(h, w("enc3.w"), w("enc3.b"), {2, 2}, {1, 1}));
  Var o = linear(global_mean_channels(h), w("head.w"), w("head.b"));
  GaussianVars g;
  g.mean = slice_channels(o, 0, cfg.d_z);
  g.logvar = clamp(slice_channels(o, cfg.d_z, cfg.d_z), -kLogvarLimit, kLogvarLimit);
  return g;
}

GaussianParams encode_pair(ParamSet& ps, const std::string& prefix, const LatentConfig& cfg,
                           const Tensor& frame_a, const Tensor& frame_b) {
  NoGradGuard ng;
  GaussianVars g = encode_pair(ps, prefix, cfg, constant(frame_a), constant(frame_b));
  return {g.mean->value, g.logvar->value};
}

Var sample(const GaussianVars& g, const Tensor& noise) {
  require_same_shape(g.mean->value, noise, "latent noise");
  return add(g.mean, mul(exp(scale(g.logvar, 0.5)), constant(noise)));
}

Tensor sample(const GaussianParams& g, const Tensor& noise) {
  require_same_shape(g.mean, noise, "latent noise");
  Tensor z(g.mean.shape());
  for (int64_t i = 0; i < z.size(); ++i)
    z.data()[i] = g.mean.data()[i] + std::exp(0.5 * g.logvar.data()[i]) * noise.data()[i];
  return z;
}

Var kl_to_prior(const GaussianVars& g) {
  // 0.5 * sum(mu^2 + e^lv - 1 - lv)
  Var t = add(mul(g.mean, g.mean), framecast::exp(g.logvar));
  return scale(sum(sub(t, affine(g.logvar, 1.0, 1.0))), 0.5);
}

double kl_to_prior(const GaussianParams& g) {
  require_same_shape(g.mean, g.logvar, "gaussian params");
  double acc = 0;
  for (int64_t i = 0; i < g.mean.size(); ++i) {
    double mu = g.mean.data()[i], lv = g.logvar.data()[i];
    acc += mu * mu + std::exp(lv) - 1.0 - lv;
  }
  return 0.5 * acc;
}

GaussianParams standard_prior(int64_t d_z) {
  return {Tensor::zeros({d_z}), Tensor::zeros({d_z})};
}

}  // namespace framecast
