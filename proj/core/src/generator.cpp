#include "framecast/generator.hpp"

#include <string>
#include <utility>

#include "framecast/error.hpp"

namespace framecast {

namespace {

std::string scale_prefix(const std::string& prefix, std::int64_t s) {
  return prefix + "s" + std::to_string(s) + ".";
}

E3DConfig cell_config(const GeneratorConfig& cfg) {
  E3DConfig e;
  e.in_channels = cfg.channels;
  e.channels = cfg.channels;
  e.tau = cfg.tau;
  e.temporal_window = cfg.temporal_window;
  e.kernel = cfg.kernel;
  return e;
}

Tensor gaussian_vector(std::int64_t n, RngStream& rng) {
  Tensor z({n});
  for (std::int64_t i = 0; i < n; ++i) z[i] = rng.normal();
  return z;
}

}  // namespace

void validate(const GeneratorConfig& cfg) {
  if (cfg.n_scales < 1) fail(ErrorKind::config, "generator needs at least one scale");
  if (cfg.in_channels < 1) fail(ErrorKind::config, "generator in_channels must be positive");
  if (cfg.context_len < 1) fail(ErrorKind::config, "context_len must be positive");
  if (cfg.horizon < 0) fail(ErrorKind::config, "horizon must be nonnegative");
  if (cfg.d_z < 1) fail(ErrorKind::config, "d_z must be positive");
  validate(cell_config(cfg));
}

void add_generator_params(ParamSet& ps, const std::string& prefix, const GeneratorConfig& cfg,
                          RngStream* rng) {
  validate(cfg);
  const E3DConfig ecfg = cell_config(cfg);
  const std::int64_t k = cfg.kernel;
  for (std::int64_t s = 0; s < cfg.n_scales; ++s) {
    const std::string sp = scale_prefix(prefix, s);
    ps.create(sp + "embed.w", {cfg.channels, cfg.in_channels + cfg.d_z, k, k},
              Init::fanin_uniform, rng);
    ps.create(sp + "embed.b", {cfg.channels}, Init::zeros, rng);
    add_e3d_cell_params(ps, sp + "cell.", ecfg, rng);
    ps.create(sp + "head.w", {cfg.in_channels, cfg.channels, k, k}, Init::fanin_uniform, rng);
    ps.create(sp + "head.b", {cfg.in_channels}, Init::zeros, rng);
  }
}

GenState init_gen_state(const GeneratorConfig& cfg, std::int64_t height, std::int64_t width) {
  validate(cfg);
  const std::int64_t div = std::int64_t{1} << cfg.n_scales;
  if (height < div || width < div || height % div != 0 || width % div != 0)
    fail(ErrorKind::shape_mismatch, "frame size must be a positive multiple of 2^n_scales");
  const E3DConfig ecfg = cell_config(cfg);
  GenState state;
  state.reserve(static_cast<std::size_t>(cfg.n_scales));
  for (std::int64_t s = 0; s < cfg.n_scales; ++s)
    state.push_back(init_recall_state(ecfg, height >> (cfg.n_scales - s),
                                      width >> (cfg.n_scales - s)));
  return state;
}

Var combine_scales(const Var& coarse, const Var& residual, bool final_scale) {
  const Shape& cs = coarse->value.shape();
  const Shape& rs = residual->value.shape();
  if (cs.size() != 3 || rs.size() != 3 || cs[0] != rs[0] || 2 * cs[1] != rs[1] ||
      2 * cs[2] != rs[2])
    fail(ErrorKind::shape_mismatch, "coarse frame must be exactly half the residual resolution");
  Var out = add(upsample2_bilinear(coarse), residual);
  return final_scale ? clamp(out, 0.0, 1.0) : out;
}

Tensor combine_scales(const Tensor& coarse, const Tensor& residual, bool final_scale) {
  NoGradGuard ng;
  return combine_scales(constant(coarse), constant(residual), final_scale)->value;
}

Var rollout_step(ParamSet& ps, const std::string& prefix, const GeneratorConfig& cfg,
                 GenState& state, const Var& frame, const Var& z, bool emit,
                 std::vector<Var>* scale_frames) {
  const std::int64_t n = cfg.n_scales;
  if (static_cast<std::int64_t>(state.size()) != n)
    fail(ErrorKind::shape_mismatch, "generator state has the wrong scale count");
  std::vector<Var> pyramid(static_cast<std::size_t>(n));
  pyramid[static_cast<std::size_t>(n - 1)] = frame;
  for (std::int64_t s = n - 2; s >= 0; --s)
    pyramid[static_cast<std::size_t>(s)] = avg_pool2(pyramid[static_cast<std::size_t>(s + 1)]);
  if (scale_frames) scale_frames->assign(static_cast<std::size_t>(n), Var{});

  const int p = static_cast<int>(cfg.kernel / 2);
  const E3DConfig ecfg = cell_config(cfg);
  Var emitted;
  for (std::int64_t s = 0; s < n; ++s) {
    const std::string sp = scale_prefix(prefix, s);
    const Var& x = pyramid[static_cast<std::size_t>(s)];
    Var zmap = spatial_broadcast(z, x->value.dim(1), x->value.dim(2));
    Var emb = leaky_relu(conv2d(concat_channels({x, zmap}), ps.require(sp + "embed.w").var(),
                                ps.require(sp + "embed.b").var(), {2, 2}, {p, p}));
    auto [hidden, next] = cell_step(ps, sp + "cell.", ecfg, emb, state[static_cast<std::size_t>(s)]);
    state[static_cast<std::size_t>(s)] = std::move(next);
    if (!emit) continue;
    Var raw = conv2d(upsample2_bilinear(hidden), ps.require(sp + "head.w").var(),
                     ps.require(sp + "head.b").var(), {1, 1}, {p, p});
    emitted = s == 0 ? sigmoid(raw) : combine_scales(emitted, raw, s == n - 1);
    if (scale_frames) (*scale_frames)[static_cast<std::size_t>(s)] = emitted;
  }
  return emitted;
}

std::vector<Var> rollout_frames(ParamSet& ps, const std::string& prefix,
                                const GeneratorConfig& cfg, const VideoSequence& context,
                                const std::vector<Var>& latents,
                                std::vector<std::vector<Var>>* scale_frames) {
  validate(cfg);
  if (context.length() != cfg.context_len)
    fail(ErrorKind::shape_mismatch, "context length does not match the configured window");
  if (context.channels() != cfg.in_channels)
    fail(ErrorKind::shape_mismatch, "context channel count does not match the generator");
  if (static_cast<std::int64_t>(latents.size()) != cfg.horizon)
    fail(ErrorKind::shape_mismatch, "latent count does not match the prediction horizon");
  for (const Var& zv : latents)
    if (zv->value.shape() != Shape{cfg.d_z})
      fail(ErrorKind::shape_mismatch, "latent vector has the wrong width");

  GenState state = init_gen_state(cfg, context.height(), context.width());
  Var zero_z = constant(Tensor({cfg.d_z}));
  for (std::int64_t t = 0; t + 1 < context.length(); ++t)
    rollout_step(ps, prefix, cfg, state, constant(frame_chw(context, t)), zero_z, false);

  if (scale_frames) {
    scale_frames->clear();
    scale_frames->resize(static_cast<std::size_t>(cfg.n_scales));
  }
  std::vector<Var> out;
  out.reserve(latents.size());
  Var prev = constant(frame_chw(context, context.length() - 1));
  std::vector<Var> per_scale;
  for (const Var& zv : latents) {
    Var e = rollout_step(ps, prefix, cfg, state, prev, zv, true,
                         scale_frames ? &per_scale : nullptr);
    if (scale_frames)
      for (std::size_t s = 0; s < per_scale.size(); ++s) (*scale_frames)[s].push_back(per_scale[s]);
    out.push_back(e);
    prev = e;
  }
  return out;
}

VideoSequence rollout(ParamSet& ps, const std::string& prefix, const GeneratorConfig& cfg,
                      const VideoSequence& context, const std::vector<Tensor>& latents) {
  NoGradGuard ng;
  std::vector<Var> zs;
  zs.reserve(latents.size());
  for (const Tensor& z : latents) zs.push_back(constant(z));
  std::vector<Var> frames = rollout_frames(ps, prefix, cfg, context, zs);
  if (frames.empty()) {
    VideoSequence empty;
    empty.id = context.id;
    empty.frames = Tensor({0, context.height(), context.width(), context.channels()});
    return empty;
  }
  std::vector<Tensor> chw;
  chw.reserve(frames.size());
  for (const Var& f : frames) chw.push_back(f->value);
  return sequence_from_chw(chw, context.id);
}

VideoSequence predict(ParamSet& ps, const GeneratorConfig& gcfg, const LatentConfig& lcfg,
                      const VideoSequence& context, PredictMode mode, std::uint64_t seed,
                      const VideoSequence* targets, const std::string& gen_prefix,
                      const std::string& latent_prefix) {
  if (lcfg.d_z != gcfg.d_z)
    fail(ErrorKind::config, "latent width disagrees between generator and encoder");
  NoGradGuard ng;
  std::vector<Tensor> zs;
  zs.reserve(static_cast<std::size_t>(gcfg.horizon));
  if (mode == PredictMode::prior) {
    RngStream rng(derive_seed(seed, "predict.prior"));
    for (std::int64_t j = 0; j < gcfg.horizon; ++j)
      zs.push_back(gaussian_vector(gcfg.d_z, rng));
  } else {
    if (!targets) fail(ErrorKind::misuse, "posterior sampling needs the true future frames");
    if (targets->length() != gcfg.horizon)
      fail(ErrorKind::shape_mismatch, "target length does not match the prediction horizon");
    if (targets->height() != context.height() || targets->width() != context.width() ||
        targets->channels() != context.channels())
      fail(ErrorKind::shape_mismatch, "target frames do not match the context geometry");
    RngStream rng(derive_seed(seed, "predict.posterior"));
    for (std::int64_t j = 0; j < gcfg.horizon; ++j) {
      Tensor prev =
          j == 0 ? frame_chw(context, context.length() - 1) : frame_chw(*targets, j - 1);
      GaussianParams g = encode_pair(ps, latent_prefix, lcfg, prev, frame_chw(*targets, j));
      zs.push_back(sample(g, gaussian_vector(lcfg.d_z, rng)));
    }
  }
  return rollout(ps, gen_prefix, gcfg, context, zs);
}

}  // namespace framecast
