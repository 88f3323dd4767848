#include "framecast/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <utility>

#include <nlohmann/json.hpp>

#include "framecast/checkpoint.hpp"
#include "framecast/error.hpp"

namespace framecast {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<Parameter*> raw_params(ParamSet& ps) {
  std::vector<Parameter*> out;
  out.reserve(static_cast<std::size_t>(ps.count()));
  for (const auto& p : ps.all()) out.push_back(p.get());
  return out;
}

Tensor gaussian_vec(std::int64_t n, RngStream& rng) {
  Tensor z({n});
  for (std::int64_t i = 0; i < n; ++i) z[i] = rng.normal();
  return z;
}

std::vector<Var> clip_frames(const VideoSequence& seq) {
  std::vector<Var> out;
  out.reserve(static_cast<std::size_t>(seq.length()));
  for (std::int64_t t = 0; t < seq.length(); ++t) out.push_back(constant(frame_chw(seq, t)));
  return out;
}

// --- config JSON ---

std::int64_t as_count(const json& v, const std::string& field) {
  if (!v.is_number_integer()) fail(ErrorKind::config, field + " must be an integer");
  return v.get<std::int64_t>();
}

std::uint64_t as_seed(const json& v, const std::string& field) {
  if (!v.is_number_integer() && !v.is_number_unsigned())
    fail(ErrorKind::config, field + " must be an integer");
  if (v.is_number_integer() && v.get<std::int64_t>() < 0 && !v.is_number_unsigned())
    fail(ErrorKind::config, field + " must be nonnegative");
  return v.get<std::uint64_t>();
}

double as_real(const json& v, const std::string& field) {
  if (!v.is_number()) fail(ErrorKind::config, field + " must be a number");
  return v.get<double>();
}

std::string as_str(const json& v, const std::string& field) {
  if (!v.is_string()) fail(ErrorKind::config, field + " must be a string");
  return v.get<std::string>();
}

bool as_flag(const json& v, const std::string& field) {
  if (!v.is_boolean()) fail(ErrorKind::config, field + " must be a boolean");
  return v.get<bool>();
}

void expect_object(const json& j, const std::string& scope) {
  if (!j.is_object()) fail(ErrorKind::config, scope + " must be an object");
}

void read_gen(const json& j, GeneratorConfig& g) {
  expect_object(j, "gen");
  for (const auto& [key, v] : j.items()) {
    const std::string f = "gen." + key;
    if (key == "n_scales") g.n_scales = as_count(v, f);
    else if (key == "channels") g.channels = as_count(v, f);
    else if (key == "in_channels") g.in_channels = as_count(v, f);
    else if (key == "context_len") g.context_len = as_count(v, f);
    else if (key == "horizon") g.horizon = as_count(v, f);
    else if (key == "d_z") g.d_z = as_count(v, f);
    else if (key == "tau") g.tau = as_count(v, f);
    else if (key == "temporal_window") g.temporal_window = as_count(v, f);
    else if (key == "kernel") g.kernel = as_count(v, f);
    else fail(ErrorKind::config, f + " is not a recognized field");
  }
}

void read_latent(const json& j, LatentConfig& l) {
  expect_object(j, "latent");
  for (const auto& [key, v] : j.items()) {
    const std::string f = "latent." + key;
    if (key == "d_z") l.d_z = as_count(v, f);
    else if (key == "in_channels") l.in_channels = as_count(v, f);
    else if (key == "features") l.features = as_count(v, f);
    else fail(ErrorKind::config, f + " is not a recognized field");
  }
}

void read_ae(const json& j, AutoencoderConfig& a) {
  expect_object(j, "ae");
  for (const auto& [key, v] : j.items()) {
    const std::string f = "ae." + key;
    if (key == "in_channels") a.in_channels = as_count(v, f);
    else if (key == "height") a.height = as_count(v, f);
    else if (key == "width") a.width = as_count(v, f);
    else if (key == "features") a.features = as_count(v, f);
    else if (key == "manifold_dim") a.manifold_dim = as_count(v, f);
    else fail(ErrorKind::config, f + " is not a recognized field");
  }
}

void read_video_head(const json& j, VideoHeadConfig& h) {
  expect_object(j, "video_head");
  for (const auto& [key, v] : j.items()) {
    const std::string f = "video_head." + key;
    if (key == "in_channels") h.in_channels = as_count(v, f);
    else if (key == "features") h.features = as_count(v, f);
    else fail(ErrorKind::config, f + " is not a recognized field");
  }
}

void read_manifold_head(const json& j, ManifoldHeadConfig& h) {
  expect_object(j, "manifold_head");
  for (const auto& [key, v] : j.items()) {
    const std::string f = "manifold_head." + key;
    if (key == "manifold_dim") h.manifold_dim = as_count(v, f);
    else if (key == "hidden") h.hidden = as_count(v, f);
    else fail(ErrorKind::config, f + " is not a recognized field");
  }
}

void read_weights(const json& j, LossWeights& w) {
  expect_object(j, "weights");
  for (const auto& [key, v] : j.items()) {
    const std::string f = "weights." + key;
    if (key == "l1") w.l1 = as_real(v, f);
    else if (key == "kl") w.kl = as_real(v, f);
    else if (key == "mggan1") w.mggan1 = as_real(v, f);
    else if (key == "mggan2") w.mggan2 = as_real(v, f);
    else fail(ErrorKind::config, f + " is not a recognized field");
  }
}

std::vector<Tensor> read_glyphs(const json& v) {
  if (!v.is_array()) fail(ErrorKind::config, "data.glyphs must be an array");
  std::vector<Tensor> out;
  for (const auto& e : v) {
    if (!e.is_object() || !e.contains("h") || !e.contains("w") || !e.contains("data"))
      fail(ErrorKind::config, "data.glyphs entries need h, w, and data");
    const std::int64_t h = as_count(e["h"], "data.glyphs.h");
    const std::int64_t w = as_count(e["w"], "data.glyphs.w");
    const json& d = e["data"];
    if (h < 1 || w < 1 || !d.is_array() ||
        d.size() != static_cast<std::size_t>(h) * static_cast<std::size_t>(w))
      fail(ErrorKind::config, "data.glyphs entry does not describe an h x w stamp");
    Tensor g({h, w});
    std::int64_t i = 0;
    for (const auto& x : d) g[i++] = as_real(x, "data.glyphs.data");
    out.push_back(std::move(g));
  }
  return out;
}

void read_data(const json& j, MovingSpriteSpec& s) {
  expect_object(j, "data");
  for (const auto& [key, v] : j.items()) {
    const std::string f = "data." + key;
    if (key == "canvas_h") s.canvas_h = as_count(v, f);
    else if (key == "canvas_w") s.canvas_w = as_count(v, f);
    else if (key == "n_sprites") s.n_sprites = static_cast<int>(as_count(v, f));
    else if (key == "speed") s.speed = as_real(v, f);
    else if (key == "seed") s.seed = as_seed(v, f);
    else if (key == "mode") s.mode = as_str(v, f);
    else if (key == "hold") s.hold = as_count(v, f);
    else if (key == "glyphs") s.glyphs = read_glyphs(v);
    else fail(ErrorKind::config, f + " is not a recognized field");
  }
}

json gen_to_json(const GeneratorConfig& g) {
  return {{"n_scales", g.n_scales},   {"channels", g.channels},
          {"in_channels", g.in_channels}, {"context_len", g.context_len},
          {"horizon", g.horizon},     {"d_z", g.d_z},
          {"tau", g.tau},             {"temporal_window", g.temporal_window},
          {"kernel", g.kernel}};
}

json config_to_json_obj(const ModelConfig& c) {
  json j;
  j["gen"] = gen_to_json(c.gen);
  j["latent"] = {{"d_z", c.latent.d_z},
                 {"in_channels", c.latent.in_channels},
                 {"features", c.latent.features}};
  j["ae"] = {{"in_channels", c.ae.in_channels},
             {"height", c.ae.height},
             {"width", c.ae.width},
             {"features", c.ae.features},
             {"manifold_dim", c.ae.manifold_dim}};
  j["video_head"] = {{"in_channels", c.video_head.in_channels},
                     {"features", c.video_head.features}};
  j["manifold_head"] = {{"manifold_dim", c.manifold_head.manifold_dim},
                        {"hidden", c.manifold_head.hidden}};
  j["weights"] = {{"l1", c.weights.l1},
                  {"kl", c.weights.kl},
                  {"mggan1", c.weights.mggan1},
                  {"mggan2", c.weights.mggan2}};
  json glyphs = json::array();
  for (const Tensor& g : c.data.glyphs)
    glyphs.push_back({{"h", g.dim(0)},
                      {"w", g.dim(1)},
                      {"data", std::vector<double>(g.data(), g.data() + g.size())}});
  j["data"] = {{"canvas_h", c.data.canvas_h}, {"canvas_w", c.data.canvas_w},
               {"n_sprites", c.data.n_sprites}, {"speed", c.data.speed},
               {"seed", c.data.seed},        {"mode", c.data.mode},
               {"hold", c.data.hold},        {"glyphs", std::move(glyphs)}};
  j["l1_convention"] = c.l1_convention == L1Convention::mean ? "mean" : "sum";
  j["lr_gen"] = c.lr_gen;
  j["lr_disc"] = c.lr_disc;
  j["batch_size"] = c.batch_size;
  j["steps"] = c.steps;
  j["ae_pretrain_steps"] = c.ae_pretrain_steps;
  j["checkpoint_every"] = c.checkpoint_every;
  j["val_every"] = c.val_every;
  j["val_windows"] = c.val_windows;
  j["train_sequences"] = c.train_sequences;
  j["sequence_len"] = c.sequence_len;
  j["window_stride"] = c.window_stride;
  j["seed"] = c.seed;
  j["data_dir"] = c.data_dir;
  j["ae_path"] = c.ae_path;
  j["vae_path_uses_posterior"] = c.vae_path_uses_posterior;
  j["share_dvae_weights"] = c.share_dvae_weights;
  return j;
}

ModelConfig config_from_json_obj(const json& j) {
  expect_object(j, "config");
  ModelConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "gen") read_gen(v, c.gen);
    else if (key == "latent") read_latent(v, c.latent);
    else if (key == "ae") read_ae(v, c.ae);
    else if (key == "video_head") read_video_head(v, c.video_head);
    else if (key == "manifold_head") read_manifold_head(v, c.manifold_head);
    else if (key == "weights") read_weights(v, c.weights);
    else if (key == "data") read_data(v, c.data);
    else if (key == "l1_convention") {
      const std::string s = as_str(v, key);
      if (s == "mean") c.l1_convention = L1Convention::mean;
      else if (s == "sum") c.l1_convention = L1Convention::sum;
      else fail(ErrorKind::config, "l1_convention must be \"mean\" or \"sum\"");
    } else if (key == "lr_gen") c.lr_gen = as_real(v, key);
    else if (key == "lr_disc") c.lr_disc = as_real(v, key);
    else if (key == "batch_size") c.batch_size = as_count(v, key);
    else if (key == "steps") c.steps = as_count(v, key);
    else if (key == "ae_pretrain_steps") c.ae_pretrain_steps = as_count(v, key);
    else if (key == "checkpoint_every") c.checkpoint_every = as_count(v, key);
    else if (key == "val_every") c.val_every = as_count(v, key);
    else if (key == "val_windows") c.val_windows = as_count(v, key);
    else if (key == "train_sequences") c.train_sequences = as_count(v, key);
    else if (key == "sequence_len") c.sequence_len = as_count(v, key);
    else if (key == "window_stride") c.window_stride = as_count(v, key);
    else if (key == "seed") c.seed = as_seed(v, key);
    else if (key == "data_dir") c.data_dir = as_str(v, key);
    else if (key == "ae_path") c.ae_path = as_str(v, key);
    else if (key == "vae_path_uses_posterior") c.vae_path_uses_posterior = as_flag(v, key);
    else if (key == "share_dvae_weights") c.share_dvae_weights = as_flag(v, key);
    else fail(ErrorKind::config, key + " is not a recognized field");
  }
  return c;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& cfg) { return config_to_json_obj(cfg).dump(2); }

ModelConfig model_config_from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) fail(ErrorKind::config, "config is not valid JSON");
  return config_from_json_obj(j);
}

ModelConfig load_model_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return model_config_from_json(text);
}

void validate(const ModelConfig& cfg) {
  validate(cfg.gen);
  validate(cfg.ae);
  if (cfg.latent.d_z != cfg.gen.d_z) fail(ErrorKind::config, "latent.d_z must equal gen.d_z");
  if (cfg.latent.in_channels != cfg.gen.in_channels)
    fail(ErrorKind::config, "latent.in_channels must equal gen.in_channels");
  if (cfg.latent.features < 1) fail(ErrorKind::config, "latent.features must be positive");
  if (cfg.ae.in_channels != cfg.gen.in_channels)
    fail(ErrorKind::config, "ae.in_channels must equal gen.in_channels");
  if (cfg.video_head.in_channels != cfg.gen.in_channels)
    fail(ErrorKind::config, "video_head.in_channels must equal gen.in_channels");
  if (cfg.video_head.features < 1) fail(ErrorKind::config, "video_head.features must be positive");
  if (cfg.manifold_head.manifold_dim != cfg.ae.manifold_dim)
    fail(ErrorKind::config, "manifold_head.manifold_dim must equal ae.manifold_dim");
  if (cfg.manifold_head.hidden < 1) fail(ErrorKind::config, "manifold_head.hidden must be positive");
  if (!(cfg.weights.l1 >= 0) || !(cfg.weights.kl >= 0) || !(cfg.weights.mggan1 >= 0) ||
      !(cfg.weights.mggan2 >= 0))
    fail(ErrorKind::config, "weights.* must be nonnegative");
  if (!(cfg.lr_gen > 0)) fail(ErrorKind::config, "lr_gen must be positive");
  if (!(cfg.lr_disc > 0)) fail(ErrorKind::config, "lr_disc must be positive");
  if (cfg.batch_size < 1) fail(ErrorKind::config, "batch_size must be positive");
  if (cfg.steps < 0) fail(ErrorKind::config, "steps must be nonnegative");
  if (cfg.ae_pretrain_steps < 0) fail(ErrorKind::config, "ae_pretrain_steps must be nonnegative");
  if (cfg.checkpoint_every < 0) fail(ErrorKind::config, "checkpoint_every must be nonnegative");
  if (cfg.val_every < 0) fail(ErrorKind::config, "val_every must be nonnegative");
  if (cfg.val_windows < 0) fail(ErrorKind::config, "val_windows must be nonnegative");
  if (cfg.sequence_len < 0) fail(ErrorKind::config, "sequence_len must be nonnegative");
  if (cfg.window_stride < 1) fail(ErrorKind::config, "window_stride must be positive");
  if (cfg.data_dir.empty()) {
    if (cfg.train_sequences < 1) fail(ErrorKind::config, "train_sequences must be positive");
    try {
      validate(cfg.data);
    } catch (const Error& e) {
      fail(ErrorKind::config, std::string("data: ") + e.what());
    }
  }
}

TrainState init_train_state(const ModelConfig& cfg) {
  validate(cfg);
  TrainState st(cfg);
  RngStream g(derive_seed(cfg.seed, "init.gen"));
  add_generator_params(st.model, "gen.", cfg.gen, &g);
  RngStream l(derive_seed(cfg.seed, "init.latent"));
  add_latent_encoder_params(st.model, "latent.", cfg.latent, &l);
  RngStream dv(derive_seed(cfg.seed, "init.d"));
  add_video_head_params(st.d, "d.", cfg.video_head, &dv);
  if (!cfg.share_dvae_weights) {
    RngStream dw(derive_seed(cfg.seed, "init.dvae"));
    add_video_head_params(st.dvae, "dvae.", cfg.video_head, &dw);
  }
  RngStream m1(derive_seed(cfg.seed, "init.dm1"));
  add_manifold_head_params(st.dm1, "dm1.", cfg.manifold_head, &m1);
  RngStream m2(derive_seed(cfg.seed, "init.dm2"));
  add_manifold_head_params(st.dm2, "dm2.", cfg.manifold_head, &m2);
  st.order_rng = RngStream(derive_seed(cfg.seed, "train.order"));
  st.noise_rng = RngStream(derive_seed(cfg.seed, "train.noise"));
  return st;
}

namespace {

struct PosteriorDraw {
  std::vector<GaussianVars> posts;
  std::vector<Var> zs;
};

PosteriorDraw draw_posterior(TrainState& st, const Window& w) {
  PosteriorDraw out;
  for (std::int64_t j = 0; j < st.cfg.gen.horizon; ++j) {
    Tensor prev = j == 0 ? frame_chw(w.context, w.context.length() - 1)
                         : frame_chw(w.target, j - 1);
    GaussianVars gv = encode_pair(st.model, "latent.", st.cfg.latent, constant(prev),
                                  constant(frame_chw(w.target, j)));
    out.zs.push_back(sample(gv, gaussian_vec(st.cfg.gen.d_z, st.noise_rng)));
    out.posts.push_back(gv);
  }
  return out;
}

std::vector<Var> draw_prior(TrainState& st) {
  std::vector<Var> zs;
  for (std::int64_t j = 0; j < st.cfg.gen.horizon; ++j)
    zs.push_back(constant(gaussian_vec(st.cfg.gen.d_z, st.noise_rng)));
  return zs;
}

void discriminator_update(TrainState& st, const std::vector<Window>& batch) {
  st.d.zero_grad();
  st.dvae.zero_grad();
  st.dm1.zero_grad();
  st.dm2.zero_grad();
  ParamSet& dvae = st.cfg.share_dvae_weights ? st.d : st.dvae;
  const std::string dvae_prefix = st.cfg.share_dvae_weights ? "d." : "dvae.";
  const auto& vh = st.cfg.video_head;
  const auto& mh = st.cfg.manifold_head;

  std::vector<Var> items;
  for (const Window& w : batch) {
    VideoSequence fake_prior, fake_post;
    {
      NoGradGuard ng;
      std::vector<Tensor> zs;
      for (std::int64_t j = 0; j < st.cfg.gen.horizon; ++j)
        zs.push_back(gaussian_vec(st.cfg.gen.d_z, st.noise_rng));
      fake_prior = rollout(st.model, "gen.", st.cfg.gen, w.context, zs);
      if (st.cfg.vae_path_uses_posterior) {
        std::vector<Tensor> zp;
        for (std::int64_t j = 0; j < st.cfg.gen.horizon; ++j) {
          Tensor prev = j == 0 ? frame_chw(w.context, w.context.length() - 1)
                               : frame_chw(w.target, j - 1);
          GaussianParams gp = encode_pair(st.model, "latent.", st.cfg.latent, prev,
                                          frame_chw(w.target, j));
          zp.push_back(sample(gp, gaussian_vec(st.cfg.gen.d_z, st.noise_rng)));
        }
        fake_post = rollout(st.model, "gen.", st.cfg.gen, w.context, zp);
      }
    }
    const VideoSequence& fake4 = st.cfg.vae_path_uses_posterior ? fake_post : fake_prior;
    std::vector<Var> real = clip_frames(w.target);
    std::vector<Var> fake3 = clip_frames(fake_prior);
    std::vector<Var> fake4f = clip_frames(fake4);

    items.push_back(d_objective(discriminate_video(st.d, "d.", vh, real),
                                discriminate_features(st.dm1, "dm1.", mh, manifold_map(st.ae, real)),
                                discriminate_video(st.d, "d.", vh, fake3),
                                discriminate_features(st.dm1, "dm1.", mh,
                                                      manifold_map(st.ae, fake3))));
    items.push_back(d_objective(discriminate_video(dvae, dvae_prefix, vh, real),
                                discriminate_features(st.dm2, "dm2.", mh, manifold_map(st.ae, real)),
                                discriminate_video(dvae, dvae_prefix, vh, fake4f),
                                discriminate_features(st.dm2, "dm2.", mh,
                                                      manifold_map(st.ae, fake4f))));
  }
  // maximize the objective: descend its negation
  backward(scale(add_all(items), -1.0 / static_cast<double>(batch.size())));
  st.d.harvest();
  st.dvae.harvest();
  st.dm1.harvest();
  st.dm2.harvest();
  st.opt_d.step(raw_params(st.d));
  if (!st.cfg.share_dvae_weights) st.opt_dvae.step(raw_params(st.dvae));
  st.opt_dm1.step(raw_params(st.dm1));
  st.opt_dm2.step(raw_params(st.dm2));
}

LossBreakdown generator_update(TrainState& st, const std::vector<Window>& batch, bool use_gan) {
  st.model.zero_grad();
  ParamSet& dvae = st.cfg.share_dvae_weights ? st.d : st.dvae;
  const std::string dvae_prefix = st.cfg.share_dvae_weights ? "d." : "dvae.";
  const auto& vh = st.cfg.video_head;
  const auto& mh = st.cfg.manifold_head;

  double sl1 = 0, skl = 0, sg3 = 0, sg4 = 0;
  std::vector<Var> items;
  for (const Window& w : batch) {
    PosteriorDraw pd = draw_posterior(st, w);
    std::vector<Var> pred_post = rollout_frames(st.model, "gen.", st.cfg.gen, w.context, pd.zs);
    Var l1 = l1_loss(pred_post, w.target, st.cfg.l1_convention);
    Var kl = kl_loss(pd.posts);
    Var g3 = constant(Tensor::scalar(0.0));
    Var g4 = g3;
    if (use_gan) {
      std::vector<Var> pred_prior =
          rollout_frames(st.model, "gen.", st.cfg.gen, w.context, draw_prior(st));
      g3 = g_objective(discriminate_video(st.d, "d.", vh, pred_prior),
                       discriminate_features(st.dm1, "dm1.", mh, manifold_map(st.ae, pred_prior)));
      const std::vector<Var>& f4 = st.cfg.vae_path_uses_posterior ? pred_post : pred_prior;
      g4 = g_objective(discriminate_video(dvae, dvae_prefix, vh, f4),
                       discriminate_features(st.dm2, "dm2.", mh, manifold_map(st.ae, f4)));
    }
    items.push_back(combined_loss(l1, kl, g3, g4, st.cfg.weights));
    sl1 += l1->value.item();
    skl += kl->value.item();
    sg3 += g3->value.item();
    sg4 += g4->value.item();
  }
  backward(scale(add_all(items), 1.0 / static_cast<double>(batch.size())));
  st.model.harvest();
  st.opt_model.step(raw_params(st.model));
  const double b = static_cast<double>(batch.size());
  return combined_loss(sl1 / b, skl / b, sg3 / b, sg4 / b, st.cfg.weights);
}

}  // namespace

LossBreakdown train_step(TrainState& st, const std::vector<Window>& batch) {
  if (!st.ae.frozen)
    fail(ErrorKind::misuse, "train_step needs a frozen manifold autoencoder");
  if (batch.empty()) fail(ErrorKind::misuse, "empty training batch");
  for (const Window& w : batch)
    if (w.target.length() != st.cfg.gen.horizon)
      fail(ErrorKind::shape_mismatch, "target length does not match the horizon");

  const bool use_gan = st.cfg.weights.mggan1 != 0.0 || st.cfg.weights.mggan2 != 0.0;
  if (use_gan) discriminator_update(st, batch);
  LossBreakdown lb = generator_update(st, batch, use_gan);
  // drop tape leaves the generator pass hung on the heads and the frozen
  // encoder, so the step's graphs free immediately
  st.d.zero_grad();
  st.dvae.zero_grad();
  st.dm1.zero_grad();
  st.dm2.zero_grad();
  st.ae.params.zero_grad();
  st.step += 1;
  return lb;
}

double validation_l1(TrainState& st, const std::vector<Window>& windows) {
  if (windows.empty()) fail(ErrorKind::misuse, "validation needs at least one window");
  NoGradGuard ng;
  double total = 0;
  for (const Window& w : windows) {
    VideoSequence pred = predict(st.model, st.cfg.gen, st.cfg.latent, w.context,
                                 PredictMode::prior, derive_seed(st.cfg.seed, "val"));
    total += l1_loss(pred, w.target, st.cfg.l1_convention);
  }
  return total / static_cast<double>(windows.size());
}

std::vector<VideoSequence> load_dataset(const std::string& dir) {
  std::vector<DatasetEntry> entries = read_manifest(dir);
  std::vector<VideoSequence> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(load_dataset_sequence(dir, e.id));
  return out;
}

std::vector<VideoSequence> generate_dataset(const MovingSpriteSpec& spec, std::int64_t length,
                                            std::int64_t count) {
  validate(spec);
  if (count < 0) fail(ErrorKind::invalid_spec, "sequence count must be >= 0");
  std::vector<VideoSequence> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    MovingSpriteSpec per_seq = spec;
    per_seq.seed = derive_seed(spec.seed, "sequence", static_cast<std::uint64_t>(i));
    VideoSequence seq = generate_moving_sprites(per_seq, length);
    char id[32];
    std::snprintf(id, sizeof(id), "seq_%05d", static_cast<int>(i));
    seq.id = id;
    out.push_back(std::move(seq));
  }
  return out;
}

std::vector<Window> dataset_windows(const std::vector<VideoSequence>& seqs,
                                    const WindowSpec& spec) {
  std::vector<Window> out;
  for (const auto& seq : seqs) {
    WindowSet ws = make_windows(seq, spec);
    for (auto& w : ws.windows) out.push_back(std::move(w));
  }
  return out;
}

FitResult fit(const ModelConfig& cfg_in, const std::string& out_dir,
              const std::string& resume_from) {
  ModelConfig cfg = cfg_in;
  validate(cfg);
  fs::create_directories(out_dir);

  std::vector<VideoSequence> seqs;
  if (cfg.data_dir.empty()) {
    const std::int64_t len =
        cfg.sequence_len > 0 ? cfg.sequence_len : cfg.gen.context_len + cfg.gen.horizon;
    seqs = generate_dataset(cfg.data, len, cfg.train_sequences);
  } else {
    seqs = load_dataset(cfg.data_dir);
  }
  WindowSpec wspec;
  wspec.context_len = cfg.gen.context_len;
  wspec.horizon = cfg.gen.horizon;
  wspec.stride = cfg.window_stride;
  std::vector<Window> all = dataset_windows(seqs, wspec);
  if (all.empty())
    fail(ErrorKind::config, "dataset yields no context/target windows for the configured task");
  if (static_cast<std::int64_t>(all.size()) <= cfg.val_windows)
    fail(ErrorKind::config, "val_windows leaves no training windows");
  std::vector<Window> val(all.end() - cfg.val_windows, all.end());
  std::vector<Window> train(all.begin(), all.end() - cfg.val_windows);

  const VideoSequence& probe = all.front().context;
  if (probe.channels() != cfg.gen.in_channels)
    fail(ErrorKind::config, "gen.in_channels does not match the dataset frames");
  if (cfg.ae.height != probe.height() || cfg.ae.width != probe.width())
    fail(ErrorKind::config, "ae.height/ae.width must match the dataset frames");
  const std::int64_t div = std::int64_t{1} << cfg.gen.n_scales;
  if (probe.height() % div != 0 || probe.width() % div != 0)
    fail(ErrorKind::config, "gen.n_scales does not divide the dataset frame size");

  FitResult res;
  TrainState st = resume_from.empty() ? init_train_state(cfg) : load_checkpoint(resume_from);
  if (!resume_from.empty()) {
    ModelConfig a = st.cfg;
    ModelConfig b = cfg;
    a.steps = b.steps = 0;
    if (model_config_to_json(a) != model_config_to_json(b))
      fail(ErrorKind::config, "resume checkpoint was trained under a different config");
    st.cfg.steps = cfg.steps;
    res.ae_path = resume_from;  // embedded
  } else if (!cfg.ae_path.empty()) {
    st.ae = load_autoencoder(cfg.ae_path);
    res.ae_path = cfg.ae_path;
  } else {
    std::vector<Tensor> frames;
    for (const auto& seq : seqs)
      for (std::int64_t t = 0; t < seq.length(); ++t) frames.push_back(frame_chw(seq, t));
    st.ae = pretrain_autoencoder(frames, cfg.ae, cfg.ae_pretrain_steps,
                                 derive_seed(cfg.seed, "ae"));
    res.ae_path = (fs::path(out_dir) / "autoencoder.bin").string();
    save_autoencoder(st.ae, res.ae_path);
  }

  res.train_log_path = (fs::path(out_dir) / "train.csv").string();
  std::ofstream log(res.train_log_path, std::ios::trunc);
  if (!log) fail(ErrorKind::io, "cannot write training log: " + res.train_log_path);
  log << loss_csv_header() << "\n";

  const bool with_val = cfg.val_every > 0 && cfg.val_windows > 0;
  std::ofstream vlog;
  if (with_val) {
    res.val_log_path = (fs::path(out_dir) / "val.csv").string();
    vlog.open(res.val_log_path, std::ios::trunc);
    if (!vlog) fail(ErrorKind::io, "cannot write validation log: " + res.val_log_path);
    vlog << "step,val_l1\n";
  }

  for (std::int64_t step = st.step + 1; step <= st.cfg.steps; ++step) {
    std::vector<Window> batch;
    batch.reserve(static_cast<std::size_t>(cfg.batch_size));
    for (std::int64_t b = 0; b < cfg.batch_size; ++b)
      batch.push_back(train[st.order_rng.below(train.size())]);
    LossBreakdown lb = train_step(st, batch);
    log << loss_csv_row(st.step, lb) << "\n";
    log.flush();
    if (with_val && (st.step % cfg.val_every == 0 || st.step == st.cfg.steps)) {
      char row[64];
      std::snprintf(row, sizeof(row), "%lld,%.12g", static_cast<long long>(st.step),
                    validation_l1(st, val));
      vlog << row << "\n";
      vlog.flush();
    }
    if (cfg.checkpoint_every > 0 && st.step % cfg.checkpoint_every == 0 &&
        st.step != st.cfg.steps)
      save_checkpoint(st, (fs::path(out_dir) / ("ckpt_" + std::to_string(st.step) + ".bin")).string());
  }

  res.checkpoint_path = (fs::path(out_dir) / "checkpoint.bin").string();
  save_checkpoint(st, res.checkpoint_path);
  return res;
}

EvalRun evaluate_run(TrainState& st, const std::vector<Window>& test_windows,
                     const EvalOptions& opt) {
  if (opt.samples < 1) fail(ErrorKind::config, "samples must be at least 1");
  if (test_windows.empty()) fail(ErrorKind::misuse, "empty evaluation set");

  EvalRun run;
  run.best.task = run.mean.task = opt.task;
  const std::int64_t horizon = st.cfg.gen.horizon;
  std::vector<double> mean_mse(horizon, 0), mean_psnr(horizon, 0), mean_ssim(horizon, 0);
  std::vector<double> best_mse(horizon, 0), best_psnr(horizon, 0), best_ssim(horizon, 0);

  for (std::size_t i = 0; i < test_windows.size(); ++i) {
    const Window& w = test_windows[i];
    SequenceMetrics best{w.context.id, std::numeric_limits<double>::infinity(),
                         -std::numeric_limits<double>::infinity(),
                         -std::numeric_limits<double>::infinity()};
    SequenceMetrics avg{w.context.id, 0, 0, 0};
    double top_ssim = -std::numeric_limits<double>::infinity();
    std::vector<double> top_mse_curve, top_psnr_curve, top_ssim_curve;
    for (std::int64_t s = 0; s < opt.samples; ++s) {
      const std::uint64_t seed = derive_seed(
          derive_seed(opt.seed, "eval.window", static_cast<std::uint64_t>(i)), "eval.sample",
          static_cast<std::uint64_t>(s));
      VideoSequence pred = predict(st.model, st.cfg.gen, st.cfg.latent, w.context,
                                   PredictMode::prior, seed);
      const double m = mse(pred, w.target);
      const double p = psnr(pred, w.target);
      const double ss = ssim(pred, w.target);
      avg.mse += m;
      avg.psnr += p;
      avg.ssim += ss;
      best.mse = std::min(best.mse, m);
      best.psnr = std::max(best.psnr, p);
      best.ssim = std::max(best.ssim, ss);
      std::vector<double> cm = per_frame_mse(pred, w.target);
      std::vector<double> cp = per_frame_psnr(pred, w.target);
      std::vector<double> cs = per_frame_ssim(pred, w.target);
      for (std::int64_t t = 0; t < horizon; ++t) {
        mean_mse[t] += cm[t];
        mean_psnr[t] += cp[t];
        mean_ssim[t] += cs[t];
      }
      if (ss > top_ssim) {
        top_ssim = ss;
        top_mse_curve = std::move(cm);
        top_psnr_curve = std::move(cp);
        top_ssim_curve = std::move(cs);
      }
    }
    avg.mse /= static_cast<double>(opt.samples);
    avg.psnr /= static_cast<double>(opt.samples);
    avg.ssim /= static_cast<double>(opt.samples);
    run.mean.per_sequence.push_back(avg);
    run.best.per_sequence.push_back(best);
    for (std::int64_t t = 0; t < horizon; ++t) {
      best_mse[t] += top_mse_curve[t];
      best_psnr[t] += top_psnr_curve[t];
      best_ssim[t] += top_ssim_curve[t];
    }
  }

  const double nw = static_cast<double>(test_windows.size());
  const double ns = nw * static_cast<double>(opt.samples);
  for (std::int64_t t = 0; t < horizon; ++t) {
    mean_mse[t] /= ns;
    mean_psnr[t] /= ns;
    mean_ssim[t] /= ns;
    best_mse[t] /= nw;
    best_psnr[t] /= nw;
    best_ssim[t] /= nw;
  }
  run.mean.timestep_mse = std::move(mean_mse);
  run.mean.timestep_psnr = std::move(mean_psnr);
  run.mean.timestep_ssim = std::move(mean_ssim);
  run.best.timestep_mse = std::move(best_mse);
  run.best.timestep_psnr = std::move(best_psnr);
  run.best.timestep_ssim = std::move(best_ssim);

  for (MetricsReport* r : {&run.best, &run.mean}) {
    SequenceMetrics agg{"mean", 0, 0, 0};
    for (const auto& row : r->per_sequence) {
      agg.mse += row.mse;
      agg.psnr += row.psnr;
      agg.ssim += row.ssim;
    }
    agg.mse /= nw;
    agg.psnr /= nw;
    agg.ssim /= nw;
    r->aggregate = agg;
  }
  return run;
}

}  // namespace framecast
