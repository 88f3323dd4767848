#include "framecast/adversary.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "framecast/digest.hpp"
#include "framecast/error.hpp"

#include <json.hpp>

namespace framecast {

void validate(const AutoencoderConfig& cfg) {
  if (cfg.in_channels < 1 || cfg.features < 1 || cfg.manifold_dim < 1)
    fail(ErrorKind::config, "autoencoder dimensions must be positive");
  if (cfg.height < 8 || cfg.width < 8 || cfg.height % 4 != 0 || cfg.width % 4 != 0)
    fail(ErrorKind::config, "autoencoder frame size must be >= 8 and divisible by 4");
}

Autoencoder make_autoencoder(const AutoencoderConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Autoencoder ae;
  ae.cfg = cfg;
  RngStream rng(derive_seed(seed, "autoencoder"));
  const int64_t f = cfg.features, c = cfg.in_channels;
  const int64_t hq = cfg.height / 4, wq = cfg.width / 4;
  ae.params.create("enc1.w", {f, c, 3, 3}, Init::fanin_uniform, &rng);
  ae.params.create("enc1.b", {f}, Init::zeros);
  ae.params.create("enc2.w", {2 * f, f, 3, 3}, Init::fanin_uniform, &rng);
  ae.params.create("enc2.b", {2 * f}, Init::zeros);
  ae.params.create("enc_head.w", {cfg.manifold_dim, 2 * f}, Init::fanin_uniform, &rng);
  ae.params.create("enc_head.b", {cfg.manifold_dim}, Init::zeros);
  ae.params.create("dec_head.w", {2 * f * hq * wq, cfg.manifold_dim}, Init::fanin_uniform, &rng);
  ae.params.create("dec_head.b", {2 * f * hq * wq}, Init::zeros);
  ae.params.create("dec1.w", {f, 2 * f, 3, 3}, Init::fanin_uniform, &rng);
  ae.params.create("dec1.b", {f}, Init::zeros);
  ae.params.create("dec2.w", {c, f, 3, 3}, Init::fanin_uniform, &rng);
  ae.params.create("dec2.b", {c}, Init::zeros);
  return ae;
}

Var encode_frame(Autoencoder& ae, const Var& frame) {
  if (frame->value.ndim() != 3 || frame->value.dim(0) != ae.cfg.in_channels ||
      frame->value.dim(1) != ae.cfg.height || frame->value.dim(2) != ae.cfg.width)
    fail(ErrorKind::shape_mismatch, "autoencoder frame shape mismatch");
  auto p = [&](const char* n) { return ae.params.require(n).var(); };
  Var h = leaky_relu(conv2d(frame, p("enc1.w"), p("enc1.b"), {2, 2}, {1, 1}));
  h = leaky_relu(conv2d(h, p("enc2.w"), p("enc2.b"), {2, 2}, {1, 1}));
  return linear(global_mean_channels(h), p("enc_head.w"), p("enc_head.b"));
}

Var decode_frame(Autoencoder& ae, const Var& feat) {
  if (feat->value.ndim() != 1 || feat->value.dim(0) != ae.cfg.manifold_dim)
    fail(ErrorKind::shape_mismatch, "autoencoder feature shape mismatch");
  auto p = [&](const char* n) { return ae.params.require(n).var(); };
  const int64_t f = ae.cfg.features, hq = ae.cfg.height / 4, wq = ae.cfg.width / 4;
  Var h = linear(feat, p("dec_head.w"), p("dec_head.b"));
  h = leaky_relu(reshape(h, {2 * f, hq, wq}));
  h = leaky_relu(conv2d(upsample2_bilinear(h), p("dec1.w"), p("dec1.b"), {1, 1}, {1, 1}));
  return sigmoid(conv2d(upsample2_bilinear(h), p("dec2.w"), p("dec2.b"), {1, 1}, {1, 1}));
}

namespace {

double reconstruction_error(Autoencoder& ae, const std::vector<Tensor>& frames, size_t begin,
                            size_t end) {
  NoGradGuard ng;
  double acc = 0;
  for (size_t i = begin; i < end; ++i) {
    Var recon = decode_frame(ae, encode_frame(ae, constant(frames[i])));
    const Tensor& x = frames[i];
    double m = 0;
    for (int64_t j = 0; j < x.size(); ++j) {
      double d = recon->value.data()[j] - x.data()[j];
      m += d * d;
    }
    acc += m / static_cast<double>(x.size());
  }
  return acc / static_cast<double>(end - begin);
}

}  // namespace

Autoencoder pretrain_autoencoder(const std::vector<Tensor>& frames, const AutoencoderConfig& cfg,
                                 std::int64_t steps, std::uint64_t seed) {
  if (frames.empty()) fail(ErrorKind::misuse, "autoencoder pretraining needs at least one frame");
  Autoencoder ae = make_autoencoder(cfg, seed);
  // hold out the tail tenth (at least one frame); a single frame serves both
  const size_t holdout = std::max<size_t>(1, frames.size() / 10);
  const size_t train_n = frames.size() > holdout ? frames.size() - holdout : frames.size();

  ae.report.heldout_before = reconstruction_error(ae, frames, frames.size() - holdout, frames.size());
  ae.report.steps = steps;

  AdamConfig opt_cfg;
  opt_cfg.lr = 1e-3;
  opt_cfg.beta1 = 0.9;
  Adam opt(opt_cfg);
  std::vector<Parameter*> learnable;
  for (auto& p : ae.params.all()) learnable.push_back(p.get());
  RngStream order(derive_seed(seed, "autoencoder.order"));

  for (int64_t s = 0; s < steps; ++s) {
    const Tensor& x = frames[order.below(train_n)];
    ae.params.zero_grad();
    Var recon = decode_frame(ae, encode_frame(ae, constant(x)));
    Var diff = sub(recon, constant(x));
    backward(mean(mul(diff, diff)));
    ae.params.harvest();
    opt.step(learnable);
  }

  ae.report.heldout_after = reconstruction_error(ae, frames, frames.size() - holdout, frames.size());
  ae.params.freeze_all();
  ae.frozen = true;
  return ae;
}

std::vector<Var> manifold_map(Autoencoder& ae, const std::vector<Var>& frames) {
  if (!ae.frozen)
    fail(ErrorKind::misuse, "manifold_map requires a frozen encoder; pretrain it first");
  std::vector<Var> feats;
  feats.reserve(frames.size());
  for (const auto& f : frames) feats.push_back(encode_frame(ae, f));
  return feats;
}

Tensor manifold_map(Autoencoder& ae, const VideoSequence& seq) {
  if (!ae.frozen)
    fail(ErrorKind::misuse, "manifold_map requires a frozen encoder; pretrain it first");
  NoGradGuard ng;
  Tensor out({seq.length(), ae.cfg.manifold_dim});
  for (int64_t t = 0; t < seq.length(); ++t) {
    Var feat = encode_frame(ae, constant(frame_chw(seq, t)));
    for (int64_t j = 0; j < ae.cfg.manifold_dim; ++j)
      out.at({t, j}) = feat->value.data()[j];
  }
  return out;
}

void save_autoencoder(const Autoencoder& ae, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write " + path);
  nlohmann::json head;
  head["kind"] = "autoencoder";
  head["in_channels"] = ae.cfg.in_channels;
  head["height"] = ae.cfg.height;
  head["width"] = ae.cfg.width;
  head["features"] = ae.cfg.features;
  head["manifold_dim"] = ae.cfg.manifold_dim;
  head["frozen"] = ae.frozen;
  head["digest"] = digest_hex(ae.digest());
  head["heldout_before"] = ae.report.heldout_before;
  head["heldout_after"] = ae.report.heldout_after;
  head["pretrain_steps"] = ae.report.steps;
  std::string hs = head.dump();
  out << "FCAE1 " << hs.size() << "\n" << hs;
  for (const auto& p : ae.params.all()) {
    out << "\n" << p->name() << " " << p->value().ndim();
    for (int64_t d = 0; d < p->value().ndim(); ++d) out << " " << p->value().dim(d);
    out << "\n";
    out.write(reinterpret_cast<const char*>(p->value().data()),
              static_cast<std::streamsize>(p->value().size() * sizeof(double)));
  }
  if (!out) fail(ErrorKind::io, "failed writing " + path);
}

Autoencoder load_autoencoder(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot read " + path);
  std::string magic;
  size_t head_len = 0;
  in >> magic >> head_len;
  if (magic != "FCAE1") fail(ErrorKind::io, path + " is not an autoencoder checkpoint");
  in.get();  // newline
  std::string hs(head_len, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(head_len));
  nlohmann::json head = nlohmann::json::parse(hs, nullptr, false);
  if (head.is_discarded()) fail(ErrorKind::io, "corrupt autoencoder header in " + path);

  AutoencoderConfig cfg;
  cfg.in_channels = head.at("in_channels").get<int64_t>();
  cfg.height = head.at("height").get<int64_t>();
  cfg.width = head.at("width").get<int64_t>();
  cfg.features = head.at("features").get<int64_t>();
  cfg.manifold_dim = head.at("manifold_dim").get<int64_t>();
  Autoencoder ae = make_autoencoder(cfg, 0);
  ae.report.heldout_before = head.value("heldout_before", 0.0);
  ae.report.heldout_after = head.value("heldout_after", 0.0);
  ae.report.steps = head.value("pretrain_steps", int64_t{0});

  for (auto& p : ae.params.all()) {
    std::string name;
    int64_t ndim = 0;
    in >> name >> ndim;
    if (name != p->name()) fail(ErrorKind::io, "parameter order mismatch in " + path);
    Shape shape(ndim);
    for (auto& d : shape) in >> d;
    in.get();
    if (shape != p->value().shape()) fail(ErrorKind::io, "parameter shape mismatch in " + path);
    in.read(reinterpret_cast<char*>(p->value().data()),
            static_cast<std::streamsize>(p->value().size() * sizeof(double)));
  }
  if (!in) fail(ErrorKind::io, "truncated autoencoder checkpoint " + path);
  if (head.value("frozen", false)) {
    ae.params.freeze_all();
    ae.frozen = true;
  }
  if (head.contains("digest") && head["digest"].get<std::string>() != digest_hex(ae.digest()))
    fail(ErrorKind::io, "autoencoder digest mismatch in " + path);
  return ae;
}

void add_video_head_params(ParamSet& ps, const std::string& prefix, const VideoHeadConfig& cfg,
                           RngStream* rng) {
  if (cfg.in_channels < 1 || cfg.features < 1)
    fail(ErrorKind::config, "video head dimensions must be positive");
  const int64_t f = cfg.features;
  ps.create(prefix + ".conv1.w", {f, cfg.in_channels, 2, 3, 3}, Init::fanin_uniform, rng);
  ps.create(prefix + ".conv1.b", {f}, Init::zeros);
  ps.create(prefix + ".conv2.w", {2 * f, f, 1, 3, 3}, Init::fanin_uniform, rng);
  ps.create(prefix + ".conv2.b", {2 * f}, Init::zeros);
  ps.create(prefix + ".head.w", {1, 2 * f}, Init::fanin_uniform, rng);
  ps.create(prefix + ".head.b", {1}, Init::zeros);
}

Var discriminate_video(ParamSet& ps, const std::string& prefix, const VideoHeadConfig& cfg,
                       const std::vector<Var>& frames) {
  if (frames.empty()) fail(ErrorKind::misuse, "cannot discriminate an empty clip");
  if (frames[0]->value.dim(0) != cfg.in_channels)
    fail(ErrorKind::shape_mismatch, "clip channels do not match the head");
  auto p = [&](const std::string& n) { return ps.require(prefix + "." + n).var(); };
  std::vector<Var> clip = frames;
  if (clip.size() == 1) clip.push_back(clip[0]);  // temporal kernel needs depth 2
  Var x = stack_time(clip);
  x = leaky_relu(conv3d(x, p("conv1.w"), p("conv1.b"), {1, 2, 2}, {0, 1, 1}));
  x = leaky_relu(conv3d(x, p("conv2.w"), p("conv2.b"), {1, 2, 2}, {0, 1, 1}));
  return sigmoid(linear(global_mean_channels(x), p("head.w"), p("head.b")));
}

double discriminate_video(ParamSet& ps, const std::string& prefix, const VideoHeadConfig& cfg,
                          const VideoSequence& seq) {
  NoGradGuard ng;
  std::vector<Var> frames;
  for (int64_t t = 0; t < seq.length(); ++t) frames.push_back(constant(frame_chw(seq, t)));
  return discriminate_video(ps, prefix, cfg, frames)->value.item();
}

void add_manifold_head_params(ParamSet& ps, const std::string& prefix,
                              const ManifoldHeadConfig& cfg, RngStream* rng) {
  if (cfg.manifold_dim < 1 || cfg.hidden < 1)
    fail(ErrorKind::config, "manifold head dimensions must be positive");
  ps.create(prefix + ".fc1.w", {cfg.hidden, cfg.manifold_dim}, Init::fanin_uniform, rng);
  ps.create(prefix + ".fc1.b", {cfg.hidden}, Init::zeros);
  ps.create(prefix + ".fc2.w", {cfg.hidden, cfg.hidden}, Init::fanin_uniform, rng);
  ps.create(prefix + ".fc2.b", {cfg.hidden}, Init::zeros);
  ps.create(prefix + ".head.w", {1, cfg.hidden}, Init::fanin_uniform, rng);
  ps.create(prefix + ".head.b", {1}, Init::zeros);
}

Var discriminate_features(ParamSet& ps, const std::string& prefix, const ManifoldHeadConfig& cfg,
                          const std::vector<Var>& features) {
  if (features.empty()) fail(ErrorKind::misuse, "cannot discriminate an empty feature sequence");
  if (features[0]->value.dim(0) != cfg.manifold_dim)
    fail(ErrorKind::shape_mismatch, "feature width does not match the head");
  auto p = [&](const std::string& n) { return ps.require(prefix + "." + n).var(); };
  std::vector<Var> hs;
  hs.reserve(features.size());
  for (const auto& f : features) {
    Var h = leaky_relu(linear(f, p("fc1.w"), p("fc1.b")));
    hs.push_back(leaky_relu(linear(h, p("fc2.w"), p("fc2.b"))));
  }
  Var pooled = scale(add_all(hs), 1.0 / static_cast<double>(hs.size()));
  return sigmoid(linear(pooled, p("head.w"), p("head.b")));
}

double discriminate_features(ParamSet& ps, const std::string& prefix,
                             const ManifoldHeadConfig& cfg, const Tensor& features) {
  if (features.ndim() != 2) fail(ErrorKind::shape_mismatch, "feature sequence must be [T, d]");
  NoGradGuard ng;
  std::vector<Var> feats;
  for (int64_t t = 0; t < features.dim(0); ++t) {
    Tensor row({features.dim(1)});
    for (int64_t j = 0; j < features.dim(1); ++j) row.data()[j] = features.at({t, j});
    feats.push_back(constant(row));
  }
  return discriminate_features(ps, prefix, cfg, feats)->value.item();
}

}  // namespace framecast
