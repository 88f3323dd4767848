#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "framecast/checkpoint.hpp"
#include "framecast/error.hpp"
#include "framecast/train.hpp"

using namespace framecast;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.gen.n_scales = 2;
  c.gen.channels = 4;
  c.gen.in_channels = 1;
  c.gen.context_len = 2;
  c.gen.horizon = 2;
  c.gen.d_z = 3;
  c.gen.tau = 2;
  c.gen.temporal_window = 2;
  c.gen.kernel = 3;
  c.latent.d_z = 3;
  c.latent.in_channels = 1;
  c.latent.features = 4;
  c.ae.in_channels = 1;
  c.ae.height = 16;
  c.ae.width = 16;
  c.ae.features = 4;
  c.ae.manifold_dim = 6;
  c.video_head.in_channels = 1;
  c.video_head.features = 4;
  c.manifold_head.manifold_dim = 6;
  c.manifold_head.hidden = 8;
  c.batch_size = 1;
  c.steps = 4;
  c.ae_pretrain_steps = 2;
  c.checkpoint_every = 0;
  c.val_every = 2;
  c.val_windows = 2;
  c.train_sequences = 3;
  c.sequence_len = 6;
  c.data.canvas_h = 16;
  c.data.canvas_w = 16;
  c.data.n_sprites = 1;
  c.data.speed = 1.5;
  c.data.glyphs = {Tensor::full({5, 5}, 1.0)};
  c.data.seed = 11;
  c.seed = 7;
  return c;
}

std::vector<Window> tiny_windows(const ModelConfig& c, std::int64_t count) {
  auto seqs = generate_dataset(c.data, c.gen.context_len + c.gen.horizon, count);
  WindowSpec ws;
  ws.context_len = c.gen.context_len;
  ws.horizon = c.gen.horizon;
  ws.stride = 1;
  return dataset_windows(seqs, ws);
}

Autoencoder tiny_ae(const ModelConfig& c) {
  auto seqs = generate_dataset(c.data, 4, 2);
  std::vector<Tensor> frames;
  for (const auto& s : seqs)
    for (std::int64_t t = 0; t < s.length(); ++t) frames.push_back(frame_chw(s, t));
  return pretrain_autoencoder(frames, c.ae, 2, 5);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path fresh_dir(const std::string& leaf) {
  fs::path p = fs::temp_directory_path() / "framecast_train_tests" / leaf;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("model config json round trip and field errors") {
  ModelConfig c = tiny_config();
  c.l1_convention = L1Convention::sum;
  c.vae_path_uses_posterior = true;
  c.data_dir = "some/dir";
  c.ae_path = "ae.bin";
  const std::string text = model_config_to_json(c);
  ModelConfig back = model_config_from_json(text);
  CHECK(model_config_to_json(back) == text);
  CHECK(back.l1_convention == L1Convention::sum);
  CHECK(back.vae_path_uses_posterior);
  CHECK(back.gen.d_z == 3);
  CHECK(back.data.speed == doctest::Approx(1.5));
  REQUIRE(back.data.glyphs.size() == 1);
  CHECK(back.data.glyphs[0].shape() == Shape{5, 5});
  CHECK(back.data.glyphs[0][12] == 1.0);

  // absent fields keep defaults
  ModelConfig dflt = model_config_from_json("{}");
  CHECK(model_config_to_json(dflt) == model_config_to_json(ModelConfig{}));

  auto kind_of = [](const std::string& body) {
    try {
      model_config_from_json(body);
    } catch (const Error& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(kind_of(R"({"gen":{"bogus":1}})").find("gen.bogus") != std::string::npos);
  CHECK(kind_of(R"({"weights":{"l1":"x"}})").find("weights.l1") != std::string::npos);
  CHECK(kind_of(R"({"lr_gen":"fast"})").find("lr_gen") != std::string::npos);
  CHECK(kind_of(R"({"mystery":3})").find("mystery") != std::string::npos);
  CHECK(kind_of(R"({"l1_convention":"median"})").find("l1_convention") != std::string::npos);
  CHECK_THROWS_AS(model_config_from_json("not json at all"), Error);
  try {
    model_config_from_json(R"({"unknown_scalar":1})");
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
  }
}

TEST_CASE("model config validation rejects inconsistent blocks") {
  ModelConfig c = tiny_config();
  CHECK_NOTHROW(validate(c));
  ModelConfig bad = c;
  bad.latent.d_z = 5;
  CHECK_THROWS_AS(validate(bad), Error);
  bad = c;
  bad.manifold_head.manifold_dim = 7;
  CHECK_THROWS_AS(validate(bad), Error);
  bad = c;
  bad.weights.kl = -0.1;
  CHECK_THROWS_AS(validate(bad), Error);
  bad = c;
  bad.lr_disc = 0.0;
  CHECK_THROWS_AS(validate(bad), Error);
  bad = c;
  bad.window_stride = 0;
  CHECK_THROWS_AS(validate(bad), Error);
  bad = c;
  bad.data.mode = "teleport";
  try {
    validate(bad);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
  }
}

TEST_CASE("init_train_state is seed deterministic") {
  ModelConfig c = tiny_config();
  TrainState a = init_train_state(c);
  TrainState b = init_train_state(c);
  CHECK(a.model.value_digest() == b.model.value_digest());
  CHECK(a.d.value_digest() == b.d.value_digest());
  CHECK(a.dvae.value_digest() == b.dvae.value_digest());
  CHECK(a.dm1.value_digest() == b.dm1.value_digest());
  CHECK(a.dm2.value_digest() == b.dm2.value_digest());
  CHECK(a.dvae.count() > 0);

  ModelConfig c2 = c;
  c2.seed = 8;
  TrainState other = init_train_state(c2);
  CHECK(a.model.value_digest() != other.model.value_digest());

  ModelConfig shared = c;
  shared.share_dvae_weights = true;
  TrainState s = init_train_state(shared);
  CHECK(s.dvae.count() == 0);
  CHECK(s.d.count() > 0);
}

TEST_CASE("train_step guards its inputs") {
  ModelConfig c = tiny_config();
  TrainState st = init_train_state(c);
  auto windows = tiny_windows(c, 2);
  REQUIRE(!windows.empty());

  // unfrozen (absent) autoencoder
  try {
    train_step(st, {windows[0]});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::misuse);
  }

  st.ae = tiny_ae(c);
  REQUIRE(st.ae.frozen);
  try {
    train_step(st, {});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::misuse);
  }

  Window short_target = windows[0];
  VideoSequence t = short_target.target;
  Tensor one({1, t.height(), t.width(), t.channels()});
  short_target.target = VideoSequence{one, t.id};
  try {
    train_step(st, {short_target});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::shape_mismatch);
  }
}

TEST_CASE("train_step advances every group and stays finite") {
  ModelConfig c = tiny_config();
  TrainState st = init_train_state(c);
  st.ae = tiny_ae(c);
  auto windows = tiny_windows(c, 2);

  const auto m0 = st.model.value_digest();
  const auto d0 = st.d.value_digest();
  const auto v0 = st.dvae.value_digest();
  const auto m1_0 = st.dm1.value_digest();
  const auto m2_0 = st.dm2.value_digest();
  const auto ae0 = st.ae.digest();

  LossBreakdown lb = train_step(st, {windows[0]});
  CHECK(st.step == 1);
  CHECK(std::isfinite(lb.combined));
  CHECK(lb.l1 > 0);
  CHECK(lb.kl >= 0);
  CHECK(st.model.value_digest() != m0);
  CHECK(st.d.value_digest() != d0);
  CHECK(st.dvae.value_digest() != v0);
  CHECK(st.dm1.value_digest() != m1_0);
  CHECK(st.dm2.value_digest() != m2_0);
  CHECK(st.ae.digest() == ae0);  // the manifold map never moves

  // identical states take identical steps
  TrainState st2 = init_train_state(c);
  st2.ae = tiny_ae(c);
  LossBreakdown lb2 = train_step(st2, {windows[0]});
  CHECK(lb2.combined == lb.combined);
  CHECK(st2.model.value_digest() == st.model.value_digest());
  CHECK(st2.d.value_digest() == st.d.value_digest());
}

TEST_CASE("ablated adversarial weights reduce to reconstruction plus kl") {
  ModelConfig c = tiny_config();
  c.weights.mggan1 = 0.0;
  c.weights.mggan2 = 0.0;
  auto windows = tiny_windows(c, 1);
  REQUIRE(!windows.empty());
  const Window& w = windows[0];

  TrainState a = init_train_state(c);
  a.ae = tiny_ae(c);
  const auto d_before = a.d.value_digest();
  LossBreakdown lb = train_step(a, {w});
  CHECK(lb.mggan1 == 0.0);
  CHECK(lb.mggan2 == 0.0);
  CHECK(lb.combined == doctest::Approx(c.weights.l1 * lb.l1 + c.weights.kl * lb.kl));
  // with both adversarial weights off the discriminators never update
  CHECK(a.d.value_digest() == d_before);

  // replay the same step by hand on a twin state and compare gradients
  TrainState b = init_train_state(c);
  b.ae = tiny_ae(c);
  std::vector<GaussianVars> posts;
  std::vector<Var> zs;
  for (std::int64_t j = 0; j < c.gen.horizon; ++j) {
    Tensor prev =
        j == 0 ? frame_chw(w.context, w.context.length() - 1) : frame_chw(w.target, j - 1);
    GaussianVars gv = encode_pair(b.model, "latent.", c.latent, constant(prev),
                                  constant(frame_chw(w.target, j)));
    Tensor noise({c.gen.d_z});
    for (std::int64_t i = 0; i < c.gen.d_z; ++i) noise[i] = b.noise_rng.normal();
    zs.push_back(sample(gv, noise));
    posts.push_back(gv);
  }
  std::vector<Var> pred = rollout_frames(b.model, "gen.", c.gen, w.context, zs);
  Var zero = constant(Tensor::scalar(0.0));
  Var loss = combined_loss(l1_loss(pred, w.target, c.l1_convention), kl_loss(posts), zero, zero,
                           c.weights);
  backward(scale(add_all({loss}), 1.0));
  b.model.harvest();

  REQUIRE(a.model.count() == b.model.count());
  double max_diff = 0;
  for (std::int64_t i = 0; i < a.model.count(); ++i) {
    const Tensor& ga = a.model.all()[static_cast<std::size_t>(i)]->grad();
    const Tensor& gb = b.model.all()[static_cast<std::size_t>(i)]->grad();
    REQUIRE(ga.shape() == gb.shape());
    for (std::int64_t k = 0; k < ga.size(); ++k)
      max_diff = std::max(max_diff, std::abs(ga[k] - gb[k]));
  }
  CHECK(max_diff == 0.0);
}

TEST_CASE("checkpoint round trips bit exactly") {
  ModelConfig c = tiny_config();
  TrainState st = init_train_state(c);
  st.ae = tiny_ae(c);
  auto windows = tiny_windows(c, 2);
  for (int i = 0; i < 2; ++i) train_step(st, {windows[i % windows.size()]});

  fs::path dir = fresh_dir("roundtrip");
  const std::string path = (dir / "state.bin").string();
  save_checkpoint(st, path);
  TrainState back = load_checkpoint(path);

  CHECK(back.step == st.step);
  CHECK(back.model.value_digest() == st.model.value_digest());
  CHECK(back.d.value_digest() == st.d.value_digest());
  CHECK(back.dvae.value_digest() == st.dvae.value_digest());
  CHECK(back.dm1.value_digest() == st.dm1.value_digest());
  CHECK(back.dm2.value_digest() == st.dm2.value_digest());
  CHECK(back.ae.digest() == st.ae.digest());
  CHECK(back.ae.frozen);
  CHECK(back.ae.report.steps == st.ae.report.steps);
  CHECK(back.order_rng.save_state() == st.order_rng.save_state());
  CHECK(back.noise_rng.save_state() == st.noise_rng.save_state());
  CHECK(back.opt_model.step_count() == st.opt_model.step_count());
  CHECK(back.opt_model.slots().size() == st.opt_model.slots().size());

  // the restored state takes the very same next step
  LossBreakdown la = train_step(st, {windows[0]});
  LossBreakdown lb = train_step(back, {windows[0]});
  CHECK(la.combined == lb.combined);
  CHECK(st.model.value_digest() == back.model.value_digest());

  // serializing again reproduces the file byte for byte
  const std::string p2 = (dir / "state2.bin").string();
  save_checkpoint(back, p2);
  save_checkpoint(st, path);
  CHECK(slurp(path) == slurp(p2));
}

TEST_CASE("checkpoint rejects corruption") {
  ModelConfig c = tiny_config();
  TrainState st = init_train_state(c);
  st.ae = tiny_ae(c);
  fs::path dir = fresh_dir("corrupt");
  const std::string path = (dir / "state.bin").string();
  save_checkpoint(st, path);

  CHECK_THROWS_AS(load_checkpoint((dir / "missing.bin").string()), Error);

  std::string bytes = slurp(path);
  // flip a digit deep in the parameter blocks
  std::string flipped = bytes;
  flipped[flipped.size() - 9] = static_cast<char>(flipped[flipped.size() - 9] ^ 0x40);
  {
    std::ofstream out((dir / "flipped.bin").string(), std::ios::binary);
    out << flipped;
  }
  try {
    load_checkpoint((dir / "flipped.bin").string());
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::io);
  }

  {
    std::ofstream out((dir / "short.bin").string(), std::ios::binary);
    out << bytes.substr(0, bytes.size() / 2);
  }
  CHECK_THROWS_AS(load_checkpoint((dir / "short.bin").string()), Error);

  {
    std::ofstream out((dir / "long.bin").string(), std::ios::binary);
    out << bytes << "tail";
  }
  CHECK_THROWS_AS(load_checkpoint((dir / "long.bin").string()), Error);

  {
    std::ofstream out((dir / "notckpt.bin").string(), std::ios::binary);
    out << "PNG????";
  }
  CHECK_THROWS_AS(load_checkpoint((dir / "notckpt.bin").string()), Error);
}

TEST_CASE("fit runs, logs, and resumes bit exactly") {
  ModelConfig c = tiny_config();
  c.steps = 6;
  c.checkpoint_every = 0;
  c.val_every = 3;

  fs::path da = fresh_dir("fit_a");
  FitResult ra = fit(c, da.string());
  CHECK(fs::exists(ra.checkpoint_path));
  CHECK(fs::exists(ra.train_log_path));
  CHECK(fs::exists(ra.val_log_path));
  CHECK(fs::exists(ra.ae_path));

  const std::string log_a = slurp(ra.train_log_path);
  CHECK(log_a.rfind(loss_csv_header() + "\n", 0) == 0);
  CHECK(std::count(log_a.begin(), log_a.end(), '\n') == 7);  // header + 6 steps
  const std::string val_a = slurp(ra.val_log_path);
  CHECK(val_a.rfind("step,val_l1\n", 0) == 0);
  CHECK(std::count(val_a.begin(), val_a.end(), '\n') == 3);  // header + steps 3 and 6

  // identical config, identical run
  fs::path db = fresh_dir("fit_b");
  FitResult rb = fit(c, db.string());
  CHECK(slurp(rb.train_log_path) == log_a);
  CHECK(slurp(rb.checkpoint_path) == slurp(ra.checkpoint_path));

  // halt at 3, resume to 6, land in the same place
  ModelConfig half = c;
  half.steps = 3;
  fs::path dh = fresh_dir("fit_half");
  FitResult rh = fit(half, dh.string());
  fs::path dr = fresh_dir("fit_resumed");
  FitResult rr = fit(c, dr.string(), rh.checkpoint_path);
  TrainState full = load_checkpoint(ra.checkpoint_path);
  TrainState resumed = load_checkpoint(rr.checkpoint_path);
  CHECK(resumed.step == 6);
  CHECK(resumed.model.value_digest() == full.model.value_digest());
  CHECK(resumed.d.value_digest() == full.d.value_digest());
  CHECK(resumed.order_rng.save_state() == full.order_rng.save_state());
  CHECK(resumed.noise_rng.save_state() == full.noise_rng.save_state());
  // resumed log holds exactly the tail rows of the full log
  std::string tail = slurp(rr.train_log_path);
  CHECK(std::count(tail.begin(), tail.end(), '\n') == 4);  // header + steps 4..6
  CHECK(log_a.find(tail.substr(tail.find('\n') + 1)) != std::string::npos);

  // resume under a different config is refused
  ModelConfig other = c;
  other.lr_gen = 1e-3;
  fs::path dx = fresh_dir("fit_bad_resume");
  try {
    fit(other, dx.string(), rh.checkpoint_path);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
  }
}

TEST_CASE("fit with zero steps still produces a usable checkpoint") {
  ModelConfig c = tiny_config();
  c.steps = 0;
  c.val_every = 0;
  fs::path dir = fresh_dir("fit_zero");
  FitResult r = fit(c, dir.string());
  TrainState st = load_checkpoint(r.checkpoint_path);
  CHECK(st.step == 0);
  auto windows = tiny_windows(c, 1);
  VideoSequence pred = predict(st.model, c.gen, c.latent, windows[0].context, PredictMode::prior,
                               /*seed=*/3);
  CHECK(pred.length() == c.gen.horizon);
  CHECK(pred.height() == 16);
}

TEST_CASE("fit refuses impossible dataset geometry") {
  ModelConfig c = tiny_config();
  c.sequence_len = 3;  // shorter than context + horizon
  fs::path dir = fresh_dir("fit_short_seqs");
  try {
    fit(c, dir.string());
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
  }

  ModelConfig c2 = tiny_config();
  c2.val_windows = 1000;
  fs::path dir2 = fresh_dir("fit_all_val");
  try {
    fit(c2, dir2.string());
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
  }

  ModelConfig c3 = tiny_config();
  c3.ae.height = 32;  // disagrees with 16x16 frames
  fs::path dir3 = fresh_dir("fit_bad_ae");
  try {
    fit(c3, dir3.string());
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
  }
}

TEST_CASE("validation_l1 is deterministic and guarded") {
  ModelConfig c = tiny_config();
  TrainState st = init_train_state(c);
  auto windows = tiny_windows(c, 2);
  const double v1 = validation_l1(st, windows);
  const double v2 = validation_l1(st, windows);
  CHECK(v1 == v2);
  CHECK(v1 > 0);
  CHECK_THROWS_AS(validation_l1(st, {}), Error);
}

TEST_CASE("evaluate_run scores prior samples per window") {
  ModelConfig c = tiny_config();
  TrainState st = init_train_state(c);
  auto windows = tiny_windows(c, 3);
  REQUIRE(windows.size() >= 2);
  std::vector<Window> two{windows[0], windows[1]};

  EvalOptions one;
  one.samples = 1;
  one.seed = 9;
  one.task = "2 -> 2";
  EvalRun r1 = evaluate_run(st, two, one);
  REQUIRE(r1.best.per_sequence.size() == 2);
  CHECK(r1.best.task == "2 -> 2");
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(r1.best.per_sequence[i].mse == r1.mean.per_sequence[i].mse);
    CHECK(r1.best.per_sequence[i].psnr == r1.mean.per_sequence[i].psnr);
    CHECK(r1.best.per_sequence[i].ssim == r1.mean.per_sequence[i].ssim);
  }
  CHECK(r1.best.timestep_psnr.size() == static_cast<std::size_t>(c.gen.horizon));
  CHECK(r1.best.aggregate.id == "mean");
  CHECK(r1.best.aggregate.psnr ==
        doctest::Approx((r1.best.per_sequence[0].psnr + r1.best.per_sequence[1].psnr) / 2));

  // a bigger sample budget only extends the draw, so the best never degrades
  EvalOptions three = one;
  three.samples = 3;
  EvalRun r3 = evaluate_run(st, two, three);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(r3.best.per_sequence[i].psnr >= r1.best.per_sequence[i].psnr);
    CHECK(r3.best.per_sequence[i].ssim >= r1.best.per_sequence[i].ssim);
    CHECK(r3.best.per_sequence[i].mse <= r1.best.per_sequence[i].mse);
  }

  // same options, same numbers
  EvalRun again = evaluate_run(st, two, three);
  CHECK(again.mean.aggregate.mse == r3.mean.aggregate.mse);
  CHECK(again.best.aggregate.ssim == r3.best.aggregate.ssim);

  EvalOptions bad;
  bad.samples = 0;
  CHECK_THROWS_AS(evaluate_run(st, two, bad), Error);
  CHECK_THROWS_AS(evaluate_run(st, {}, one), Error);
}

TEST_CASE("generated and on-disk datasets agree") {
  ModelConfig c = tiny_config();
  auto mem = generate_dataset(c.data, 4, 2);
  REQUIRE(mem.size() == 2);
  CHECK(mem[0].id == "seq_00000");
  CHECK(mem[1].id == "seq_00001");
  CHECK(mem[0].length() == 4);

  fs::path dir = fresh_dir("dataset");
  write_dataset(dir.string(), c.data, 4, 2);
  auto disk = load_dataset(dir.string());
  REQUIRE(disk.size() == 2);
  CHECK(disk[0].id == mem[0].id);
  // PNG storage quantizes to 8 bits; the in-memory originals match within that
  double max_diff = 0;
  const Tensor& a = mem[1].frames;
  const Tensor& b = disk[1].frames;
  REQUIRE(a.shape() == b.shape());
  for (std::int64_t i = 0; i < a.size(); ++i)
    max_diff = std::max(max_diff, std::abs(a[i] - b[i]));
  CHECK(max_diff <= 0.5 / 255.0 + 1e-12);
}
