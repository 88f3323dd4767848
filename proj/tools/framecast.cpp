// Command-line front end: dataset generation, autoencoder pretraining,
// training, prediction, evaluation, and report printing.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "framecast/checkpoint.hpp"
#include "framecast/error.hpp"
#include "framecast/gif.hpp"
#include "framecast/train.hpp"

namespace fs = std::filesystem;
using namespace framecast;
using nlohmann::json;

namespace {

// Accept either a path to a JSON file or the JSON text itself.
std::string text_or_file(const std::string& arg) {
  if (fs::exists(arg) && fs::is_regular_file(arg)) {
    std::ifstream in(arg);
    if (!in) fail(ErrorKind::io, "cannot read " + arg);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }
  return arg;
}

MovingSpriteSpec sprite_spec_from_arg(const std::string& arg) {
  json parsed = json::parse(text_or_file(arg), nullptr, false);
  if (parsed.is_discarded()) fail(ErrorKind::config, "spec is not valid JSON");
  json wrapped;
  wrapped["data"] = std::move(parsed);
  return model_config_from_json(wrapped.dump()).data;
}

std::vector<VideoSequence> sequences_for(const ModelConfig& cfg) {
  if (!cfg.data_dir.empty()) return load_dataset(cfg.data_dir);
  const std::int64_t len =
      cfg.sequence_len > 0 ? cfg.sequence_len : cfg.gen.context_len + cfg.gen.horizon;
  return generate_dataset(cfg.data, len, cfg.train_sequences);
}

struct TaskShape {
  std::int64_t context = 0, horizon = 0;
  std::string label;
};

TaskShape parse_task(const std::string& text) {
  TaskShape t;
  long long n = 0, m = 0;
  char tail = 0;
  if (std::sscanf(text.c_str(), " %lld -> %lld %c", &n, &m, &tail) != 2 &&
      std::sscanf(text.c_str(), " %lld->%lld %c", &n, &m, &tail) != 2)
    fail(ErrorKind::config, "task must look like \"10 -> 10\", got: " + text);
  if (n < 1 || m < 1) fail(ErrorKind::config, "task lengths must be positive");
  t.context = n;
  t.horizon = m;
  t.label = std::to_string(n) + " -> " + std::to_string(m);
  return t;
}

struct SeedFlag {
  std::uint64_t value = 0;
  bool given = false;
};

void add_seed(CLI::App* cmd, SeedFlag& seed) {
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&seed](std::uint64_t v) { seed = {v, true}; }, "Override the run seed");
}

// --- commands ---

void cmd_gen_data(const std::string& spec_arg, const std::string& out, std::int64_t count,
                  std::int64_t length, const SeedFlag& seed) {
  MovingSpriteSpec spec = sprite_spec_from_arg(spec_arg);
  if (seed.given) spec.seed = seed.value;
  write_dataset(out, spec, length, count);
  std::printf("wrote %" PRId64 " sequences of length %" PRId64 " to %s\n", count, length,
              out.c_str());
}

void cmd_pretrain_ae(const std::string& config_arg, const std::string& data_dir,
                     std::int64_t steps, const std::string& out, const SeedFlag& seed) {
  ModelConfig cfg = model_config_from_json(text_or_file(config_arg));
  if (seed.given) cfg.seed = seed.value;
  if (!data_dir.empty()) cfg.data_dir = data_dir;
  if (steps >= 0) cfg.ae_pretrain_steps = steps;
  validate(cfg);

  std::vector<Tensor> frames;
  for (const auto& seq : sequences_for(cfg))
    for (std::int64_t t = 0; t < seq.length(); ++t) frames.push_back(frame_chw(seq, t));
  Autoencoder ae =
      pretrain_autoencoder(frames, cfg.ae, cfg.ae_pretrain_steps, derive_seed(cfg.seed, "ae"));
  save_autoencoder(ae, out);
  std::printf("held-out reconstruction %.6f -> %.6f over %" PRId64 " steps; saved %s\n",
              ae.report.heldout_before, ae.report.heldout_after, ae.report.steps, out.c_str());
}

struct TrainOverrides {
  std::int64_t steps = -1, batch_size = -1, checkpoint_every = -1, val_every = -1;
  double lr_gen = -1, lr_disc = -1;
  std::string data_dir, ae_path, resume;
  bool data_dir_given = false, ae_path_given = false;
};

void cmd_train(const std::string& config_arg, const std::string& out, const TrainOverrides& ov,
               const SeedFlag& seed) {
  ModelConfig cfg = model_config_from_json(text_or_file(config_arg));
  if (seed.given) cfg.seed = seed.value;
  if (ov.steps >= 0) cfg.steps = ov.steps;
  if (ov.batch_size >= 0) cfg.batch_size = ov.batch_size;
  if (ov.checkpoint_every >= 0) cfg.checkpoint_every = ov.checkpoint_every;
  if (ov.val_every >= 0) cfg.val_every = ov.val_every;
  if (ov.lr_gen >= 0) cfg.lr_gen = ov.lr_gen;
  if (ov.lr_disc >= 0) cfg.lr_disc = ov.lr_disc;
  if (ov.data_dir_given) cfg.data_dir = ov.data_dir;
  if (ov.ae_path_given) cfg.ae_path = ov.ae_path;
  if (!cfg.data_dir.empty() && !fs::exists(fs::path(cfg.data_dir) / "manifest.json"))
    fail(ErrorKind::config, "data_dir has no dataset manifest: " + cfg.data_dir);

  FitResult r = fit(cfg, out, ov.resume);
  std::printf("trained to step %" PRId64 "\ncheckpoint: %s\ntrain log:  %s\n", cfg.steps,
              r.checkpoint_path.c_str(), r.train_log_path.c_str());
  if (!r.val_log_path.empty()) std::printf("val log:    %s\n", r.val_log_path.c_str());
}

void cmd_predict(const std::string& ckpt, const std::string& data, std::string id,
                 const std::string& mode, const std::string& out, const std::string& gif,
                 const SeedFlag& seed) {
  if (mode != "prior" && mode != "posterior")
    fail(ErrorKind::config, "mode must be prior or posterior, got: " + mode);
  TrainState st = load_checkpoint(ckpt);
  if (id.empty()) {
    auto entries = read_manifest(data);
    if (entries.empty()) fail(ErrorKind::misuse, "dataset has no sequences: " + data);
    id = entries.front().id;
  }
  VideoSequence seq = load_dataset_sequence(data, id);
  WindowSpec ws{st.cfg.gen.context_len, st.cfg.gen.horizon, seq.length()};
  WindowSet set = make_windows(seq, ws);
  if (set.windows.empty())
    fail(ErrorKind::misuse, "sequence " + id + " is shorter than the trained task");
  const Window& w = set.windows.front();

  const PredictMode pm = mode == "prior" ? PredictMode::prior : PredictMode::posterior;
  VideoSequence pred = predict(st.model, st.cfg.gen, st.cfg.latent, w.context, pm, seed.value,
                               pm == PredictMode::posterior ? &w.target : nullptr);
  std::printf("predicted %" PRId64 " frames for %s (%s latents, seed %" PRIu64 ")\n",
              pred.length(), id.c_str(), mode.c_str(), seed.value);
  std::printf("l1 against the true future: %.6f\n", l1_loss(pred, w.target));

  if (!out.empty()) {
    save_frame_dir(pred, out);
    std::printf("frames: %s\n", out.c_str());
  }
  if (!gif.empty()) {
    std::vector<Tensor> frames;
    for (std::int64_t t = 0; t < w.context.length(); ++t)
      frames.push_back(frame_hwc(frame_chw(w.context, t)));
    for (std::int64_t t = 0; t < pred.length(); ++t)
      frames.push_back(frame_hwc(frame_chw(pred, t)));
    write_gif(gif, frames);
    std::printf("gif: %s (context + prediction)\n", gif.c_str());
  }
}

void cmd_evaluate(const std::string& ckpt, const std::string& data, const std::string& task_arg,
                  std::int64_t samples, const std::string& out, const SeedFlag& seed) {
  TrainState st = load_checkpoint(ckpt);
  TaskShape task;
  if (task_arg.empty()) {
    task.context = st.cfg.gen.context_len;
    task.horizon = st.cfg.gen.horizon;
    task.label =
        std::to_string(task.context) + " -> " + std::to_string(task.horizon);
  } else {
    task = parse_task(task_arg);
  }
  if (task.context != st.cfg.gen.context_len)
    fail(ErrorKind::misuse, "task " + task.label + " does not match the checkpoint (trained " +
                                std::to_string(st.cfg.gen.context_len) + " -> " +
                                std::to_string(st.cfg.gen.horizon) + ")");
  // a longer horizon only extends the rollout; the recurrence is length-free
  st.cfg.gen.horizon = task.horizon;

  auto seqs = load_dataset(data);
  WindowSpec ws{task.context, task.horizon, task.context + task.horizon};
  auto windows = dataset_windows(seqs, ws);
  if (windows.empty())
    fail(ErrorKind::misuse, "dataset yields no " + task.label + " evaluation windows: " + data);

  EvalOptions opt;
  opt.samples = samples;
  opt.seed = seed.value;
  opt.task = task.label;
  EvalRun run = evaluate_run(st, windows, opt);

  fs::create_directories(out);
  write_report_csv(run.best, (fs::path(out) / "best.csv").string());
  write_report_csv(run.mean, (fs::path(out) / "mean.csv").string());
  write_report_plots(run.best, (fs::path(out) / "plots_best").string());
  write_report_plots(run.mean, (fs::path(out) / "plots_mean").string());

  const std::string k = std::to_string(samples);
  std::printf("task %s over %zu windows, %s samples each\n", task.label.c_str(), windows.size(),
              k.c_str());
  std::fputs(format_table({{"framecast (best of " + k + ")", run.best.aggregate},
                           {"framecast (mean of " + k + ")", run.mean.aggregate}})
                 .c_str(),
             stdout);
  std::printf("reports: %s\n", out.c_str());
}

void cmd_report(const std::string& csv, const std::string& plots) {
  MetricsReport rep = read_report_csv(csv);
  if (!rep.task.empty()) std::printf("task %s\n", rep.task.c_str());
  std::vector<std::pair<std::string, SequenceMetrics>> rows;
  for (const auto& row : rep.per_sequence) rows.emplace_back(row.id, row);
  rows.emplace_back(rep.aggregate.id, rep.aggregate);
  std::fputs(format_table(rows).c_str(), stdout);
  if (!plots.empty()) {
    write_report_plots(rep, plots);
    std::printf("plots: %s\n", plots.c_str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"framecast: stochastic video prediction on moving-sprite clips"};
  app.require_subcommand(1);

  SeedFlag seed;

  auto* gen = app.add_subcommand("gen-data", "Generate a moving-sprite dataset");
  std::string gen_spec, gen_out;
  std::int64_t gen_count = 16, gen_length = 20;
  gen->add_option("--spec", gen_spec, "Sprite spec: JSON file or inline JSON")->required();
  gen->add_option("--out", gen_out, "Output dataset directory")->required();
  gen->add_option("--count", gen_count, "Number of sequences");
  gen->add_option("--length", gen_length, "Frames per sequence");
  add_seed(gen, seed);

  auto* pre = app.add_subcommand("pretrain-ae", "Pretrain the manifold autoencoder");
  std::string pre_config, pre_data, pre_out;
  std::int64_t pre_steps = -1;
  pre->add_option("--config", pre_config, "Model config: JSON file or inline JSON")->required();
  pre->add_option("--data", pre_data, "Dataset directory (default: config data_dir or generated)");
  pre->add_option("--steps", pre_steps, "Pretraining steps (default: config value)");
  pre->add_option("--out", pre_out, "Output autoencoder file")->required();
  add_seed(pre, seed);

  auto* train = app.add_subcommand("train", "Train a predictor from a JSON config");
  std::string train_config, train_out;
  TrainOverrides ov;
  train->add_option("--config", train_config, "Model config: JSON file or inline JSON")->required();
  train->add_option("--out", train_out, "Output directory for checkpoints and logs")->required();
  train->add_option("--resume", ov.resume, "Resume from a checkpoint file");
  train->add_option("--steps", ov.steps, "Override total training steps");
  train->add_option("--batch-size", ov.batch_size, "Override batch size");
  train->add_option("--checkpoint-every", ov.checkpoint_every, "Override checkpoint cadence");
  train->add_option("--val-every", ov.val_every, "Override validation cadence");
  train->add_option("--lr-gen", ov.lr_gen, "Override generator learning rate");
  train->add_option("--lr-disc", ov.lr_disc, "Override discriminator learning rate");
  train->add_option_function<std::string>(
      "--data-dir", [&ov](std::string v) { ov.data_dir = std::move(v); ov.data_dir_given = true; },
      "Override dataset directory (empty generates in memory)");
  train->add_option_function<std::string>(
      "--ae-path", [&ov](std::string v) { ov.ae_path = std::move(v); ov.ae_path_given = true; },
      "Override pretrained autoencoder path");
  add_seed(train, seed);

  auto* pred = app.add_subcommand("predict", "Roll a trained model forward on one sequence");
  std::string pred_ckpt, pred_data, pred_id, pred_mode = "prior", pred_out, pred_gif;
  pred->add_option("--checkpoint", pred_ckpt, "Checkpoint file")->required();
  pred->add_option("--data", pred_data, "Dataset directory")->required();
  pred->add_option("--id", pred_id, "Sequence id (default: first in the manifest)");
  pred->add_option("--mode", pred_mode, "Latent source: prior or posterior");
  pred->add_option("--out", pred_out, "Write predicted frames to this directory");
  pred->add_option("--gif", pred_gif, "Write an animated GIF (context + prediction)");
  add_seed(pred, seed);

  auto* eval = app.add_subcommand("evaluate", "Score prior samples against a test set");
  std::string eval_ckpt, eval_data, eval_task, eval_out = "eval";
  std::int64_t eval_samples = 5;
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval->add_option("--data", eval_data, "Dataset directory")->required();
  eval->add_option("--task", eval_task, "Evaluation task, e.g. \"10 -> 10\" (default: as trained)");
  eval->add_option("--samples", eval_samples, "Prior samples per window");
  eval->add_option("--out", eval_out, "Output directory for reports");
  add_seed(eval, seed);

  auto* rep = app.add_subcommand("report", "Print a saved metrics report");
  std::string rep_csv, rep_plots;
  rep->add_option("--csv", rep_csv, "Report CSV file")->required();
  rep->add_option("--plots", rep_plots, "Regenerate plots into this directory");
  add_seed(rep, seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) cmd_gen_data(gen_spec, gen_out, gen_count, gen_length, seed);
    else if (pre->parsed()) cmd_pretrain_ae(pre_config, pre_data, pre_steps, pre_out, seed);
    else if (train->parsed()) cmd_train(train_config, train_out, ov, seed);
    else if (pred->parsed()) cmd_predict(pred_ckpt, pred_data, pred_id, pred_mode, pred_out, pred_gif, seed);
    else if (eval->parsed()) cmd_evaluate(eval_ckpt, eval_data, eval_task, eval_samples, eval_out, seed);
    else if (rep->parsed()) cmd_report(rep_csv, rep_plots);
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::config || e.kind() == ErrorKind::invalid_spec ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
