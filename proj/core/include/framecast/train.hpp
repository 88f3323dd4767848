#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "framecast/adversary.hpp"
#include "framecast/data.hpp"
#include "framecast/generator.hpp"
#include "framecast/losses.hpp"
#include "framecast/metrics.hpp"
#include "framecast/nn.hpp"

namespace framecast {

// Three-phase pipeline: pretrain the manifold autoencoder, run alternating
// adversarial/variational updates, evaluate with prior-sampled rollouts.

struct ModelConfig {
  GeneratorConfig gen;         // owns d_z, tau, and the n -> m task shape
  LatentConfig latent;         // d_z must mirror gen.d_z
  AutoencoderConfig ae;        // frozen manifold encoder geometry
  VideoHeadConfig video_head;  // both clip discriminators
  ManifoldHeadConfig manifold_head;
  LossWeights weights;
  L1Convention l1_convention = L1Convention::mean;
  double lr_gen = 2e-4;
  double lr_disc = 2e-4;
  std::int64_t batch_size = 1;
  std::int64_t steps = 2000;
  std::int64_t ae_pretrain_steps = 400;
  std::int64_t checkpoint_every = 500;  // 0: only the final checkpoint
  std::int64_t val_every = 25;          // 0: never
  std::int64_t val_windows = 4;         // windows held out of training
  std::int64_t train_sequences = 32;    // generated when data_dir is empty
  std::int64_t sequence_len = 0;        // 0: context_len + horizon
  std::int64_t window_stride = 1;
  std::uint64_t seed = 0;
  std::string data_dir;  // dataset directory; empty generates in memory
  std::string ae_path;   // pretrained autoencoder; empty pretrains in fit
  MovingSpriteSpec data;
  // As printed, both adversarial pairs score prior-sampled futures; this
  // routes the second pair to the posterior-sampled prediction instead.
  bool vae_path_uses_posterior = false;
  bool share_dvae_weights = false;
};

void validate(const ModelConfig& cfg);

std::string model_config_to_json(const ModelConfig& cfg);
// Unknown or ill-typed fields fail with ErrorKind::config naming the field;
// absent fields keep their defaults.
ModelConfig model_config_from_json(const std::string& text);
ModelConfig load_model_config(const std::string& path);

struct TrainState {
  ModelConfig cfg;
  ParamSet model;  // generator ("gen.") and latent encoder ("latent.")
  ParamSet d, dvae, dm1, dm2;
  Autoencoder ae;  // must be frozen before train_step runs
  Adam opt_model, opt_d, opt_dvae, opt_dm1, opt_dm2;
  RngStream order_rng;  // batch sampling
  RngStream noise_rng;  // latent noise, prior draws
  std::int64_t step = 0;

  explicit TrainState(const ModelConfig& c)
      : cfg(c),
        opt_model({c.lr_gen, 0.5, 0.999, 1e-8}),
        opt_d({c.lr_disc, 0.5, 0.999, 1e-8}),
        opt_dvae({c.lr_disc, 0.5, 0.999, 1e-8}),
        opt_dm1({c.lr_disc, 0.5, 0.999, 1e-8}),
        opt_dm2({c.lr_disc, 0.5, 0.999, 1e-8}) {}
};

// Fresh parameter groups from the config seed. The autoencoder slot starts
// unfrozen and empty; fit() fills it (or load one explicitly).
TrainState init_train_state(const ModelConfig& cfg);

// One alternating update: discriminator pairs on (real, sampled fake) clips,
// then generator + latent encoder on the combined objective. Returns the
// generator-side breakdown. Requires a frozen autoencoder and a non-empty
// batch of context/target windows matching the configured task.
LossBreakdown train_step(TrainState& st, const std::vector<Window>& batch);

// Validation reconstruction error: mean L1 between prior-sampled predictions
// (fixed seed) and targets.
double validation_l1(TrainState& st, const std::vector<Window>& windows);

struct FitResult {
  std::string checkpoint_path;  // final state
  std::string train_log_path;   // per-step loss CSV
  std::string val_log_path;     // "step,val_l1" CSV (empty when never logged)
  std::string ae_path;          // autoencoder actually used
};

// Full run: dataset assembly, autoencoder pretraining (unless given), the
// training loop with CSV logs and periodic checkpoints, final checkpoint.
// resume_from restarts from a saved checkpoint whose config must match in
// everything but the step budget.
FitResult fit(const ModelConfig& cfg, const std::string& out_dir,
              const std::string& resume_from = "");

// Dataset plumbing shared by fit and the command-line tools.
std::vector<VideoSequence> load_dataset(const std::string& dir);
std::vector<VideoSequence> generate_dataset(const MovingSpriteSpec& spec, std::int64_t length,
                                            std::int64_t count);
std::vector<Window> dataset_windows(const std::vector<VideoSequence>& seqs,
                                    const WindowSpec& spec);

struct EvalOptions {
  std::int64_t samples = 5;  // prior draws per window
  std::uint64_t seed = 0;
  std::string task = "10 -> 10";
};

struct EvalRun {
  MetricsReport best;  // per window: best value per metric across samples
  MetricsReport mean;  // per window: mean across samples
};

// Stochastic-prediction protocol: score samples_per_input prior rollouts per
// test window. Sample seeds depend only on (seed, window, sample index), so
// a larger sample budget extends, never reshuffles, a smaller one.
EvalRun evaluate_run(TrainState& st, const std::vector<Window>& test_windows,
                     const EvalOptions& opt);

}  // namespace framecast
