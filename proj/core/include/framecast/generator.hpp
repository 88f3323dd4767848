#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "framecast/data.hpp"
#include "framecast/e3d.hpp"
#include "framecast/latent.hpp"
#include "framecast/nn.hpp"

namespace framecast {

// Multi-scale autoregressive frame generator. Each scale embeds the
// latent-conditioned input at half its resolution, advances a recall cell,
// and emits either a base prediction (coarsest scale, sigmoid) or a residual
// refinement of the upsampled coarser estimate. Only the finest scale clamps
// to [0,1].

struct GeneratorConfig {
  std::int64_t n_scales = 3;  // 3 suits 64x64, 2 suits 32x32
  std::int64_t channels = 8;  // cell width at every scale
  std::int64_t in_channels = 1;
  std::int64_t context_len = 10;
  std::int64_t horizon = 10;
  std::int64_t d_z = 8;
  std::int64_t tau = 5;
  std::int64_t temporal_window = 2;
  std::int64_t kernel = 3;
};

void validate(const GeneratorConfig& cfg);

using GenState = std::vector<RecallState>;  // one per scale, coarsest first

void add_generator_params(ParamSet& ps, const std::string& prefix, const GeneratorConfig& cfg,
                          RngStream* rng);
GenState init_gen_state(const GeneratorConfig& cfg, std::int64_t height, std::int64_t width);

// Bilinear-upsamples the coarse estimate and adds the residual on top; the
// finest scale additionally clamps to [0,1].
Var combine_scales(const Var& coarse, const Var& residual, bool final_scale);
Tensor combine_scales(const Tensor& coarse, const Tensor& residual, bool final_scale);

// Advances every scale one step on the given frame and latent. Returns the
// finest emission, or a null Var when emit is false (warm-up: only the
// recurrent state moves). scale_frames, when given, receives this step's
// emission at every scale, coarsest first.
Var rollout_step(ParamSet& ps, const std::string& prefix, const GeneratorConfig& cfg,
                 GenState& state, const Var& frame, const Var& z, bool emit = true,
                 std::vector<Var>* scale_frames = nullptr);

// Warms the state up on all but the last context frame, then emits
// latents.size() frames autoregressively starting from the last context
// frame. Taped when gradients are enabled. scale_frames[s][j] is scale s's
// emission at step j.
std::vector<Var> rollout_frames(ParamSet& ps, const std::string& prefix,
                                const GeneratorConfig& cfg, const VideoSequence& context,
                                const std::vector<Var>& latents,
                                std::vector<std::vector<Var>>* scale_frames = nullptr);

VideoSequence rollout(ParamSet& ps, const std::string& prefix, const GeneratorConfig& cfg,
                      const VideoSequence& context, const std::vector<Tensor>& latents);

enum class PredictMode { prior, posterior };

// Draws one latent per future step — from the fixed prior, or from the
// posterior encoded over adjacent true frames — then rolls out. Posterior
// mode requires targets of exactly horizon frames.
VideoSequence predict(ParamSet& ps, const GeneratorConfig& gcfg, const LatentConfig& lcfg,
                      const VideoSequence& context, PredictMode mode, std::uint64_t seed,
                      const VideoSequence* targets = nullptr,
                      const std::string& gen_prefix = "gen.",
                      const std::string& latent_prefix = "latent.");

}  // namespace framecast
