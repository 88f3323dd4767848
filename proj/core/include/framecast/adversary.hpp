#pragma once

#include <string>
#include <vector>

#include "framecast/autograd.hpp"
#include "framecast/data.hpp"
#include "framecast/nn.hpp"

namespace framecast {

// Discriminators and the manifold guidance network: a pretrained autoencoder
// whose frozen encoder maps frames onto learned-manifold features, plus
// sequence discriminator heads over raw clips and over those features.

struct AutoencoderConfig {
  std::int64_t in_channels = 1;
  std::int64_t height = 64, width = 64;  // divisible by 4
  std::int64_t features = 8;
  std::int64_t manifold_dim = 16;
};

void validate(const AutoencoderConfig& cfg);

struct PretrainReport {
  double heldout_before = 0, heldout_after = 0;
  std::int64_t steps = 0;
};

struct Autoencoder {
  AutoencoderConfig cfg;
  ParamSet params;
  bool frozen = false;
  PretrainReport report;

  std::uint64_t digest() const { return params.value_digest(); }
};

Autoencoder make_autoencoder(const AutoencoderConfig& cfg, std::uint64_t seed);

Var encode_frame(Autoencoder& ae, const Var& frame);  // [C,H,W] -> [manifold_dim]
Var decode_frame(Autoencoder& ae, const Var& feat);   // [manifold_dim] -> [C,H,W]

// Trains by mean-squared reconstruction on all but a held-out tail slice,
// measures held-out error before and after, then freezes every parameter.
Autoencoder pretrain_autoencoder(const std::vector<Tensor>& frames, const AutoencoderConfig& cfg,
                                 std::int64_t steps, std::uint64_t seed);

// Frozen encoder applied per frame. Refuses to run before freezing: scoring
// against a still-moving manifold is a bug, not a feature.
std::vector<Var> manifold_map(Autoencoder& ae, const std::vector<Var>& frames);
Tensor manifold_map(Autoencoder& ae, const VideoSequence& seq);  // -> [T, manifold_dim]

void save_autoencoder(const Autoencoder& ae, const std::string& path);
Autoencoder load_autoencoder(const std::string& path);

// Spatiotemporal discriminator over a whole clip -> scalar in (0,1).
struct VideoHeadConfig {
  std::int64_t in_channels = 1;
  std::int64_t features = 8;
};

void add_video_head_params(ParamSet& ps, const std::string& prefix, const VideoHeadConfig& cfg,
                           RngStream* rng);
Var discriminate_video(ParamSet& ps, const std::string& prefix, const VideoHeadConfig& cfg,
                       const std::vector<Var>& frames);
double discriminate_video(ParamSet& ps, const std::string& prefix, const VideoHeadConfig& cfg,
                          const VideoSequence& seq);

// MLP head over manifold feature sequences [T, manifold_dim] -> (0,1).
struct ManifoldHeadConfig {
  std::int64_t manifold_dim = 16;
  std::int64_t hidden = 32;
};

void add_manifold_head_params(ParamSet& ps, const std::string& prefix,
                              const ManifoldHeadConfig& cfg, RngStream* rng);
Var discriminate_features(ParamSet& ps, const std::string& prefix, const ManifoldHeadConfig& cfg,
                          const std::vector<Var>& features);
double discriminate_features(ParamSet& ps, const std::string& prefix,
                             const ManifoldHeadConfig& cfg, const Tensor& features);

}  // namespace framecast
