#pragma once

#include "framecast/autograd.hpp"
#include "framecast/nn.hpp"
#include "framecast/tensor.hpp"

namespace framecast {

// Variational pathway: a convolutional posterior encoder over adjacent frame
// pairs, reparameterized sampling, and KL against a fixed standard normal.

struct LatentConfig {
  std::int64_t d_z = 8;
  std::int64_t in_channels = 1;
  std::int64_t features = 16;
};

struct GaussianParams {
  Tensor mean, logvar;  // [d_z] each; logvar lives in [-10, 10]
};

struct GaussianVars {
  Var mean, logvar;
};

void add_latent_encoder_params(ParamSet& ps, const std::string& prefix, const LatentConfig& cfg,
                               RngStream* rng);

// Encodes the channel-stacked pair (frame_a, frame_b), each [C,H,W], to the
// posterior over the latent that drives the transition a -> b.
GaussianVars encode_pair(ParamSet& ps, const std::string& prefix, const LatentConfig& cfg,
                         const Var& frame_a, const Var& frame_b);
GaussianParams encode_pair(ParamSet& ps, const std::string& prefix, const LatentConfig& cfg,
                           const Tensor& frame_a, const Tensor& frame_b);

// z = mean + exp(logvar/2) * noise
Var sample(const GaussianVars& g, const Tensor& noise);
Tensor sample(const GaussianParams& g, const Tensor& noise);

// Closed-form KL(N(mean, diag exp(logvar)) || N(0, I)), summed over d_z.
Var kl_to_prior(const GaussianVars& g);
double kl_to_prior(const GaussianParams& g);

GaussianParams standard_prior(std::int64_t d_z);

}  // namespace framecast
