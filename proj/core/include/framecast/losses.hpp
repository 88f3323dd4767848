#pragma once

#include <string>
#include <vector>

#include "framecast/adversary.hpp"
#include "framecast/autograd.hpp"
#include "framecast/data.hpp"
#include "framecast/latent.hpp"

namespace framecast {

// Reconstruction, KL, and adversarial objectives plus their weighted sum.

enum class L1Convention { mean, sum };

struct LossWeights {
  double l1 = 0.25;
  double kl = 0.2;
  double mggan1 = 0.3;
  double mggan2 = 0.3;
};

struct LossBreakdown {
  double l1 = 0, kl = 0, mggan1 = 0, mggan2 = 0;
  double combined = 0;
  LossWeights weights;
};

double l1_loss(const VideoSequence& pred, const VideoSequence& target,
               L1Convention conv = L1Convention::mean);
// Tape form over per-timestep [C,H,W] frames against a target clip.
Var l1_loss(const std::vector<Var>& pred_frames, const VideoSequence& target,
            L1Convention conv = L1Convention::mean);

double kl_loss(const std::vector<GaussianParams>& posteriors);
Var kl_loss(const std::vector<GaussianVars>& posteriors);

// Adversarial objectives over already-computed head scores in (0,1).
// Scores are clamped to [eps, 1-eps] before the logs; natural log throughout.
inline constexpr double kScoreEps = 1e-7;

// log rd + log rm + log(1-fd) + log(1-fm): what the discriminator pair maximizes.
double d_objective(double real_d, double real_dm, double fake_d, double fake_dm);
Var d_objective(const Var& real_d, const Var& real_dm, const Var& fake_d, const Var& fake_dm);
// Non-saturating generator side: -log fd - log fm.
double g_objective(double fake_d, double fake_dm);
Var g_objective(const Var& fake_d, const Var& fake_dm);

// Full adversarial pair over one (real, fake) clip: a video head on raw
// pixels plus a manifold head on frozen-encoder features. Returns
// (d_objective, g_objective).
std::pair<double, double> mggan_loss(ParamSet& d_head, const std::string& d_prefix,
                                     const VideoHeadConfig& d_cfg, ParamSet& m_head,
                                     const std::string& m_prefix, const ManifoldHeadConfig& m_cfg,
                                     Autoencoder& enc, const VideoSequence& real,
                                     const VideoSequence& fake);

LossBreakdown combined_loss(double l1, double kl, double mggan1, double mggan2,
                            const LossWeights& weights = {});
Var combined_loss(const Var& l1, const Var& kl, const Var& mggan1, const Var& mggan2,
                  const LossWeights& weights = {});

std::string loss_csv_header();
std::string loss_csv_row(std::int64_t step, const LossBreakdown& b);

}  // namespace framecast
