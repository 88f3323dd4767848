#include "framecast/losses.hpp"

#include <cmath>
#include <cstdio>

#include "framecast/error.hpp"

namespace framecast {

namespace {

double clamp_score(double s) { return std::min(std::max(s, kScoreEps), 1.0 - kScoreEps); }

Var clamp_score(const Var& s) { return clamp(s, kScoreEps, 1.0 - kScoreEps); }

void check_weights(const LossWeights& w) {
  if (w.l1 < 0 || w.kl < 0 || w.mggan1 < 0 || w.mggan2 < 0)
    fail(ErrorKind::config, "loss weights must be nonnegative");
}

}  // namespace

double l1_loss(const VideoSequence& pred, const VideoSequence& target, L1Convention conv) {
  require_same_shape(pred.frames, target.frames, "l1 sequences");
  double acc = 0;
  for (int64_t i = 0; i < pred.frames.size(); ++i)
    acc += std::abs(pred.frames.data()[i] - target.frames.data()[i]);
  return conv == L1Convention::mean ? acc / static_cast<double>(pred.frames.size()) : acc;
}

Var l1_loss(const std::vector<Var>& pred_frames, const VideoSequence& target, L1Convention conv) {
  if (static_cast<int64_t>(pred_frames.size()) != target.length())
    fail(ErrorKind::shape_mismatch, "l1 prediction has " + std::to_string(pred_frames.size()) +
                                        " frames, target has " + std::to_string(target.length()));
  if (pred_frames.empty()) fail(ErrorKind::shape_mismatch, "l1 over zero frames");
  std::vector<Var> terms;
  int64_t total = 0;
  for (size_t t = 0; t < pred_frames.size(); ++t) {
    Tensor tgt = frame_chw(target, static_cast<int64_t>(t));
    require_same_shape(pred_frames[t]->value, tgt, "l1 frames");
    terms.push_back(sum(abs(sub(pred_frames[t], constant(tgt)))));
    total += tgt.size();
  }
  Var s = add_all(terms);
  return conv == L1Convention::mean ? scale(s, 1.0 / static_cast<double>(total)) : s;
}

double kl_loss(const std::vector<GaussianParams>& posteriors) {
  if (posteriors.empty()) fail(ErrorKind::misuse, "kl_loss needs at least one posterior");
  double acc = 0;
  for (const auto& g : posteriors) acc += kl_to_prior(g);
  return acc / static_cast<double>(posteriors.size());
}

Var kl_loss(const std::vector<GaussianVars>& posteriors) {
  if (posteriors.empty()) fail(ErrorKind::misuse, "kl_loss needs at least one posterior");
  std::vector<Var> terms;
  for (const auto& g : posteriors) terms.push_back(kl_to_prior(g));
  return scale(add_all(terms), 1.0 / static_cast<double>(posteriors.size()));
}

double d_objective(double real_d, double real_dm, double fake_d, double fake_dm) {
  return std::log(clamp_score(real_d)) + std::log(clamp_score(real_dm)) +
         std::log(1.0 - clamp_score(fake_d)) + std::log(1.0 - clamp_score(fake_dm));
}

Var d_objective(const Var& real_d, const Var& real_dm, const Var& fake_d, const Var& fake_dm) {
  Var lr = add(log(clamp_score(real_d)), log(clamp_score(real_dm)));
  Var lf = add(log(affine(clamp_score(fake_d), -1.0, 1.0)),
               log(affine(clamp_score(fake_dm), -1.0, 1.0)));
  return add(lr, lf);
}

double g_objective(double fake_d, double fake_dm) {
  return -std::log(clamp_score(fake_d)) - std::log(clamp_score(fake_dm));
}

Var g_objective(const Var& fake_d, const Var& fake_dm) {
  return neg(add(log(clamp_score(fake_d)), log(clamp_score(fake_dm))));
}

std::pair<double, double> mggan_loss(ParamSet& d_head, const std::string& d_prefix,
                                     const VideoHeadConfig& d_cfg, ParamSet& m_head,
                                     const std::string& m_prefix, const ManifoldHeadConfig& m_cfg,
                                     Autoencoder& enc, const VideoSequence& real,
                                     const VideoSequence& fake) {
  require_same_shape(real.frames, fake.frames, "mggan clips");
  double rd = discriminate_video(d_head, d_prefix, d_cfg, real);
  double fd = discriminate_video(d_head, d_prefix, d_cfg, fake);
  double rm = discriminate_features(m_head, m_prefix, m_cfg, manifold_map(enc, real));
  double fm = discriminate_features(m_head, m_prefix, m_cfg, manifold_map(enc, fake));
  return {d_objective(rd, rm, fd, fm), g_objective(fd, fm)};
}

LossBreakdown combined_loss(double l1, double kl, double mggan1, double mggan2,
                            const LossWeights& weights) {
  check_weights(weights);
  LossBreakdown b;
  b.l1 = l1;
  b.kl = kl;
  b.mggan1 = mggan1;
  b.mggan2 = mggan2;
  b.weights = weights;
  b.combined =
      weights.l1 * l1 + weights.kl * kl + weights.mggan1 * mggan1 + weights.mggan2 * mggan2;
  return b;
}

Var combined_loss(const Var& l1, const Var& kl, const Var& mggan1, const Var& mggan2,
                  const LossWeights& weights) {
  check_weights(weights);
  return add(add(scale(l1, weights.l1), scale(kl, weights.kl)),
             add(scale(mggan1, weights.mggan1), scale(mggan2, weights.mggan2)));
}

std::string loss_csv_header() { return "step,l1,kl,mggan1,mggan2,combined"; }

std::string loss_csv_row(std::int64_t step, const LossBreakdown& b) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%lld,%.12g,%.12g,%.12g,%.12g,%.12g",
                static_cast<long long>(step), b.l1, b.kl, b.mggan1, b.mggan2, b.combined);
  return buf;
}

}  // namespace framecast
