#include "framecast/e3d.hpp"

#include <cmath>

#include "framecast/error.hpp"

namespace framecast {

void validate(const E3DConfig& cfg) {
  if (cfg.in_channels < 1 || cfg.channels < 1) fail(ErrorKind::config, "e3d channels must be positive");
  if (cfg.tau < 1) fail(ErrorKind::config, "e3d bank capacity tau must be at least 1");
  if (cfg.temporal_window < 1) fail(ErrorKind::config, "e3d temporal window must be at least 1");
  if (cfg.kernel < 1 || cfg.kernel % 2 == 0) fail(ErrorKind::config, "e3d kernel must be odd");
}

void add_e3d_cell_params(ParamSet& ps, const std::string& prefix, const E3DConfig& cfg,
                         RngStream* rng) {
  validate(cfg);
  const int64_t k = cfg.channels, ci = cfg.in_channels + cfg.channels;
  ps.create(prefix + ".gates.w", {4 * k, ci, cfg.temporal_window, cfg.kernel, cfg.kernel},
            Init::fanin_uniform, rng);
  ps.create(prefix + ".gates.b", {4 * k}, Init::zeros);
  ps.create(prefix + ".query.w", {k, k, 1, 1}, Init::fanin_uniform, rng);
  ps.create(prefix + ".query.b", {k}, Init::zeros);
  ps.create(prefix + ".key.w", {k, k, 1, 1}, Init::fanin_uniform, rng);
  ps.create(prefix + ".key.b", {k}, Init::zeros);
  ps.create(prefix + ".norm.gain", {k}, Init::ones);
  ps.create(prefix + ".norm.offset", {k}, Init::zeros);
}

RecallState init_recall_state(const E3DConfig& cfg, int64_t h, int64_t w) {
  validate(cfg);
  RecallState s;
  s.hidden = constant(Tensor::zeros({cfg.channels, h, w}));
  s.cell = constant(Tensor::zeros({cfg.channels, h, w}));
  return s;
}

namespace {

// Shared attention core: logits from (query . key_j)/sqrt(d), weights via
// softmax, result sums the raw values (keys may be projections of them).
Var attend(const Var& query, const std::vector<Var>& keys, const std::vector<Var>& values) {
  const double scale_by = 1.0 / std::sqrt(static_cast<double>(query->value.size()));
  std::vector<Var> logits;
  logits.reserve(keys.size());
  for (const auto& key : keys) logits.push_back(scale(dot(query, key), scale_by));
  Var weights = softmax(stack_scalars(logits));
  return weighted_sum(weights, values);
}

}  // namespace

std::pair<Var, RecallState> cell_step(ParamSet& ps, const std::string& prefix,
                                      const E3DConfig& cfg, const Var& input,
                                      const RecallState& state) {
  validate(cfg);
  if (input->value.ndim() != 3 || input->value.dim(0) != cfg.in_channels)
    fail(ErrorKind::config, "cell input must be [" + std::to_string(cfg.in_channels) +
                                ",H,W], got channels " + std::to_string(input->value.dim(0)));
  const int64_t k = cfg.channels;
  const int64_t h = input->value.dim(1), w = input->value.dim(2);
  auto p = [&](const std::string& n) { return ps.require(prefix + "." + n).var(); };

  Var hidden = state.hidden ? state.hidden : constant(Tensor::zeros({k, h, w}));

  // depth axis: the last temporal_window inputs (zero-padded at the start of
  // a rollout), with the hidden map repeated alongside
  std::vector<Var> in_stack(state.prev_inputs);
  while (static_cast<int64_t>(in_stack.size()) < cfg.temporal_window - 1)
    in_stack.insert(in_stack.begin(), constant(Tensor::zeros(input->value.shape())));
  in_stack.push_back(input);
  std::vector<Var> hid_stack(cfg.temporal_window, hidden);
  Var cat = concat_channels({stack_time(in_stack), stack_time(hid_stack)});

  const int pad = static_cast<int>(cfg.kernel / 2);
  Var gates = conv3d(cat, p("gates.w"), p("gates.b"), {1, 1, 1}, {0, pad, pad});
  gates = reshape(gates, {4 * k, h, w});
  Var i_gate = sigmoid(slice_channels(gates, 0, k));
  Var r_gate = sigmoid(slice_channels(gates, k, k));  // recall/forget gate: the query source
  Var o_gate = sigmoid(slice_channels(gates, 2 * k, k));
  Var cand = tanh(slice_channels(gates, 3 * k, k));

  Var recalled;
  if (state.bank.empty()) {
    recalled = constant(Tensor::zeros({k, h, w}));
  } else {
    Var query = conv2d(r_gate, p("query.w"), p("query.b"), {1, 1}, {0, 0});
    std::vector<Var> keys;
    keys.reserve(state.bank.size());
    for (const auto& entry : state.bank)
      keys.push_back(conv2d(entry, p("key.w"), p("key.b"), {1, 1}, {0, 0}));
    recalled = attend(query, keys, state.bank);
  }
  Var cell = add(mul(i_gate, cand),
                 channel_standardize(recalled, p("norm.gain"), p("norm.offset")));
  Var out = mul(o_gate, tanh(cell));

  RecallState next;
  next.hidden = out;
  next.cell = cell;
  next.bank = state.bank;
  next.bank.push_back(cell);
  while (static_cast<int64_t>(next.bank.size()) > cfg.tau) next.bank.erase(next.bank.begin());
  next.prev_inputs = state.prev_inputs;
  next.prev_inputs.push_back(input);
  while (static_cast<int64_t>(next.prev_inputs.size()) > cfg.temporal_window - 1)
    next.prev_inputs.erase(next.prev_inputs.begin());
  return {out, next};
}

std::vector<double> recall_weights(const Tensor& query, const std::vector<Tensor>& bank) {
  std::vector<double> logits;
  logits.reserve(bank.size());
  const double scale_by = 1.0 / std::sqrt(static_cast<double>(query.size()));
  for (const auto& entry : bank) {
    require_same_shape(query, entry, "recall bank entry");
    double acc = 0;
    for (int64_t i = 0; i < query.size(); ++i) acc += query.data()[i] * entry.data()[i];
    logits.push_back(acc * scale_by);
  }
  double hi = -1e300;
  for (double l : logits) hi = std::max(hi, l);
  double z = 0;
  for (double& l : logits) {
    l = std::exp(l - hi);
    z += l;
  }
  for (double& l : logits) l /= z;
  return logits;
}

Tensor recall_attend(const Tensor& query, const std::vector<Tensor>& bank) {
  Tensor out = Tensor::zeros(query.shape());
  if (bank.empty()) return out;
  std::vector<double> weights = recall_weights(query, bank);
  for (size_t j = 0; j < bank.size(); ++j)
    for (int64_t i = 0; i < out.size(); ++i) out.data()[i] += weights[j] * bank[j].data()[i];
  return out;
}

Var recall_attend(const Var& query, const std::vector<Var>& bank) {
  if (bank.empty()) return constant(Tensor::zeros(query->value.shape()));
  return attend(query, bank, bank);
}

void add_conv_lstm_params(ParamSet& ps, const std::string& prefix, const E3DConfig& cfg,
                          RngStream* rng) {
  validate(cfg);
  const int64_t k = cfg.channels;
  ps.create(prefix + ".gates.w", {4 * k, cfg.in_channels + k, cfg.kernel, cfg.kernel},
            Init::fanin_uniform, rng);
  ps.create(prefix + ".gates.b", {4 * k}, Init::zeros);
}

ConvLstmState init_conv_lstm_state(const E3DConfig& cfg, int64_t h, int64_t w) {
  validate(cfg);
  ConvLstmState s;
  s.hidden = constant(Tensor::zeros({cfg.channels, h, w}));
  s.cell = constant(Tensor::zeros({cfg.channels, h, w}));
  return s;
}

std::pair<Var, ConvLstmState> conv_lstm_step(ParamSet& ps, const std::string& prefix,
                                             const E3DConfig& cfg, const Var& input,
                                             const ConvLstmState& state) {
  validate(cfg);
  if (input->value.ndim() != 3 || input->value.dim(0) != cfg.in_channels)
    fail(ErrorKind::config, "cell input must be [" + std::to_string(cfg.in_channels) +
                                ",H,W], got channels " + std::to_string(input->value.dim(0)));
  const int64_t k = cfg.channels;
  const int64_t h = input->value.dim(1), w = input->value.dim(2);
  auto p = [&](const std::string& n) { return ps.require(prefix + "." + n).var(); };
  Var hidden = state.hidden ? state.hidden : constant(Tensor::zeros({k, h, w}));
  Var cell_in = state.cell ? state.cell : constant(Tensor::zeros({k, h, w}));

  const int pad = static_cast<int>(cfg.kernel / 2);
  Var gates = conv2d(concat_channels({input, hidden}), p("gates.w"), p("gates.b"), {1, 1},
                     {pad, pad});
  Var i_gate = sigmoid(slice_channels(gates, 0, k));
  Var f_gate = sigmoid(slice_channels(gates, k, k));
  Var o_gate = sigmoid(slice_channels(gates, 2 * k, k));
  Var cand = tanh(slice_channels(gates, 3 * k, k));

  Var cell = add(mul(f_gate, cell_in), mul(i_gate, cand));
  Var out = mul(o_gate, tanh(cell));
  return {out, ConvLstmState{out, cell}};
}

}  // namespace framecast
