#pragma once

#include <utility>
#include <vector>

#include "framecast/autograd.hpp"
#include "framecast/nn.hpp"

namespace framecast {

// Recurrent 3D-convolutional cell with a bounded bank of past cell states
// revisited through attention ("recall"), plus a plain convolutional LSTM
// as the ablation baseline.

struct E3DConfig {
  std::int64_t in_channels = 1;     // K_in
  std::int64_t channels = 8;        // K
  std::int64_t tau = 5;             // bank capacity
  std::int64_t temporal_window = 2; // inputs stacked along the depth axis
  std::int64_t kernel = 3;          // spatial kernel, odd
};

void validate(const E3DConfig& cfg);

struct RecallState {
  Var hidden, cell;              // [K,H,W]
  std::vector<Var> bank;         // oldest first, length <= tau
  std::vector<Var> prev_inputs;  // last temporal_window-1 inputs [K_in,H,W]
};

void add_e3d_cell_params(ParamSet& ps, const std::string& prefix, const E3DConfig& cfg,
                         RngStream* rng);
RecallState init_recall_state(const E3DConfig& cfg, std::int64_t h, std::int64_t w);

// One recurrent update. cell' = i*g + standardize(attend(query, bank));
// hidden' = o * tanh(cell'); the new cell is appended to the bank with
// strictly oldest-first eviction. Output is hidden'.
std::pair<Var, RecallState> cell_step(ParamSet& ps, const std::string& prefix,
                                      const E3DConfig& cfg, const Var& input,
                                      const RecallState& state);

// Parameter-free attention primitive: softmax over scaled dot products of the
// flattened query against each flattened bank entry; empty bank -> zero map.
std::vector<double> recall_weights(const Tensor& query, const std::vector<Tensor>& bank);
Tensor recall_attend(const Tensor& query, const std::vector<Tensor>& bank);
Var recall_attend(const Var& query, const std::vector<Var>& bank);

struct ConvLstmState {
  Var hidden, cell;  // [K,H,W]
};

void add_conv_lstm_params(ParamSet& ps, const std::string& prefix, const E3DConfig& cfg,
                          RngStream* rng);
ConvLstmState init_conv_lstm_state(const E3DConfig& cfg, std::int64_t h, std::int64_t w);
std::pair<Var, ConvLstmState> conv_lstm_step(ParamSet& ps, const std::string& prefix,
                                             const E3DConfig& cfg, const Var& input,
                                             const ConvLstmState& state);

}  // namespace framecast
