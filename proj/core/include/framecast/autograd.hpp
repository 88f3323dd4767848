#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "framecast/tensor.hpp"

namespace framecast {

// Reverse-mode autodiff over Tensor. Every op records its parents and an
// adjoint function; backward() replays the tape in reverse creation order.
// Graphs are built per forward pass and freed when the last Var goes away.

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::uint64_t id = 0;
  std::vector<Var> parents;
  std::function<void(Node&)> backprop;  // pulls this->grad into parents

  Tensor& ensure_grad();
  void accumulate(const Tensor& g);
};

// Gradient recording is on by default; scope a NoGradGuard around pure
// inference to skip tape construction.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

Var constant(Tensor value);
Var leaf(Tensor value, bool requires_grad);

// Runs reverse accumulation from a scalar root (shape [1]).
void backward(const Var& root);

// --- elementwise ---
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& a);
Var affine(const Var& a, double scale, double shift);  // scale*a + shift
inline Var scale(const Var& a, double s) { return affine(a, s, 0.0); }
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var abs(const Var& a);
Var leaky_relu(const Var& a, double slope = 0.2);
Var clamp(const Var& a, double lo, double hi);

// --- reductions / scalars ---
Var sum(const Var& a);   // -> [1]
Var mean(const Var& a);  // -> [1]
Var dot(const Var& a, const Var& b);
Var add_all(const std::vector<Var>& xs);

// --- shape ---
Var reshape(const Var& a, Shape shape);
Var concat_channels(const std::vector<Var>& xs);  // along dim 0
Var slice_channels(const Var& x, std::int64_t start, std::int64_t count);  // along dim 0
Var stack_time(const std::vector<Var>& xs);  // L maps [C,H,W] -> [C,L,H,W]
Var spatial_broadcast(const Var& v, std::int64_t height, std::int64_t width);  // [d] -> [d,H,W]
Var stack_scalars(const std::vector<Var>& xs);    // L scalars -> [L]
Var detach(const Var& a);

// --- neural net ---
Var linear(const Var& x, const Var& weight, const Var& bias);  // [n],[m,n],[m] -> [m]
Var conv3d(const Var& x, const Var& kernel, const Var& bias, std::array<int, 3> stride,
           std::array<int, 3> pad);  // [Ci,T,H,W],[Co,Ci,kt,kh,kw],[Co]
Var conv2d(const Var& x, const Var& kernel, const Var& bias, std::array<int, 2> stride,
           std::array<int, 2> pad);  // [Ci,H,W],[Co,Ci,kh,kw],[Co]
Var avg_pool2(const Var& x);             // [C,H,W] -> [C,H/2,W/2]
Var upsample2_bilinear(const Var& x);    // [C,H,W] -> [C,2H,2W]
Var global_mean_channels(const Var& x);  // [C,...] -> [C]
Var channel_standardize(const Var& x, const Var& gain, const Var& offset, double eps = 1e-5);
Var softmax(const Var& x);  // [L] -> [L]
Var weighted_sum(const Var& weights, const std::vector<Var>& maps);  // sum_i w[i]*maps[i]

}  // namespace framecast
