#include "framecast/autograd.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>
#include <utility>

namespace framecast {

namespace {

std::atomic<std::uint64_t> g_next_id{1};
thread_local bool g_grad_enabled = true;

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;
using MapV = Eigen::Map<Eigen::VectorXd>;
using MapCV = Eigen::Map<const Eigen::VectorXd>;

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents)
      if (p->requires_grad) needs = true;
  }
  if (needs) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return n;
}

void push(const Var& p, const Tensor& g) {
  if (p->requires_grad) p->accumulate(g);
}

}  // namespace

Tensor& Node::ensure_grad() {
  if (grad.empty() && !value.shape().empty()) grad = Tensor::zeros(value.shape());
  if (grad.empty()) grad = Tensor::zeros(Shape{});
  return grad;
}

void Node::accumulate(const Tensor& g) { ensure_grad().add_(g); }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : saved_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = saved_; }

Var constant(Tensor value) { return leaf(std::move(value), false); }

Var leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  n->requires_grad = requires_grad && g_grad_enabled;
  return n;
}

void backward(const Var& root) {
  if (root->value.size() != 1) fail(ErrorKind::shape_mismatch, "backward() root must be a scalar");
  if (!root->requires_grad) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents)
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->id > b->id; });

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (Node* n : order) {
    if (n->grad.empty()) continue;  // not on a path that received gradient
    if (n->backprop) n->backprop(*n);
  }
}

// ---------------------------------------------------------------------------
// elementwise

Var add(const Var& a, const Var& b) {
  require_same_shape(a->value, b->value, "add");
  Tensor out = a->value;
  out.add_(b->value);
  return make_node(std::move(out), {a, b}, [](Node& n) {
    push(n.parents[0], n.grad);
    push(n.parents[1], n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a->value, b->value, "sub");
  Tensor out = a->value;
  out.add_(b->value, -1.0);
  return make_node(std::move(out), {a, b}, [](Node& n) {
    push(n.parents[0], n.grad);
    if (n.parents[1]->requires_grad) {
      Tensor g = n.grad;
      g.scale_(-1.0);
      n.parents[1]->accumulate(g);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a->value, b->value, "mul");
  Tensor out(a->value.shape());
  const double* pa = a->value.data();
  const double* pb = b->value.data();
  double* po = out.data();
  for (std::int64_t i = 0; i < out.size(); ++i) po[i] = pa[i] * pb[i];
  return make_node(std::move(out), {a, b}, [](Node& n) {
    const double* g = n.grad.data();
    const std::int64_t sz = n.grad.size();
    if (n.parents[0]->requires_grad) {
      Tensor da(n.grad.shape());
      const double* vb = n.parents[1]->value.data();
      for (std::int64_t i = 0; i < sz; ++i) da[i] = g[i] * vb[i];
      n.parents[0]->accumulate(da);
    }
    if (n.parents[1]->requires_grad) {
      Tensor db(n.grad.shape());
      const double* va = n.parents[0]->value.data();
      for (std::int64_t i = 0; i < sz; ++i) db[i] = g[i] * va[i];
      n.parents[1]->accumulate(db);
    }
  });
}

Var neg(const Var& a) { return affine(a, -1.0, 0.0); }

Var affine(const Var& a, double s, double shift) {
  Tensor out(a->value.shape());
  const double* pa = a->value.data();
  double* po = out.data();
  for (std::int64_t i = 0; i < out.size(); ++i) po[i] = s * pa[i] + shift;
  return make_node(std::move(out), {a}, [s](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor da = n.grad;
    da.scale_(s);
    n.parents[0]->accumulate(da);
  });
}

namespace {

template <typename Fwd, typename Bwd>
Var unary_op(const Var& a, Fwd fwd, Bwd bwd_from_in_out) {
  Tensor out(a->value.shape());
  const double* pa = a->value.data();
  double* po = out.data();
  for (std::int64_t i = 0; i < out.size(); ++i) po[i] = fwd(pa[i]);
  return make_node(std::move(out), {a}, [bwd_from_in_out](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor da(n.grad.shape());
    const double* g = n.grad.data();
    const double* x = n.parents[0]->value.data();
    const double* y = n.value.data();
    for (std::int64_t i = 0; i < da.size(); ++i) da[i] = g[i] * bwd_from_in_out(x[i], y[i]);
    n.parents[0]->accumulate(da);
  });
}

}  // namespace

Var sigmoid(const Var& a) {
  return unary_op(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& a) {
  return unary_op(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var exp(const Var& a) {
  return unary_op(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary_op(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var abs(const Var& a) {
  return unary_op(
      a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var leaky_relu(const Var& a, double slope) {
  return unary_op(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary_op(
      a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// reductions

Var sum(const Var& a) {
  double s = 0.0;
  const double* pa = a->value.data();
  for (std::int64_t i = 0; i < a->value.size(); ++i) s += pa[i];
  return make_node(Tensor::scalar(s), {a}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor da = Tensor::full(n.parents[0]->value.shape(), n.grad[0]);
    n.parents[0]->accumulate(da);
  });
}

Var mean(const Var& a) {
  if (a->value.size() == 0) fail(ErrorKind::shape_mismatch, "mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a->value.size()));
}

Var dot(const Var& a, const Var& b) {
  require_same_shape(a->value, b->value, "dot");
  double s = 0.0;
  const double* pa = a->value.data();
  const double* pb = b->value.data();
  for (std::int64_t i = 0; i < a->value.size(); ++i) s += pa[i] * pb[i];
  return make_node(Tensor::scalar(s), {a, b}, [](Node& n) {
    double g = n.grad[0];
    if (n.parents[0]->requires_grad) {
      Tensor da = n.parents[1]->value;
      da.scale_(g);
      n.parents[0]->accumulate(da);
    }
    if (n.parents[1]->requires_grad) {
      Tensor db = n.parents[0]->value;
      db.scale_(g);
      n.parents[1]->accumulate(db);
    }
  });
}

Var add_all(const std::vector<Var>& xs) {
  if (xs.empty()) fail(ErrorKind::shape_mismatch, "add_all of no tensors");
  Tensor out = xs[0]->value;
  for (std::size_t i = 1; i < xs.size(); ++i) out.add_(xs[i]->value);
  return make_node(std::move(out), xs, [](Node& n) {
    for (auto& p : n.parents) push(p, n.grad);
  });
}

// ---------------------------------------------------------------------------
// shape

Var reshape(const Var& a, Shape shape) {
  Tensor out = a->value.reshaped(std::move(shape));
  return make_node(std::move(out), {a}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    n.parents[0]->accumulate(n.grad.reshaped(n.parents[0]->value.shape()));
  });
}

Var concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) fail(ErrorKind::shape_mismatch, "concat of no tensors");
  Shape rest(xs[0]->value.shape().begin() + 1, xs[0]->value.shape().end());
  std::int64_t total = 0;
  for (const auto& x : xs) {
    Shape r(x->value.shape().begin() + 1, x->value.shape().end());
    if (r != rest) fail(ErrorKind::shape_mismatch, "concat_channels: trailing dims differ");
    total += x->value.dim(0);
  }
  Shape out_shape = {total};
  out_shape.insert(out_shape.end(), rest.begin(), rest.end());
  Tensor out(out_shape);
  double* po = out.data();
  for (const auto& x : xs) {
    std::copy(x->value.data(), x->value.data() + x->value.size(), po);
    po += x->value.size();
  }
  return make_node(std::move(out), xs, [](Node& n) {
    const double* g = n.grad.data();
    for (auto& p : n.parents) {
      if (p->requires_grad) {
        Tensor dp(p->value.shape());
        std::copy(g, g + p->value.size(), dp.data());
        p->accumulate(dp);
      }
      g += p->value.size();
    }
  });
}

Var slice_channels(const Var& x, std::int64_t start, std::int64_t count) {
  if (x->value.ndim() < 1) fail(ErrorKind::shape_mismatch, "slice_channels expects [C,...]");
  const std::int64_t c = x->value.dim(0);
  if (start < 0 || count < 1 || start + count > c)
    fail(ErrorKind::shape_mismatch, "slice_channels: range out of bounds");
  const std::int64_t per = x->value.size() / c;
  Shape out_shape = x->value.shape();
  out_shape[0] = count;
  Tensor out(out_shape);
  std::copy(x->value.data() + start * per, x->value.data() + (start + count) * per, out.data());
  return make_node(std::move(out), {x}, [start, per](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor dx = Tensor::zeros(n.parents[0]->value.shape());
    std::copy(n.grad.data(), n.grad.data() + n.grad.size(), dx.data() + start * per);
    n.parents[0]->accumulate(dx);
  });
}

Var stack_time(const std::vector<Var>& xs) {
  if (xs.empty()) fail(ErrorKind::shape_mismatch, "stack_time of no tensors");
  for (const auto& x : xs) {
    if (x->value.ndim() != 3) fail(ErrorKind::shape_mismatch, "stack_time expects [C,H,W] maps");
    require_same_shape(xs[0]->value, x->value, "stack_time");
  }
  const std::int64_t c = xs[0]->value.dim(0), h = xs[0]->value.dim(1), w = xs[0]->value.dim(2);
  const std::int64_t l = static_cast<std::int64_t>(xs.size());
  const std::int64_t hw = h * w;
  Tensor out({c, l, h, w});
  for (std::int64_t t = 0; t < l; ++t) {
    const double* src = xs[static_cast<std::size_t>(t)]->value.data();
    for (std::int64_t ch = 0; ch < c; ++ch)
      std::copy(src + ch * hw, src + (ch + 1) * hw, out.data() + (ch * l + t) * hw);
  }
  return make_node(std::move(out), xs, [c, hw](Node& n) {
    const std::int64_t l = static_cast<std::int64_t>(n.parents.size());
    for (std::int64_t t = 0; t < l; ++t) {
      auto& p = n.parents[static_cast<std::size_t>(t)];
      if (!p->requires_grad) continue;
      Tensor dx(p->value.shape());
      for (std::int64_t ch = 0; ch < c; ++ch)
        std::copy(n.grad.data() + (ch * l + t) * hw, n.grad.data() + (ch * l + t + 1) * hw,
                  dx.data() + ch * hw);
      p->accumulate(dx);
    }
  });
}

Var spatial_broadcast(const Var& v, std::int64_t height, std::int64_t width) {
  if (v->value.ndim() != 1) fail(ErrorKind::shape_mismatch, "spatial_broadcast expects a vector");
  const std::int64_t d = v->value.dim(0);
  Tensor out({d, height, width});
  double* po = out.data();
  const std::int64_t hw = height * width;
  for (std::int64_t c = 0; c < d; ++c)
    for (std::int64_t i = 0; i < hw; ++i) po[c * hw + i] = v->value[c];
  return make_node(std::move(out), {v}, [hw](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    const std::int64_t d = n.parents[0]->value.dim(0);
    Tensor dv({d});
    const double* g = n.grad.data();
    for (std::int64_t c = 0; c < d; ++c) {
      double s = 0.0;
      for (std::int64_t i = 0; i < hw; ++i) s += g[c * hw + i];
      dv[c] = s;
    }
    n.parents[0]->accumulate(dv);
  });
}

Var stack_scalars(const std::vector<Var>& xs) {
  Tensor out({static_cast<std::int64_t>(xs.size())});
  for (std::size_t i = 0; i < xs.size(); ++i) out[static_cast<std::int64_t>(i)] = xs[i]->value.item();
  return make_node(std::move(out), xs, [](Node& n) {
    for (std::size_t i = 0; i < n.parents.size(); ++i)
      if (n.parents[i]->requires_grad)
        n.parents[i]->accumulate(Tensor::scalar(n.grad[static_cast<std::int64_t>(i)]));
  });
}

Var detach(const Var& a) { return constant(a->value); }

// ---------------------------------------------------------------------------
// neural net

Var linear(const Var& x, const Var& weight, const Var& bias) {
  if (x->value.ndim() != 1 || weight->value.ndim() != 2 || bias->value.ndim() != 1)
    fail(ErrorKind::shape_mismatch, "linear expects x[n], weight[m,n], bias[m]");
  const std::int64_t n_in = x->value.dim(0);
  const std::int64_t n_out = weight->value.dim(0);
  if (weight->value.dim(1) != n_in || bias->value.dim(0) != n_out)
    fail(ErrorKind::shape_mismatch, "linear: weight/bias shapes inconsistent with input");
  Tensor out({n_out});
  MapCM W(weight->value.data(), n_out, n_in);
  MapCV X(x->value.data(), n_in);
  MapV Y(out.data(), n_out);
  Y = W * X + MapCV(bias->value.data(), n_out);
  return make_node(std::move(out), {x, weight, bias}, [n_in, n_out](Node& n) {
    MapCV G(n.grad.data(), n_out);
    if (n.parents[0]->requires_grad) {
      Tensor dx({n_in});
      MapCM W(n.parents[1]->value.data(), n_out, n_in);
      MapV DX(dx.data(), n_in);
      DX = W.transpose() * G;
      n.parents[0]->accumulate(dx);
    }
    if (n.parents[1]->requires_grad) {
      Tensor dw({n_out, n_in});
      MapCV X(n.parents[0]->value.data(), n_in);
      MapM DW(dw.data(), n_out, n_in);
      DW = G * X.transpose();
      n.parents[1]->accumulate(dw);
    }
    if (n.parents[2]->requires_grad) n.parents[2]->accumulate(n.grad);
  });
}

namespace {

struct ConvDims {
  std::int64_t ci, ti, hi, wi;
  std::int64_t co, kt, kh, kw;
  std::int64_t to, ho, wo;
  std::array<int, 3> stride, pad;
  std::int64_t rows() const { return to * ho * wo; }
  std::int64_t cols() const { return ci * kt * kh * kw; }
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, std::array<int, 3> stride, std::array<int, 3> pad) {
  if (x.ndim() != 4 || w.ndim() != 5)
    fail(ErrorKind::shape_mismatch, "conv3d expects x[Ci,T,H,W], kernel[Co,Ci,kt,kh,kw]");
  ConvDims d;
  d.ci = x.dim(0);
  d.ti = x.dim(1);
  d.hi = x.dim(2);
  d.wi = x.dim(3);
  d.co = w.dim(0);
  d.kt = w.dim(2);
  d.kh = w.dim(3);
  d.kw = w.dim(4);
  if (w.dim(1) != d.ci)
    fail(ErrorKind::shape_mismatch, "conv3d: kernel input channels " + std::to_string(w.dim(1)) +
                                        " != input channels " + std::to_string(d.ci));
  d.stride = stride;
  d.pad = pad;
  for (int i = 0; i < 3; ++i)
    if (stride[i] < 1 || pad[i] < 0) fail(ErrorKind::invalid_spec, "conv3d: bad stride/pad");
  d.to = (d.ti + 2 * pad[0] - d.kt) / stride[0] + 1;
  d.ho = (d.hi + 2 * pad[1] - d.kh) / stride[1] + 1;
  d.wo = (d.wi + 2 * pad[2] - d.kw) / stride[2] + 1;
  if (d.to < 1 || d.ho < 1 || d.wo < 1)
    fail(ErrorKind::shape_mismatch, "conv3d: kernel larger than padded input");
  return d;
}

Tensor im2col(const Tensor& x, const ConvDims& d) {
  Tensor col({d.rows(), d.cols()});
  double* pc = col.data();
  const double* px = x.data();
  const std::int64_t x_t = d.hi * d.wi;
  const std::int64_t x_c = d.ti * x_t;
  std::int64_t r = 0;
  for (std::int64_t to = 0; to < d.to; ++to) {
    const std::int64_t t0 = to * d.stride[0] - d.pad[0];
    for (std::int64_t ho = 0; ho < d.ho; ++ho) {
      const std::int64_t h0 = ho * d.stride[1] - d.pad[1];
      for (std::int64_t wo = 0; wo < d.wo; ++wo, ++r) {
        const std::int64_t w0 = wo * d.stride[2] - d.pad[2];
        double* row = pc + r * d.cols();
        std::int64_t k = 0;
        for (std::int64_t c = 0; c < d.ci; ++c) {
          for (std::int64_t dt = 0; dt < d.kt; ++dt) {
            const std::int64_t t = t0 + dt;
            const bool t_ok = t >= 0 && t < d.ti;
            for (std::int64_t dh = 0; dh < d.kh; ++dh) {
              const std::int64_t h = h0 + dh;
              const bool h_ok = h >= 0 && h < d.hi;
              const double* src = px + c * x_c + t * x_t + h * d.wi;
              for (std::int64_t dw = 0; dw < d.kw; ++dw, ++k) {
                const std::int64_t wq = w0 + dw;
                row[k] = (t_ok && h_ok && wq >= 0 && wq < d.wi) ? src[wq] : 0.0;
              }
            }
          }
        }
      }
    }
  }
  return col;
}

void col2im_add(const Tensor& dcol, const ConvDims& d, Tensor& dx) {
  const double* pc = dcol.data();
  double* px = dx.data();
  const std::int64_t x_t = d.hi * d.wi;
  const std::int64_t x_c = d.ti * x_t;
  std::int64_t r = 0;
  for (std::int64_t to = 0; to < d.to; ++to) {
    const std::int64_t t0 = to * d.stride[0] - d.pad[0];
    for (std::int64_t ho = 0; ho < d.ho; ++ho) {
      const std::int64_t h0 = ho * d.stride[1] - d.pad[1];
      for (std::int64_t wo = 0; wo < d.wo; ++wo, ++r) {
        const std::int64_t w0 = wo * d.stride[2] - d.pad[2];
        const double* row = pc + r * d.cols();
        std::int64_t k = 0;
        for (std::int64_t c = 0; c < d.ci; ++c) {
          for (std::int64_t dt = 0; dt < d.kt; ++dt) {
            const std::int64_t t = t0 + dt;
            const bool t_ok = t >= 0 && t < d.ti;
            for (std::int64_t dh = 0; dh < d.kh; ++dh) {
              const std::int64_t h = h0 + dh;
              const bool h_ok = h >= 0 && h < d.hi;
              double* dst = px + c * x_c + t * x_t + h * d.wi;
              for (std::int64_t dw = 0; dw < d.kw; ++dw, ++k) {
                const std::int64_t wq = w0 + dw;
                if (t_ok && h_ok && wq >= 0 && wq < d.wi) dst[wq] += row[k];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace

Var conv3d(const Var& x, const Var& kernel, const Var& bias, std::array<int, 3> stride,
           std::array<int, 3> pad) {
  const ConvDims d = conv_dims(x->value, kernel->value, stride, pad);
  if (bias->value.ndim() != 1 || bias->value.dim(0) != d.co)
    fail(ErrorKind::shape_mismatch, "conv3d: bias must be [Co]");

  Tensor col = im2col(x->value, d);
  Tensor out({d.co, d.to, d.ho, d.wo});
  {
    MapCM W(kernel->value.data(), d.co, d.cols());
    MapCM C(col.data(), d.rows(), d.cols());
    MapM O(out.data(), d.co, d.rows());
    O.noalias() = W * C.transpose();
    O.colwise() += MapCV(bias->value.data(), d.co);
  }
  // col is kept for the adjoint (dW = dY * col).
  return make_node(std::move(out), {x, kernel, bias}, [d, col = std::move(col)](Node& n) {
    MapCM DY(n.grad.data(), d.co, d.rows());
    if (n.parents[1]->requires_grad) {
      Tensor dw(n.parents[1]->value.shape());
      MapM DW(dw.data(), d.co, d.cols());
      MapCM C(col.data(), d.rows(), d.cols());
      DW.noalias() = DY * C;
      n.parents[1]->accumulate(dw);
    }
    if (n.parents[2]->requires_grad) {
      Tensor db({d.co});
      for (std::int64_t c = 0; c < d.co; ++c) db[c] = DY.row(c).sum();
      n.parents[2]->accumulate(db);
    }
    if (n.parents[0]->requires_grad) {
      Tensor dcol({d.rows(), d.cols()});
      MapM DC(dcol.data(), d.rows(), d.cols());
      MapCM W(n.parents[1]->value.data(), d.co, d.cols());
      DC.noalias() = DY.transpose() * W;
      Tensor dx = Tensor::zeros(n.parents[0]->value.shape());
      col2im_add(dcol, d, dx);
      n.parents[0]->accumulate(dx);
    }
  });
}

Var conv2d(const Var& x, const Var& kernel, const Var& bias, std::array<int, 2> stride,
           std::array<int, 2> pad) {
  if (x->value.ndim() != 3 || kernel->value.ndim() != 4)
    fail(ErrorKind::shape_mismatch, "conv2d expects x[Ci,H,W], kernel[Co,Ci,kh,kw]");
  const auto& xs = x->value.shape();
  const auto& ks = kernel->value.shape();
  Var x4 = reshape(x, {xs[0], 1, xs[1], xs[2]});
  Var k5 = reshape(kernel, {ks[0], ks[1], 1, ks[2], ks[3]});
  Var out = conv3d(x4, k5, bias, {1, stride[0], stride[1]}, {0, pad[0], pad[1]});
  const auto& os = out->value.shape();
  return reshape(out, {os[0], os[2], os[3]});
}

Var avg_pool2(const Var& x) {
  if (x->value.ndim() != 3) fail(ErrorKind::shape_mismatch, "avg_pool2 expects [C,H,W]");
  const std::int64_t c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
  if (h % 2 || w % 2) fail(ErrorKind::shape_mismatch, "avg_pool2 needs even spatial dims");
  Tensor out({c, h / 2, w / 2});
  const double* px = x->value.data();
  double* po = out.data();
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t i = 0; i < h / 2; ++i)
      for (std::int64_t j = 0; j < w / 2; ++j) {
        const double* base = px + (ch * h + 2 * i) * w + 2 * j;
        po[(ch * (h / 2) + i) * (w / 2) + j] = 0.25 * (base[0] + base[1] + base[w] + base[w + 1]);
      }
  return make_node(std::move(out), {x}, [c, h, w](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor dx = Tensor::zeros({c, h, w});
    const double* g = n.grad.data();
    double* px = dx.data();
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t i = 0; i < h / 2; ++i)
        for (std::int64_t j = 0; j < w / 2; ++j) {
          const double q = 0.25 * g[(ch * (h / 2) + i) * (w / 2) + j];
          double* base = px + (ch * h + 2 * i) * w + 2 * j;
          base[0] += q;
          base[1] += q;
          base[w] += q;
          base[w + 1] += q;
        }
    n.parents[0]->accumulate(dx);
  });
}

namespace {

// Sample positions for x2 bilinear upsampling (half-pixel centers).
struct Lerp {
  std::vector<std::int64_t> i0, i1;
  std::vector<double> f;
};

Lerp lerp_axis(std::int64_t n_out, std::int64_t n_in) {
  Lerp l;
  l.i0.resize(n_out);
  l.i1.resize(n_out);
  l.f.resize(n_out);
  for (std::int64_t o = 0; o < n_out; ++o) {
    double u = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
    double fl = std::floor(u);
    std::int64_t i0 = static_cast<std::int64_t>(fl);
    double f = u - fl;
    l.i0[o] = std::clamp<std::int64_t>(i0, 0, n_in - 1);
    l.i1[o] = std::clamp<std::int64_t>(i0 + 1, 0, n_in - 1);
    l.f[o] = f;
  }
  return l;
}

}  // namespace

Var upsample2_bilinear(const Var& x) {
  if (x->value.ndim() != 3) fail(ErrorKind::shape_mismatch, "upsample2_bilinear expects [C,H,W]");
  const std::int64_t c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
  const std::int64_t ho = 2 * h, wo = 2 * w;
  const Lerp lh = lerp_axis(ho, h), lw = lerp_axis(wo, w);
  Tensor out({c, ho, wo});
  const double* px = x->value.data();
  double* po = out.data();
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const double* plane = px + ch * h * w;
    for (std::int64_t i = 0; i < ho; ++i) {
      const double fi = lh.f[i];
      const double* r0 = plane + lh.i0[i] * w;
      const double* r1 = plane + lh.i1[i] * w;
      for (std::int64_t j = 0; j < wo; ++j) {
        const double fj = lw.f[j];
        const double top = (1.0 - fj) * r0[lw.i0[j]] + fj * r0[lw.i1[j]];
        const double bot = (1.0 - fj) * r1[lw.i0[j]] + fj * r1[lw.i1[j]];
        po[(ch * ho + i) * wo + j] = (1.0 - fi) * top + fi * bot;
      }
    }
  }
  return make_node(std::move(out), {x}, [c, h, w, ho, wo, lh, lw](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor dx = Tensor::zeros({c, h, w});
    const double* g = n.grad.data();
    double* px = dx.data();
    for (std::int64_t ch = 0; ch < c; ++ch) {
      double* plane = px + ch * h * w;
      for (std::int64_t i = 0; i < ho; ++i) {
        const double fi = lh.f[i];
        double* r0 = plane + lh.i0[i] * w;
        double* r1 = plane + lh.i1[i] * w;
        for (std::int64_t j = 0; j < wo; ++j) {
          const double fj = lw.f[j];
          const double gv = g[(ch * ho + i) * wo + j];
          r0[lw.i0[j]] += (1.0 - fi) * (1.0 - fj) * gv;
          r0[lw.i1[j]] += (1.0 - fi) * fj * gv;
          r1[lw.i0[j]] += fi * (1.0 - fj) * gv;
          r1[lw.i1[j]] += fi * fj * gv;
        }
      }
    }
    n.parents[0]->accumulate(dx);
  });
}

Var global_mean_channels(const Var& x) {
  if (x->value.ndim() < 2) fail(ErrorKind::shape_mismatch, "global_mean_channels expects [C,...]");
  const std::int64_t c = x->value.dim(0);
  const std::int64_t per = x->value.size() / c;
  Tensor out({c});
  const double* px = x->value.data();
  for (std::int64_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::int64_t i = 0; i < per; ++i) s += px[ch * per + i];
    out[ch] = s / static_cast<double>(per);
  }
  return make_node(std::move(out), {x}, [c, per](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor dx(n.parents[0]->value.shape());
    double* px = dx.data();
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const double q = n.grad[ch] / static_cast<double>(per);
      for (std::int64_t i = 0; i < per; ++i) px[ch * per + i] = q;
    }
    n.parents[0]->accumulate(dx);
  });
}

Var channel_standardize(const Var& x, const Var& gain, const Var& offset, double eps) {
  if (x->value.ndim() < 2) fail(ErrorKind::shape_mismatch, "channel_standardize expects [C,...]");
  const std::int64_t c = x->value.dim(0);
  const std::int64_t per = x->value.size() / c;
  if (gain->value.size() != c || offset->value.size() != c)
    fail(ErrorKind::shape_mismatch, "channel_standardize: gain/offset must be [C]");

  Tensor xhat(x->value.shape());
  Tensor inv_std({c});
  Tensor out(x->value.shape());
  const double* px = x->value.data();
  double* ph = xhat.data();
  double* po = out.data();
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const double* src = px + ch * per;
    double mu = 0.0;
    for (std::int64_t i = 0; i < per; ++i) mu += src[i];
    mu /= static_cast<double>(per);
    double var = 0.0;
    for (std::int64_t i = 0; i < per; ++i) var += (src[i] - mu) * (src[i] - mu);
    var /= static_cast<double>(per);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[ch] = is;
    const double g = gain->value[ch], o = offset->value[ch];
    for (std::int64_t i = 0; i < per; ++i) {
      const double h = (src[i] - mu) * is;
      ph[ch * per + i] = h;
      po[ch * per + i] = g * h + o;
    }
  }
  return make_node(std::move(out), {x, gain, offset},
                   [c, per, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& n) {
                     const double* g = n.grad.data();
                     const double* ph = xhat.data();
                     if (n.parents[1]->requires_grad) {
                       Tensor dg({c});
                       for (std::int64_t ch = 0; ch < c; ++ch) {
                         double s = 0.0;
                         for (std::int64_t i = 0; i < per; ++i) s += g[ch * per + i] * ph[ch * per + i];
                         dg[ch] = s;
                       }
                       n.parents[1]->accumulate(dg);
                     }
                     if (n.parents[2]->requires_grad) {
                       Tensor doff({c});
                       for (std::int64_t ch = 0; ch < c; ++ch) {
                         double s = 0.0;
                         for (std::int64_t i = 0; i < per; ++i) s += g[ch * per + i];
                         doff[ch] = s;
                       }
                       n.parents[2]->accumulate(doff);
                     }
                     if (n.parents[0]->requires_grad) {
                       Tensor dx(n.parents[0]->value.shape());
                       double* px = dx.data();
                       const double pern = static_cast<double>(per);
                       for (std::int64_t ch = 0; ch < c; ++ch) {
                         const double gn = n.parents[1]->value[ch];
                         double sum_dh = 0.0, sum_dh_h = 0.0;
                         for (std::int64_t i = 0; i < per; ++i) {
                           const double dh = g[ch * per + i] * gn;
                           sum_dh += dh;
                           sum_dh_h += dh * ph[ch * per + i];
                         }
                         const double is = inv_std[ch];
                         for (std::int64_t i = 0; i < per; ++i) {
                           const double dh = g[ch * per + i] * gn;
                           px[ch * per + i] =
                               is * (dh - sum_dh / pern - ph[ch * per + i] * sum_dh_h / pern);
                         }
                       }
                       n.parents[0]->accumulate(dx);
                     }
                   });
}

Var softmax(const Var& x) {
  if (x->value.ndim() != 1) fail(ErrorKind::shape_mismatch, "softmax expects a vector");
  const std::int64_t n_el = x->value.dim(0);
  Tensor out({n_el});
  double mx = x->value.max();
  double z = 0.0;
  for (std::int64_t i = 0; i < n_el; ++i) {
    out[i] = std::exp(x->value[i] - mx);
    z += out[i];
  }
  for (std::int64_t i = 0; i < n_el; ++i) out[i] /= z;
  return make_node(std::move(out), {x}, [n_el](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    const double* y = n.value.data();
    const double* g = n.grad.data();
    double gy = 0.0;
    for (std::int64_t i = 0; i < n_el; ++i) gy += g[i] * y[i];
    Tensor dx({n_el});
    for (std::int64_t i = 0; i < n_el; ++i) dx[i] = y[i] * (g[i] - gy);
    n.parents[0]->accumulate(dx);
  });
}

Var weighted_sum(const Var& weights, const std::vector<Var>& maps) {
  if (weights->value.ndim() != 1 ||
      weights->value.dim(0) != static_cast<std::int64_t>(maps.size()))
    fail(ErrorKind::shape_mismatch, "weighted_sum: weight count must match map count");
  if (maps.empty()) fail(ErrorKind::shape_mismatch, "weighted_sum of no maps");
  Tensor out = Tensor::zeros(maps[0]->value.shape());
  for (std::size_t i = 0; i < maps.size(); ++i) {
    require_same_shape(out, maps[i]->value, "weighted_sum");
    out.add_(maps[i]->value, weights->value[static_cast<std::int64_t>(i)]);
  }
  std::vector<Var> parents{weights};
  parents.insert(parents.end(), maps.begin(), maps.end());
  return make_node(std::move(out), std::move(parents), [](Node& n) {
    const Var& w = n.parents[0];
    const std::size_t count = n.parents.size() - 1;
    if (w->requires_grad) {
      Tensor dw({static_cast<std::int64_t>(count)});
      for (std::size_t i = 0; i < count; ++i) {
        const Tensor& m = n.parents[i + 1]->value;
        double s = 0.0;
        for (std::int64_t k = 0; k < m.size(); ++k) s += n.grad[k] * m[k];
        dw[static_cast<std::int64_t>(i)] = s;
      }
      w->accumulate(dw);
    }
    for (std::size_t i = 0; i < count; ++i) {
      if (!n.parents[i + 1]->requires_grad) continue;
      Tensor dm = n.grad;
      dm.scale_(w->value[static_cast<std::int64_t>(i)]);
      n.parents[i + 1]->accumulate(dm);
    }
  });
}

}  // namespace framecast
