#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "framecast/autograd.hpp"
#include "framecast/rng.hpp"
#include "framecast/tensor.hpp"

namespace framecast {

// Named learnable tensor. Gradients accumulate in `grad` between zero_grad()
// and the optimizer step; `var()` places the current value on the tape.
class Parameter {
 public:
  Parameter(std::string name, Shape shape) : name_(std::move(name)), value_(shape), grad_(shape) {}

  const std::string& name() const { return name_; }
  Tensor& value() { return value_; }
  const Tensor& value() const { return value_; }
  Tensor& grad() { return grad_; }
  const Tensor& grad() const { return grad_; }

  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }

  // Tape leaf for this parameter. Repeated calls within one graph share the
  // node, so gradient contributions accumulate; harvest() moves them here.
  // Inference calls (grad recording off) get a throwaway node so they cannot
  // pin a gradient-dead leaf into a later taped pass.
  Var var() {
    if (!grad_enabled()) return leaf(value_, false);
    if (!live_) live_ = leaf(value_, !frozen_);
    return live_;
  }

  void harvest() {
    if (live_ && !live_->grad.empty()) grad_.add_(live_->grad);
    live_.reset();
  }

  void zero_grad() {
    grad_.fill(0.0);
    live_.reset();
  }

 private:
  std::string name_;
  Tensor value_;
  Tensor grad_;
  bool frozen_ = false;
  Var live_;
};

enum class Init { zeros, ones, fanin_uniform };

// Creation-ordered registry of parameters; the order fixes serialization,
// digesting, and optimizer traversal.
class ParamSet {
 public:
  Parameter& create(const std::string& name, Shape shape, Init init, RngStream* rng = nullptr);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  Parameter& require(const std::string& name);

  const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }
  std::int64_t count() const { return static_cast<std::int64_t>(params_.size()); }
  std::int64_t numel() const;

  void zero_grad();
  void harvest();
  void freeze_all();

  // FNV-1a over (name, raw value bits) in creation order.
  std::uint64_t value_digest() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  void step(const std::vector<Parameter*>& params);

  struct Slot {
    Tensor m, v;
  };

  std::int64_t step_count() const { return t_; }
  void set_step_count(std::int64_t t) { t_ = t; }
  const std::map<std::string, Slot>& slots() const { return slots_; }
  void restore_slot(const std::string& name, Tensor m, Tensor v);

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::map<std::string, Slot> slots_;
};

}  // namespace framecast
