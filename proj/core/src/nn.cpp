#include "framecast/nn.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "framecast/digest.hpp"

namespace framecast {

std::string digest_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

Parameter& ParamSet::create(const std::string& name, Shape shape, Init init, RngStream* rng) {
  if (index_.count(name)) fail(ErrorKind::misuse, "duplicate parameter name: " + name);
  params_.push_back(std::make_unique<Parameter>(name, shape));
  index_[name] = params_.size() - 1;
  Parameter& p = *params_.back();
  switch (init) {
    case Init::zeros:
      break;
    case Init::ones:
      p.value().fill(1.0);
      break;
    case Init::fanin_uniform: {
      if (!rng) fail(ErrorKind::misuse, "fanin_uniform init needs an rng stream");
      // fan-in = receptive elements per output unit: trailing dims of the shape.
      std::int64_t fan_in = p.value().ndim() >= 2 ? p.value().size() / p.value().dim(0) : p.value().size();
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (std::int64_t i = 0; i < p.value().size(); ++i) p.value()[i] = rng->uniform(-bound, bound);
      break;
    }
  }
  return p;
}

Parameter* ParamSet::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : params_[it->second].get();
}

const Parameter* ParamSet::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : params_[it->second].get();
}

Parameter& ParamSet::require(const std::string& name) {
  Parameter* p = find(name);
  if (!p) fail(ErrorKind::misuse, "unknown parameter: " + name);
  return *p;
}

std::int64_t ParamSet::numel() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p->value().size();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

void ParamSet::harvest() {
  for (auto& p : params_) p->harvest();
}

void ParamSet::freeze_all() {
  for (auto& p : params_) p->freeze();
}

std::uint64_t ParamSet::value_digest() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& p : params_) {
    h = fnv1a64(p->name(), h);
    h = fnv1a64(p->value(), h);
  }
  return h;
}

void Adam::step(const std::vector<Parameter*>& params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Parameter* p : params) {
    if (p->frozen()) continue;
    auto [it, fresh] = slots_.try_emplace(p->name());
    Slot& s = it->second;
    if (fresh) {
      s.m = Tensor::zeros(p->value().shape());
      s.v = Tensor::zeros(p->value().shape());
    }
    const Tensor& g = p->grad();
    Tensor& val = p->value();
    for (std::int64_t i = 0; i < val.size(); ++i) {
      s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g[i];
      s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      val[i] -= cfg_.lr * (s.m[i] / bc1) / (std::sqrt(s.v[i] / bc2) + cfg_.eps);
    }
  }
}

void Adam::restore_slot(const std::string& name, Tensor m, Tensor v) {
  Slot& s = slots_[name];
  s.m = std::move(m);
  s.v = std::move(v);
}

}  // namespace framecast
