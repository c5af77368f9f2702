#pragma once

// Module tree with named parameters and buffers, plus the basic layers the
// network is built from.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "acsseg/autograd.hpp"
#include "acsseg/ops.hpp"
#include "acsseg/tensor.hpp"

namespace acsseg::nn {

enum class NormKind { Batch, Group };

using InitRng = std::mt19937_64;

template <typename T>
struct ParamRef {
  std::string name;
  Var<T>* var;
  bool decay;  // false for normalization scale/shift
};

template <typename T>
struct BufferRef {
  std::string name;
  Tensor<T>* tensor;
};

template <typename T>
class Module {
 public:
  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;
  virtual ~Module() = default;

  std::vector<ParamRef<T>> parameters() const {
    std::vector<ParamRef<T>> out;
    collect_parameters("", out);
    return out;
  }

  std::vector<BufferRef<T>> buffers() const {
    std::vector<BufferRef<T>> out;
    collect_buffers("", out);
    return out;
  }

  void set_training(bool on) {
    training_ = on;
    for (auto& [name, child] : children_) child->set_training(on);
  }
  bool training() const noexcept { return training_; }

  void zero_grad() {
    for (auto& p : parameters()) p.var->zero_grad();
  }

 protected:
  Var<T>& register_parameter(std::string name, Tensor<T> init, bool decay = true) {
    params_.push_back({std::move(name), std::make_unique<Var<T>>(std::move(init), true), decay});
    return *params_.back().var;
  }

  Tensor<T>& register_buffer(std::string name, Tensor<T> init) {
    buffers_.emplace_back(std::move(name), std::make_unique<Tensor<T>>(std::move(init)));
    return *buffers_.back().second;
  }

  template <typename M>
  M& register_module(std::string name, std::unique_ptr<M> module) {
    M& ref = *module;
    children_.emplace_back(std::move(name), std::move(module));
    return ref;
  }

 private:
  struct OwnedParam {
    std::string name;
    std::unique_ptr<Var<T>> var;
    bool decay;
  };

  static std::string join(const std::string& prefix, const std::string& name) {
    return prefix.empty() ? name : prefix + "." + name;
  }

  void collect_parameters(const std::string& prefix, std::vector<ParamRef<T>>& out) const {
    for (const auto& p : params_) out.push_back({join(prefix, p.name), p.var.get(), p.decay});
    for (const auto& [name, child] : children_) child->collect_parameters(join(prefix, name), out);
  }

  void collect_buffers(const std::string& prefix, std::vector<BufferRef<T>>& out) const {
    for (const auto& [name, buf] : buffers_) out.push_back({join(prefix, name), buf.get()});
    for (const auto& [name, child] : children_) child->collect_buffers(join(prefix, name), out);
  }

  std::vector<OwnedParam> params_;
  std::vector<std::pair<std::string, std::unique_ptr<Tensor<T>>>> buffers_;
  std::vector<std::pair<std::string, std::unique_ptr<Module>>> children_;
  bool training_ = true;
};

// Module whose only role is to group named children, e.g. "layer1.0".
template <typename T>
class Container : public Module<T> {
 public:
  template <typename M>
  M& add(std::string name, std::unique_ptr<M> m) {
    return this->register_module(std::move(name), std::move(m));
  }
};

// Kaiming-normal initialization in fan-out mode: std = sqrt(2 / (out * k * k)).
template <typename T>
Tensor<T> kaiming_fan_out(const Shape& shape, InitRng& rng) {
  const double fan_out = static_cast<double>(shape[0] * (shape.size() > 2 ? shape[2] * shape[3] : 1));
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_out));
  Tensor<T> t(shape);
  for (auto& v : t.span()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
class Conv2d : public Module<T> {
 public:
  Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t pad, bool bias,
         InitRng& rng)
      : in_(in), out_(out), stride_(stride), pad_(pad) {
    weight_ = &this->register_parameter("weight", kaiming_fan_out<T>({out, in, kernel, kernel}, rng));
    if (bias) bias_ = &this->register_parameter("bias", Tensor<T>({out}));
  }

  Var<T> forward(const Var<T>& x) const {
    return ops::conv2d(x, *weight_, bias_ ? *bias_ : Var<T>(), stride_, pad_);
  }

  Var<T>& weight() { return *weight_; }
  Var<T>* bias() { return bias_; }
  std::size_t in_channels() const noexcept { return in_; }
  std::size_t out_channels() const noexcept { return out_; }

 private:
  std::size_t in_, out_, stride_, pad_;
  Var<T>* weight_ = nullptr;
  Var<T>* bias_ = nullptr;
};

// Largest group count <= 8 dividing the channel count.
inline std::size_t default_groups(std::size_t channels) {
  for (std::size_t g = 8; g > 1; --g)
    if (channels % g == 0) return g;
  return 1;
}

template <typename T>
class Norm2d : public Module<T> {
 public:
  Norm2d(std::size_t channels, NormKind kind) : kind_(kind), groups_(default_groups(channels)) {
    gamma_ = &this->register_parameter("weight", Tensor<T>({channels}, T{1}), false);
    beta_ = &this->register_parameter("bias", Tensor<T>({channels}), false);
    if (kind_ == NormKind::Batch) {
      running_mean_ = &this->register_buffer("running_mean", Tensor<T>({channels}));
      running_var_ = &this->register_buffer("running_var", Tensor<T>({channels}, T{1}));
    }
  }

  Var<T> forward(const Var<T>& x) const {
    if (kind_ == NormKind::Group) return ops::group_norm(x, *gamma_, *beta_, groups_, T(1e-5));
    return ops::batch_norm(x, *gamma_, *beta_, *running_mean_, *running_var_, this->training(), T(0.1), T(1e-5));
  }

 private:
  NormKind kind_;
  std::size_t groups_;
  Var<T>* gamma_ = nullptr;
  Var<T>* beta_ = nullptr;
  Tensor<T>* running_mean_ = nullptr;
  Tensor<T>* running_var_ = nullptr;
};

// Conv (no bias) -> norm -> ReLU.
template <typename T>
class ConvNormRelu : public Module<T> {
 public:
  ConvNormRelu(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, NormKind norm,
               InitRng& rng)
      : conv_(this->register_module("conv", std::make_unique<Conv2d<T>>(in, out, kernel, stride, kernel / 2, false,
                                                                          rng))),
        norm_(this->register_module("norm", std::make_unique<Norm2d<T>>(out, norm))) {}

  Var<T> forward(const Var<T>& x) const { return ops::relu(norm_.forward(conv_.forward(x))); }

 private:
  Conv2d<T>& conv_;
  Norm2d<T>& norm_;
};

struct InventoryEntry {
  std::string name;
  Shape shape;
  bool trainable = true;

  friend bool operator==(const InventoryEntry&, const InventoryEntry&) = default;
};

// Canonical (name-sorted) list of every parameter and buffer of a module.
template <typename T>
std::vector<InventoryEntry> inventory_of(const Module<T>& module) {
  std::vector<InventoryEntry> out;
  for (const auto& p : module.parameters()) out.push_back({p.name, p.var->shape(), true});
  for (const auto& b : module.buffers()) out.push_back({b.name, b.tensor->shape(), false});
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  return out;
}

}  // namespace acsseg::nn
