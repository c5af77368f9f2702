#include "acsseg/encoder.hpp"

#include <stdexcept>

namespace acsseg {
namespace {

struct StagePlan {
  std::size_t stem_kernel;
  std::size_t stem_pad;
  bool max_pool;
  std::array<std::size_t, 4> blocks;
  std::array<std::size_t, 4> first_stride;
};

StagePlan plan_for(EncoderVariant v) {
  if (v == EncoderVariant::ResNet34Shape) return {7, 3, true, {3, 4, 6, 3}, {1, 2, 2, 2}};
  return {3, 1, false, {2, 2, 2, 2}, {2, 2, 2, 2}};
}

}  // namespace

std::string to_string(EncoderVariant v) { return v == EncoderVariant::ResNet34Shape ? "resnet34_shape" : "tiny"; }

EncoderVariant encoder_variant_from_string(const std::string& s) {
  if (s == "resnet34_shape") return EncoderVariant::ResNet34Shape;
  if (s == "tiny") return EncoderVariant::Tiny;
  throw std::invalid_argument("unknown encoder variant '" + s + "'");
}

EncoderConfig EncoderConfig::for_variant(EncoderVariant variant, nn::NormKind norm) {
  EncoderConfig cfg;
  cfg.variant = variant;
  cfg.norm = norm;
  cfg.stage_channels = variant == EncoderVariant::ResNet34Shape ? std::array<std::size_t, 5>{64, 64, 128, 256, 512}
                                                                : std::array<std::size_t, 5>{16, 32, 64, 128, 256};
  return cfg;
}

void EncoderConfig::validate() const {
  if (stage_channels != for_variant(variant).stage_channels) {
    throw std::invalid_argument("stage_channels do not match encoder variant " + to_string(variant));
  }
}

template <typename T>
BasicBlock<T>::BasicBlock(std::size_t in, std::size_t out, std::size_t stride, nn::NormKind norm,
                          nn::InitRng& rng) {
  conv1_ = &this->register_module("conv1", std::make_unique<nn::Conv2d<T>>(in, out, 3, stride, 1, false, rng));
  bn1_ = &this->register_module("bn1", std::make_unique<nn::Norm2d<T>>(out, norm));
  conv2_ = &this->register_module("conv2", std::make_unique<nn::Conv2d<T>>(out, out, 3, 1, 1, false, rng));
  bn2_ = &this->register_module("bn2", std::make_unique<nn::Norm2d<T>>(out, norm));
  if (stride != 1 || in != out) {
    auto& down = this->register_module("downsample", std::make_unique<nn::Container<T>>());
    down_conv_ = &down.add("0", std::make_unique<nn::Conv2d<T>>(in, out, 1, stride, 0, false, rng));
    down_norm_ = &down.add("1", std::make_unique<nn::Norm2d<T>>(out, norm));
  }
}

template <typename T>
Var<T> BasicBlock<T>::forward(const Var<T>& x) const {
  Var<T> y = ops::relu(bn1_->forward(conv1_->forward(x)));
  y = bn2_->forward(conv2_->forward(y));
  Var<T> shortcut = down_conv_ ? down_norm_->forward(down_conv_->forward(x)) : x;
  return ops::relu(ops::add(y, shortcut));
}

template <typename T>
Encoder<T>::Encoder(const EncoderConfig& cfg, nn::InitRng& rng) : cfg_(cfg) {
  cfg_.validate();
  const StagePlan plan = plan_for(cfg_.variant);
  const auto& ch = cfg_.stage_channels;
  stem_conv_ = &this->register_module(
      "conv1", std::make_unique<nn::Conv2d<T>>(3, ch[0], plan.stem_kernel, 2, plan.stem_pad, false, rng));
  stem_norm_ = &this->register_module("bn1", std::make_unique<nn::Norm2d<T>>(ch[0], cfg_.norm));
  for (std::size_t layer = 0; layer < 4; ++layer) {
    auto& container = this->register_module("layer" + std::to_string(layer + 1), std::make_unique<nn::Container<T>>());
    std::size_t in = ch[layer];
    for (std::size_t b = 0; b < plan.blocks[layer]; ++b) {
      const std::size_t stride = b == 0 ? plan.first_stride[layer] : 1;
      layers_[layer].push_back(&container.add(
          std::to_string(b), std::make_unique<BasicBlock<T>>(in, ch[layer + 1], stride, cfg_.norm, rng)));
      in = ch[layer + 1];
    }
  }
}

template <typename T>
StageFeatures<T> Encoder<T>::forward(const Var<T>& images) const {
  const Dims4 d = images.value().dims4();
  if (d.c != 3) throw std::invalid_argument("encoder expects 3 input channels, got " + std::to_string(d.c));
  if (d.h == 0 || d.w == 0 || d.h % 32 != 0 || d.w % 32 != 0) {
    throw std::invalid_argument("input size " + std::to_string(d.h) + "x" + std::to_string(d.w) +
                                " is not divisible by 32");
  }
  StageFeatures<T> out;
  out.stages[0] = ops::relu(stem_norm_->forward(stem_conv_->forward(images)));
  Var<T> x = out.stages[0];
  if (plan_for(cfg_.variant).max_pool) x = ops::max_pool2d(x, 3, 2, 1);
  for (std::size_t layer = 0; layer < 4; ++layer) {
    for (const auto* block : layers_[layer]) x = block->forward(x);
    out.stages[layer + 1] = x;
  }
  return out;
}

std::vector<nn::InventoryEntry> parameter_inventory(const EncoderConfig& cfg) {
  nn::InitRng rng(0);
  const Encoder<float> encoder(cfg, rng);
  return nn::inventory_of(encoder);
}

template class BasicBlock<float>;
template class BasicBlock<double>;
template class BasicBlock<long double>;
template class Encoder<float>;
template class Encoder<double>;
template class Encoder<long double>;

}  // namespace acsseg
