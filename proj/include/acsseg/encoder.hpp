#pragma once

// Five-stage residual encoder (ResNet34 layout or a tiny desk-scale variant).

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "acsseg/archive.hpp"
#include "acsseg/nn.hpp"
#include "acsseg/state.hpp"

namespace acsseg {

enum class EncoderVariant { ResNet34Shape, Tiny };

std::string to_string(EncoderVariant v);
EncoderVariant encoder_variant_from_string(const std::string& s);

struct EncoderConfig {
  EncoderVariant variant = EncoderVariant::Tiny;
  std::array<std::size_t, 5> stage_channels{16, 32, 64, 128, 256};
  nn::NormKind norm = nn::NormKind::Batch;

  static EncoderConfig for_variant(EncoderVariant variant, nn::NormKind norm = nn::NormKind::Batch);
  // Throws std::invalid_argument when stage_channels do not match the variant.
  void validate() const;
};

// Encoder outputs f1..f5 at strides 2, 4, 8, 16, 32 (index 0 is f1).
template <typename T>
struct StageFeatures {
  std::array<Var<T>, 5> stages;
  const Var<T>& operator[](std::size_t i) const { return stages[i]; }
};

template <typename T>
class BasicBlock : public nn::Module<T> {
 public:
  BasicBlock(std::size_t in, std::size_t out, std::size_t stride, nn::NormKind norm, nn::InitRng& rng);
  Var<T> forward(const Var<T>& x) const;

 private:
  nn::Conv2d<T>* conv1_;
  nn::Norm2d<T>* bn1_;
  nn::Conv2d<T>* conv2_;
  nn::Norm2d<T>* bn2_;
  nn::Conv2d<T>* down_conv_ = nullptr;
  nn::Norm2d<T>* down_norm_ = nullptr;
};

template <typename T>
class Encoder : public nn::Module<T> {
 public:
  Encoder(const EncoderConfig& cfg, nn::InitRng& rng);

  // images: N x 3 x H x W with H, W divisible by 32.
  StageFeatures<T> forward(const Var<T>& images) const;
  const EncoderConfig& config() const noexcept { return cfg_; }

 private:
  EncoderConfig cfg_;
  nn::Conv2d<T>* stem_conv_;
  nn::Norm2d<T>* stem_norm_;
  std::array<std::vector<BasicBlock<T>*>, 4> layers_;
};

// Canonical sorted (name, shape) list, names local to the encoder
// (torchvision-compatible, e.g. "conv1.weight", "layer2.0.downsample.0.weight").
std::vector<nn::InventoryEntry> parameter_inventory(const EncoderConfig& cfg);

// Loads encoder weights bit-exactly from an archive keyed by inventory names.
template <typename T>
ImportReport import_weights(Encoder<T>& encoder, const TensorArchive& archive) {
  return import_state(encoder, archive);
}

}  // namespace acsseg
