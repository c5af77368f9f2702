#pragma once

// The assembled segmentation network: encoder, five supervised decoder
// blocks, local context attention on skips, global context and adaptive
// selection fusion, selectable per ablation.

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "acsseg/context_blocks.hpp"
#include "acsseg/data_model.hpp"
#include "acsseg/encoder.hpp"

namespace acsseg {

enum class Ablation { Baseline, Lca, LcaGcm, Full };

std::string to_string(Ablation a);
Ablation ablation_from_string(const std::string& s);

struct DecoderConfig {
  // Block widths d5..d1.
  std::array<std::size_t, 5> block_channels{128, 64, 32, 32, 16};
  std::size_t gcm_branch_channels = 16;
  std::size_t se_reduction = 4;
  Ablation ablation = Ablation::Full;

  static DecoderConfig for_variant(EncoderVariant variant, Ablation ablation);
};

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  double lca_threshold = 0.5;

  static ModelConfig make(EncoderVariant variant, Ablation ablation, nn::NormKind norm = nn::NormKind::Batch);
};

// Channel bookkeeping of one decoder block (index 0 is block 5).
struct BlockPlan {
  std::size_t prev = 0;     // upsampled previous block (0 for block 5)
  std::size_t skip = 0;     // encoder feature, after LCA when enabled
  std::size_t context = 0;  // GCM channels fed to the block
  std::size_t in = 0;       // channels entering the block (before any ASM projection)
  std::size_t out = 0;
};

// Throws ConfigError when the plan is inconsistent (zero widths, odd widths
// where a non-local block is required, audit failure).
std::vector<BlockPlan> channel_plan(const ModelConfig& cfg);

template <typename T>
struct MultiScalePredictions {
  // logits[0..4] at strides 32, 16, 8, 4, 2 (blocks 5..1).
  std::array<Var<T>, 5> logits;
  // Bilinear x2 of logits[4], at input resolution.
  Var<T> final;
  // Attention maps of LCA1..LCA4 (empty for ablations without LCA).
  std::array<Tensor<T>, 4> attention;
};

template <typename T>
struct ForwardOptions {
  // Replaces the computed LCA attention maps (index k is LCA k+1).
  const std::array<Tensor<T>, 4>* attention_override = nullptr;
};

template <typename T>
class AcsNet : public nn::Module<T> {
 public:
  AcsNet(const ModelConfig& cfg, nn::InitRng& rng);

  // images: N x 3 x H x W with H, W divisible by 32.
  MultiScalePredictions<T> forward(const Var<T>& images, const ForwardOptions<T>& opts = {}) const;
  // Sigmoid of the full-resolution logits without building a graph.
  Tensor<T> predict_probability(const Tensor<T>& images) const;

  const ModelConfig& config() const noexcept { return cfg_; }
  const std::vector<BlockPlan>& plan() const noexcept { return plan_; }
  Encoder<T>& encoder() { return *encoder_; }
  nn::Conv2d<T>& head(std::size_t block) { return *heads_.at(5 - block); }

 private:
  ModelConfig cfg_;
  std::vector<BlockPlan> plan_;
  Encoder<T>* encoder_;
  Gcm<T>* gcm_ = nullptr;
  NonLocal<T>* nl5_ = nullptr;
  std::array<Lca<T>*, 4> lca_{};
  std::array<Asm<T>*, 4> asm_{};
  std::array<nn::ConvNormRelu<T>*, 5> conv1_{};
  std::array<nn::ConvNormRelu<T>*, 5> conv2_{};
  std::array<nn::Conv2d<T>*, 5> heads_{};
};

template <typename T>
std::unique_ptr<AcsNet<T>> build_model(const ModelConfig& cfg, std::uint64_t seed) {
  nn::InitRng rng(seed);
  return std::make_unique<AcsNet<T>>(cfg, rng);
}

// Binarizes sigmoid(final logits) >= threshold at the image resolution.
template <typename T>
BinaryMask predict_mask(const AcsNet<T>& model, const ImageTensor& image, double threshold);

// Stacks images into an N x 3 x H x W tensor.
template <typename T>
Tensor<T> image_batch(const std::vector<const ImageTensor*>& images);

}  // namespace acsseg
