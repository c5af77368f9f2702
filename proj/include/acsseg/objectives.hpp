#pragma once

// BCE + Dice with deep supervision over the five prediction scales.

#include <array>
#include <vector>

#include "acsseg/data_model.hpp"
#include "acsseg/decoder_net.hpp"

namespace acsseg {

struct LossConfig {
  double bce_weight = 1.0;
  double dice_weight = 1.0;
  double smooth = 1.0;
  // Weights for scales s5..s1.
  std::array<double, 5> scale_weights{1, 1, 1, 1, 1};

  // Throws ConfigError on negative weights, non-positive smoothing, or
  // bce_weight == dice_weight == 0.
  void validate() const;
};

struct ScaleLoss {
  double bce = 0.0;
  double dice = 0.0;
};

struct LossBreakdown {
  double total = 0.0;
  // Scales s5..s1.
  std::array<ScaleLoss, 5> per_scale{};
};

template <typename T>
struct LossResult {
  Var<T> total;
  LossBreakdown breakdown;
};

// Mean stable binary cross entropy.
template <typename T>
Var<T> bce_loss(const Var<T>& logits, const Tensor<T>& target) {
  return ops::bce_with_logits(logits, target);
}

// 1 - (2 sum(p t) + eps) / (sum p + sum t + eps), per batch item, averaged.
template <typename T>
Var<T> dice_loss(const Var<T>& logits, const Tensor<T>& target, T eps) {
  return ops::dice_loss(logits, target, eps);
}

// Stacks masks into N x 1 x H x W.
template <typename T>
Tensor<T> mask_batch(const std::vector<const BinaryMask*>& masks);

// Scale s (0..3) is supervised with the nearest-neighbour downsampled mask at
// the logits' resolution; scale s1 is supervised at input resolution through
// the final map. `masks` is N x 1 x H x W at input resolution.
template <typename T>
LossResult<T> deep_supervised_loss(const MultiScalePredictions<T>& preds, const Tensor<T>& masks,
                                   const LossConfig& cfg);

}  // namespace acsseg
